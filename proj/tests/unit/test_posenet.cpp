#include <gtest/gtest.h>

#include "sealpose/errors.hpp"
#include "sealpose/gradcheck.hpp"
#include "sealpose/posenet.hpp"
#include "test_support.hpp"

using namespace sealpose;
using sealpose::testing::max_grad_error;
using sealpose::testing::random_matrix;

TEST(PoseNet, ParameterCount) {
  // Hand count for J=17, w=256, two blocks:
  //   input 34*256+256, blocks 2*2*(256*256+256), output 256*48+48.
  EXPECT_EQ(posenet_param_count(17, 256, 2), 8960u + 263168u + 12336u);
  for (int blocks : {0, 1, 3}) {
    PoseNetConfig c;
    c.hidden_width = 16;
    c.n_blocks = blocks;
    EXPECT_EQ(init_posenet(c, 9).total_size(), posenet_param_count(9, 16, blocks));
  }
}

TEST(PoseNet, RootIsExactlyZeroAndDeterministic) {
  PoseNetConfig c;
  c.hidden_width = 32;
  const ParamStore p = init_posenet(c, 17);
  Rng rng(4);
  const Matrix x = random_matrix(8, 34, rng);
  for (int root : {0, 5}) {
    const Matrix y = posenet_predict(p, c, 17, root, x);
    ASSERT_EQ(y.rows(), 8);
    ASSERT_EQ(y.cols(), 51);
    EXPECT_TRUE(y.middleCols(3 * root, 3).isZero(0.0));
    EXPECT_TRUE(y == posenet_predict(p, c, 17, root, x));
  }
}

TEST(PoseNet, ZeroWeightsGiveZeroPose) {
  PoseNetConfig c;
  c.hidden_width = 8;
  ParamStore p = init_posenet(c, 5);
  for (auto& e : p.entries()) e.value.setZero();
  Rng rng(2);
  EXPECT_TRUE(posenet_predict(p, c, 5, 0, random_matrix(3, 10, rng)).isZero(0.0));
}

TEST(PoseNet, ShapeMismatchIsContractError) {
  PoseNetConfig c;
  c.hidden_width = 8;
  const ParamStore p = init_posenet(c, 5);
  EXPECT_THROW(posenet_predict(p, c, 5, 0, Matrix::Zero(1, 9)), ContractError);
}

TEST(PoseNet, InputJacobianMatchesFiniteDifferences) {
  PoseNetConfig c;
  c.hidden_width = 16;
  const ParamStore p = init_posenet(c, 6);
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const double err = max_grad_error(
        [&](ad::Tape& t, const std::vector<ad::Var>& v) {
          ParamBinding b(t, p, false);
          return posenet_forward(b, c, 6, 0, v[0]);
        },
        {random_matrix(2, 12, rng)}, rng);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(PoseNet, ParameterGradientsMatchFiniteDifferences) {
  PoseNetConfig c;
  c.hidden_width = 6;
  c.n_blocks = 1;
  const ParamStore p = init_posenet(c, 4);
  Rng rng(9);
  const Matrix x = random_matrix(3, 8, rng);
  const Matrix w = random_matrix(3, 12, rng);
  const auto r = finite_diff_check(
      [&](ad::Tape& t, const ParamBinding& b) {
        return ad::sum(ad::cwise_mul(posenet_forward(b, c, 4, 0, t.constant(x)), t.constant(w)));
      },
      p, 1e-6);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_parameter;
}

TEST(PoseNet, JsonRoundTrip) {
  PoseNetConfig c;
  c.hidden_width = 77;
  c.n_blocks = 3;
  c.seed = 12;
  const PoseNetConfig b = posenet_from_json(to_json(c));
  EXPECT_EQ(b.hidden_width, 77);
  EXPECT_EQ(b.n_blocks, 3);
  EXPECT_EQ(b.seed, 12u);
}
