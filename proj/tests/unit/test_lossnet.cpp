#include <numeric>

#include <gtest/gtest.h>

#include "sealpose/errors.hpp"
#include "sealpose/gradcheck.hpp"
#include "sealpose/lossnet.hpp"
#include "test_support.hpp"

using namespace sealpose;
using sealpose::testing::max_grad_error;
using sealpose::testing::random_matrix;

namespace {

SkeletonSpec small_tree() {
  SkeletonSpec s;
  s.joint_names = {"r", "a", "b", "c", "d"};
  s.edges = {{0, 1}, {1, 2}, {0, 3}, {3, 4}};
  s.symmetry_pairs = {{0, 2}};
  s.limb_segments = {1, 3};
  return s;
}

LossNetConfig tiny(LossNetVariant v, Mechanism m) {
  LossNetConfig c;
  c.variant = v;
  c.mechanism = m;
  c.d_embed = 4;
  c.d_model = 4;
  c.heads = 2;
  c.depth = 1;
  c.ffn_width = 6;
  c.head_hidden = 5;
  c.mlp_hidden = 6;
  c.mlp_blocks = 1;
  c.local_width = 3;
  c.seed = 3;
  return c;
}

constexpr Mechanism kAll[] = {Mechanism::kM1, Mechanism::kM2, Mechanism::kM3, Mechanism::kM4};
constexpr LossNetVariant kVariants[] = {LossNetVariant::kMlp, LossNetVariant::kGraph};

}  // namespace

TEST(LossNet, NodeFeatureLayouts) {
  const SkeletonSpec s = SkeletonSpec::canonical17();
  Rng rng(1);
  const Matrix x = random_matrix(17, 2, rng), y = random_matrix(17, 3, rng);
  const NodeFeatureSet m1 = build_node_features(Mechanism::kM1, x, y, s);
  const NodeFeatureSet m3 = build_node_features(Mechanism::kM3, x, y, s);
  const NodeFeatureSet m2 = build_node_features(Mechanism::kM2, x, y, s);
  EXPECT_EQ(m1.width(), 20);
  EXPECT_EQ(m3.width(), 22);
  EXPECT_EQ(m2.two_d.cols(), 19);
  EXPECT_EQ(m2.three_d.cols(), 20);
  for (int j = 0; j < 17; ++j) {
    const auto onehot = m3.fused.row(j).tail(17);
    EXPECT_EQ(onehot.sum(), 1.0);
    EXPECT_EQ(onehot(j), 1.0);
  }
  EXPECT_TRUE(m3.fused.leftCols(2) == x);
  EXPECT_TRUE(m3.fused.middleCols(2, 3) == y);
  EXPECT_THROW(build_node_features(Mechanism::kM3, x, random_matrix(16, 3, rng), s), ContractError);
}

TEST(LossNet, EnergyGradientsMatchFiniteDifferences) {
  const SkeletonSpec s = small_tree();
  Rng rng(21);
  for (LossNetVariant v : kVariants) {
    for (Mechanism m : kAll) {
      const LossNetConfig c = tiny(v, m);
      const LossNetContext ctx = LossNetContext::build(s, c);
      const ParamStore p = init_lossnet(c, ctx);
      // With respect to x and y.
      for (int i = 0; i < 10; ++i) {
        const double err = max_grad_error(
            [&](ad::Tape& t, const std::vector<ad::Var>& in) {
              ParamBinding b(t, p, false);
              return lossnet_energy(b, c, ctx, in[0], in[1]);
            },
            {random_matrix(2, 10, rng), random_matrix(2, 15, rng)}, rng);
        EXPECT_LT(err, 1e-4) << to_string(v) << "/" << to_string(m);
      }
      // With respect to every parameter.
      const Matrix x = random_matrix(2, 10, rng), y = random_matrix(2, 15, rng);
      const auto r = finite_diff_check(
          [&](ad::Tape& t, const ParamBinding& b) {
            return ad::sum(lossnet_energy(b, c, ctx, t.constant(x), t.constant(y)));
          },
          p, 1e-6);
      EXPECT_LT(r.max_rel_error, 1e-4) << to_string(v) << "/" << to_string(m) << " " << r.worst_parameter;
    }
  }
}

TEST(LossNet, FullSizeEnergyGradientOnCanonicalSkeleton) {
  const SkeletonSpec s = SkeletonSpec::canonical17();
  LossNetConfig c;  // defaults: graph, M3
  const LossNetContext ctx = LossNetContext::build(s, c);
  const ParamStore p = init_lossnet(c, ctx);
  Rng rng(5);
  const double err = max_grad_error(
      [&](ad::Tape& t, const std::vector<ad::Var>& in) {
        ParamBinding b(t, p, false);
        return lossnet_energy(b, c, ctx, t.constant(Matrix::Zero(1, 34)), in[0]);
      },
      {random_matrix(1, 51, rng, -0.5, 0.5)}, rng);
  EXPECT_LT(err, 1e-4);
}

TEST(LossNet, BatchRowsAreIndependent) {
  const SkeletonSpec s = small_tree();
  Rng rng(6);
  for (LossNetVariant v : kVariants) {
    for (Mechanism m : kAll) {
      const LossNetConfig c = tiny(v, m);
      const LossNetContext ctx = LossNetContext::build(s, c);
      const ParamStore p = init_lossnet(c, ctx);
      const Matrix x = random_matrix(4, 10, rng), y = random_matrix(4, 15, rng);
      const Matrix batch = lossnet_energies(p, c, ctx, x, y);
      for (int r = 0; r < 4; ++r) {
        const Matrix one = lossnet_energies(p, c, ctx, x.row(r), y.row(r));
        EXPECT_NEAR(batch(r, 0), one(0, 0), 1e-12);
      }
      EXPECT_TRUE(batch == lossnet_energies(p, c, ctx, x, y));
    }
  }
}

TEST(LossNet, UniformAttentionAveragesValues) {
  const SkeletonSpec s = SkeletonSpec::canonical17();
  LossNetConfig c = tiny(LossNetVariant::kGraph, Mechanism::kM3);
  const LossNetContext ctx = LossNetContext::build(s, c);
  ParamStore p = init_lossnet(c, ctx);
  const std::string pre = "lossnet.encoder.layer0";
  for (const char* n : {".q.weight", ".q.bias", ".k.weight", ".k.bias"}) p.get(pre + n).setZero();
  Rng rng(2);
  const Eigen::Index nodes = ctx.joints + 1;
  const Matrix h = random_matrix(2 * nodes, c.d_model, rng);
  ad::Tape t;
  ParamBinding b(t, p, false);
  const Matrix mixed =
      attention_mix(b, pre, t.constant(h), t.constant(Matrix::Zero(c.heads, ctx.bucket_count)), c, ctx, 2)
          .value();
  const Matrix v = (h * p.get(pre + ".v.weight")).rowwise() + p.get(pre + ".v.bias").row(0);
  for (Eigen::Index blk = 0; blk < 2; ++blk) {
    const Eigen::RowVectorXd mean = v.middleRows(blk * nodes, nodes).colwise().mean();
    for (Eigen::Index r = 0; r < nodes; ++r) {
      EXPECT_LT((mixed.row(blk * nodes + r) - mean).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(LossNet, SpdBiasConcentratesAttentionOnNeighbours) {
  const SkeletonSpec s = SkeletonSpec::canonical17();
  LossNetConfig c = tiny(LossNetVariant::kGraph, Mechanism::kM3);
  const LossNetContext ctx = LossNetContext::build(s, c);
  ParamStore p = init_lossnet(c, ctx);
  const std::string pre = "lossnet.encoder.layer0";
  for (const char* n : {".q.weight", ".q.bias", ".k.weight", ".k.bias"}) p.get(pre + n).setZero();
  Matrix table = Matrix::Zero(c.heads, ctx.bucket_count);
  table.col(1).setConstant(10.0);
  const SpdMatrix spd = compute_spd(s);
  Rng rng(3);
  const Eigen::Index nodes = ctx.joints + 1;
  ad::Tape t;
  ParamBinding b(t, p, false);
  std::vector<Matrix> probs;
  attention_mix(b, pre, t.constant(random_matrix(nodes, c.d_model, rng)), t.constant(table), c, ctx, 1, &probs);
  ASSERT_EQ(probs.size(), static_cast<std::size_t>(c.heads));
  for (const Matrix& P : probs) {
    for (int i = 0; i < ctx.joints; ++i) {
      double mass = 0.0;
      for (int j = 0; j < ctx.joints; ++j) {
        if (spd.at(i, j) == 1) mass += P(i + 1, j + 1);
      }
      EXPECT_GT(mass, 0.99) << "joint " << i;
    }
  }
}

TEST(LossNet, DepthZeroEnergyIsConstant) {
  const SkeletonSpec s = small_tree();
  LossNetConfig c = tiny(LossNetVariant::kGraph, Mechanism::kM3);
  c.depth = 0;
  const LossNetContext ctx = LossNetContext::build(s, c);
  const ParamStore p = init_lossnet(c, ctx);
  Rng rng(4);
  const Matrix e = lossnet_energies(p, c, ctx, random_matrix(5, 10, rng), random_matrix(5, 15, rng));
  for (int r = 1; r < 5; ++r) EXPECT_EQ(e(r, 0), e(0, 0));
}

TEST(LossNet, ZeroBilinearGivesZeroEnergy) {
  const SkeletonSpec s = small_tree();
  for (LossNetVariant v : kVariants) {
    LossNetConfig c = tiny(v, Mechanism::kM2);
    const LossNetContext ctx = LossNetContext::build(s, c);
    ParamStore p = init_lossnet(c, ctx);
    p.get("lossnet.bilinear").setZero();
    Rng rng(5);
    const Matrix e = lossnet_energies(p, c, ctx, random_matrix(3, 10, rng), random_matrix(3, 15, rng));
    EXPECT_TRUE(e.isZero(0.0));
  }
}

TEST(LossNet, RelabelingJointsLeavesGraphEnergyUnchanged) {
  const SkeletonSpec s = SkeletonSpec::canonical17();
  const int J = s.joint_count();
  // perm[old] = new
  std::vector<int> perm(J);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(77);
  for (int i = J - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(static_cast<std::uint64_t>(i + 1))]);

  SkeletonSpec t = s;
  for (int j = 0; j < J; ++j) t.joint_names[perm[j]] = s.joint_names[j];
  for (auto& [a, b] : t.edges) a = perm[a], b = perm[b];
  t.root = perm[s.root];

  for (Mechanism m : {Mechanism::kM1, Mechanism::kM3}) {
    LossNetConfig c = tiny(LossNetVariant::kGraph, m);
    c.depth = 2;
    const LossNetContext cs = LossNetContext::build(s, c);
    const LossNetContext ct = LossNetContext::build(t, c);
    const ParamStore p = init_lossnet(c, cs);
    ParamStore q = p;
    // Rows of the embedding that read the one-hot block follow the labels.
    Matrix& w = q.get("lossnet.encoder.embed.weight");
    const Matrix& w0 = p.get("lossnet.encoder.embed.weight");
    const int coord = m == Mechanism::kM1 ? 3 : 5;
    for (int j = 0; j < J; ++j) w.row(coord + perm[j]) = w0.row(coord + j);

    const Matrix x = random_matrix(3, 2 * J, rng), y = random_matrix(3, 3 * J, rng);
    Matrix xp(3, 2 * J), yp(3, 3 * J);
    for (int j = 0; j < J; ++j) {
      xp.middleCols(2 * perm[j], 2) = x.middleCols(2 * j, 2);
      yp.middleCols(3 * perm[j], 3) = y.middleCols(3 * j, 3);
    }
    const Matrix e0 = lossnet_energies(p, c, cs, x, y);
    const Matrix e1 = lossnet_energies(q, c, ct, xp, yp);
    EXPECT_LT((e0 - e1).cwiseAbs().maxCoeff(), 1e-10) << to_string(m);
  }
}

TEST(LossNet, ConfigValidationAndJson) {
  LossNetConfig c;
  c.d_model = 30;
  c.heads = 4;
  EXPECT_THROW(validate(c), ContractError);
  c = LossNetConfig{};
  c.variant = LossNetVariant::kMlp;
  c.mechanism = Mechanism::kM4;
  c.mlp_hidden = 33;
  const LossNetConfig b = lossnet_from_json(to_json(c));
  EXPECT_EQ(b.variant, LossNetVariant::kMlp);
  EXPECT_EQ(b.mechanism, Mechanism::kM4);
  EXPECT_EQ(b.mlp_hidden, 33);
  EXPECT_THROW(parse_mechanism("m5"), ContractError);
  EXPECT_THROW(parse_variant("cnn"), ContractError);
}
