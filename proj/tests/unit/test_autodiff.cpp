#include <cmath>

#include <gtest/gtest.h>

#include "sealpose/autodiff.hpp"
#include "sealpose/errors.hpp"
#include "test_support.hpp"

using namespace sealpose;
using sealpose::testing::max_grad_error;
using sealpose::testing::random_away_from_zero;
using sealpose::testing::random_matrix;

namespace {

constexpr int kInstances = 100;
constexpr double kTol = 1e-4;

Eigen::Index dim(Rng& rng, int lo = 1, int hi = 5) { return lo + static_cast<Eigen::Index>(rng.index(hi - lo + 1)); }

struct OpCase {
  const char* name;
  std::function<double(Rng&)> run;  // returns the max error of one instance
};

double check_unary(Rng& rng, ad::Var (*op)(ad::Var), bool avoid_zero = false) {
  const Eigen::Index r = dim(rng), c = dim(rng);
  Matrix a = avoid_zero ? random_away_from_zero(r, c, rng) : random_matrix(r, c, rng, -3.0, 3.0);
  return max_grad_error([op](ad::Tape&, const std::vector<ad::Var>& v) { return op(v[0]); }, {a}, rng);
}

std::vector<OpCase> op_cases() {
  return {
      {"add",
       [](Rng& rng) {
         const Eigen::Index r = dim(rng), c = dim(rng);
         return max_grad_error([](ad::Tape&, const std::vector<ad::Var>& v) { return ad::add(v[0], v[1]); },
                               {random_matrix(r, c, rng), random_matrix(r, c, rng)}, rng);
       }},
      {"sub",
       [](Rng& rng) {
         const Eigen::Index r = dim(rng), c = dim(rng);
         return max_grad_error([](ad::Tape&, const std::vector<ad::Var>& v) { return ad::sub(v[0], v[1]); },
                               {random_matrix(r, c, rng), random_matrix(r, c, rng)}, rng);
       }},
      {"scale",
       [](Rng& rng) {
         const double s = rng.uniform(-2.0, 2.0);
         return max_grad_error([s](ad::Tape&, const std::vector<ad::Var>& v) { return ad::scale(v[0], s); },
                               {random_matrix(dim(rng), dim(rng), rng)}, rng);
       }},
      {"add_scalar",
       [](Rng& rng) {
         const double s = rng.uniform(-2.0, 2.0);
         return max_grad_error([s](ad::Tape&, const std::vector<ad::Var>& v) { return ad::add_scalar(v[0], s); },
                               {random_matrix(dim(rng), dim(rng), rng)}, rng);
       }},
      {"cwise_mul",
       [](Rng& rng) {
         const Eigen::Index r = dim(rng), c = dim(rng);
         return max_grad_error([](ad::Tape&, const std::vector<ad::Var>& v) { return ad::cwise_mul(v[0], v[1]); },
                               {random_matrix(r, c, rng), random_matrix(r, c, rng)}, rng);
       }},
      {"matmul",
       [](Rng& rng) {
         const Eigen::Index n = dim(rng), k = dim(rng), m = dim(rng);
         return max_grad_error([](ad::Tape&, const std::vector<ad::Var>& v) { return ad::matmul(v[0], v[1]); },
                               {random_matrix(n, k, rng), random_matrix(k, m, rng)}, rng);
       }},
      {"add_row",
       [](Rng& rng) {
         const Eigen::Index r = dim(rng), c = dim(rng);
         return max_grad_error([](ad::Tape&, const std::vector<ad::Var>& v) { return ad::add_row(v[0], v[1]); },
                               {random_matrix(r, c, rng), random_matrix(1, c, rng)}, rng);
       }},
      {"relu", [](Rng& rng) { return check_unary(rng, &ad::relu, true); }},
      {"square", [](Rng& rng) { return check_unary(rng, &ad::square); }},
      {"abs", [](Rng& rng) { return check_unary(rng, &ad::abs, true); }},
      {"softplus", [](Rng& rng) { return check_unary(rng, &ad::softplus); }},
      {"sum", [](Rng& rng) { return check_unary(rng, &ad::sum); }},
      {"mean", [](Rng& rng) { return check_unary(rng, &ad::mean); }},
      {"row_sum", [](Rng& rng) { return check_unary(rng, &ad::row_sum); }},
      {"concat_cols",
       [](Rng& rng) {
         const Eigen::Index r = dim(rng);
         return max_grad_error(
             [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::concat_cols(std::span<const ad::Var>(v)); },
             {random_matrix(r, dim(rng), rng), random_matrix(r, dim(rng), rng), random_matrix(r, dim(rng), rng)},
             rng);
       }},
      {"slice_cols",
       [](Rng& rng) {
         const Eigen::Index c = dim(rng, 2, 6);
         const Eigen::Index start = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(c)));
         const Eigen::Index count = 1 + static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(c - start)));
         return max_grad_error(
             [=](ad::Tape&, const std::vector<ad::Var>& v) { return ad::slice_cols(v[0], start, count); },
             {random_matrix(dim(rng), c, rng)}, rng);
       }},
      {"gather_rows",
       [](Rng& rng) {
         const Eigen::Index r = dim(rng);
         std::vector<Eigen::Index> idx(static_cast<std::size_t>(dim(rng, 1, 8)));
         for (auto& i : idx) i = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(r)));
         return max_grad_error([idx](ad::Tape&, const std::vector<ad::Var>& v) { return ad::gather_rows(v[0], idx); },
                               {random_matrix(r, dim(rng), rng)}, rng);
       }},
      {"reshape",
       [](Rng& rng) {
         const Eigen::Index r = dim(rng), c = dim(rng);
         return max_grad_error([=](ad::Tape&, const std::vector<ad::Var>& v) { return ad::reshape(v[0], c, r); },
                               {random_matrix(r, c, rng)}, rng);
       }},
      {"layer_norm",
       [](Rng& rng) {
         const Eigen::Index r = dim(rng), c = dim(rng, 2, 6);
         return max_grad_error(
             [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::layer_norm(v[0], v[1], v[2]); },
             {random_matrix(r, c, rng, -2.0, 2.0), random_matrix(1, c, rng), random_matrix(1, c, rng)}, rng);
       }},
      {"multi_head_attention",
       [](Rng& rng) {
         const Eigen::Index batch = dim(rng, 1, 3), nodes = dim(rng, 2, 4), heads = dim(rng, 1, 2);
         const Eigen::Index d = heads * dim(rng, 1, 3);
         const Eigen::Index buckets = dim(rng, 1, 4);
         Eigen::MatrixXi index(nodes, nodes);
         for (Eigen::Index i = 0; i < index.size(); ++i)
           index.data()[i] = static_cast<int>(rng.index(static_cast<std::uint64_t>(buckets)));
         const ad::AttentionShape shape{batch, nodes, heads};
         return max_grad_error(
             [=](ad::Tape&, const std::vector<ad::Var>& v) {
               return ad::multi_head_attention(v[0], v[1], v[2], v[3], index, shape);
             },
             {random_matrix(batch * nodes, d, rng), random_matrix(batch * nodes, d, rng),
              random_matrix(batch * nodes, d, rng), random_matrix(heads, buckets, rng)},
             rng);
       }},
  };
}

}  // namespace

TEST(Autodiff, EveryOpMatchesCentralDifferences) {
  Rng rng(11);
  for (const OpCase& op : op_cases()) {
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) worst = std::max(worst, op.run(rng));
    EXPECT_LT(worst, kTol) << op.name;
  }
}

TEST(Autodiff, ScalarChainHandValue) {
  // f(a, b) = sum((a * b + 1)^2) at a = 2, b = 3: f = 49, df/da = 2 * 7 * 3.
  ad::Tape tape;
  ad::Var a = tape.variable(Matrix::Constant(1, 1, 2.0));
  ad::Var b = tape.variable(Matrix::Constant(1, 1, 3.0));
  ad::Var f = ad::sum(ad::square(ad::add_scalar(ad::cwise_mul(a, b), 1.0)));
  tape.backward(f);
  EXPECT_DOUBLE_EQ(f.scalar(), 49.0);
  EXPECT_DOUBLE_EQ(a.grad()(0, 0), 42.0);
  EXPECT_DOUBLE_EQ(b.grad()(0, 0), 28.0);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  ad::Tape tape;
  ad::Var x = tape.variable(Matrix::Constant(1, 1, 1.5));
  ad::Var y = ad::add(ad::cwise_mul(x, x), x);  // x^2 + x
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 4.0);
}

TEST(Autodiff, StaleHandleIsRejectedAsCycle) {
  ad::Tape tape;
  ad::Var a = tape.variable(Matrix::Ones(1, 1));
  ad::Var b = ad::scale(a, 2.0);
  tape.clear();
  // b now refers to a slot at or after the next node, which would close a cycle.
  EXPECT_THROW(ad::scale(b, 1.0), StructuralError);
}

TEST(Autodiff, OperandsFromAnotherTapeAreRejected) {
  ad::Tape t1, t2;
  ad::Var a = t1.variable(Matrix::Ones(1, 1));
  ad::Var b = t2.variable(Matrix::Ones(1, 1));
  EXPECT_THROW(ad::add(a, b), StructuralError);
}

TEST(Autodiff, NonFiniteGradientNamesTheNode) {
  ad::Tape tape;
  ad::Var x = tape.variable(Matrix::Constant(1, 1, std::numeric_limits<double>::infinity()));
  ad::Var y = ad::sum(ad::square(x));
  try {
    tape.backward(y);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("node #"), std::string::npos);
  }
}

TEST(Autodiff, BackwardRequiresScalarRoot) {
  ad::Tape tape;
  ad::Var x = tape.variable(Matrix::Ones(2, 2));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  ad::Tape tape;
  ad::Var c = tape.constant(Matrix::Ones(2, 2));
  ad::Var p = tape.parameter("w", Matrix::Constant(2, 2, 3.0));
  ad::Var unused = tape.parameter("unused", Matrix::Ones(1, 3));
  (void)unused;
  tape.backward(ad::sum(ad::cwise_mul(c, p)));
  EXPECT_EQ(c.grad().size(), 0);
  const ad::GradientMap g = tape.parameter_gradients();
  EXPECT_TRUE(g.at("w").isApprox(Matrix::Ones(2, 2)));
  EXPECT_TRUE(g.at("unused").isZero());
}

TEST(Autodiff, ShapeMismatchIsContractError) {
  ad::Tape tape;
  ad::Var a = tape.variable(Matrix::Ones(2, 3));
  ad::Var b = tape.variable(Matrix::Ones(3, 2));
  EXPECT_THROW(ad::add(a, b), ContractError);
  EXPECT_THROW(ad::matmul(a, a), ContractError);
}

TEST(Autodiff, AttentionRowsAreDistributions) {
  Rng rng(3);
  ad::Tape tape;
  const ad::AttentionShape shape{2, 3, 2};
  Eigen::MatrixXi index = Eigen::MatrixXi::Zero(3, 3);
  std::vector<Matrix> probs;
  ad::multi_head_attention(tape.constant(random_matrix(6, 4, rng)), tape.constant(random_matrix(6, 4, rng)),
                           tape.constant(random_matrix(6, 4, rng)), tape.constant(random_matrix(2, 1, rng)), index,
                           shape, &probs);
  ASSERT_EQ(probs.size(), 4u);
  for (const Matrix& p : probs) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
  }
}
