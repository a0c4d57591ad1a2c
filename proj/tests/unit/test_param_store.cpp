#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "sealpose/adam.hpp"
#include "sealpose/errors.hpp"
#include "sealpose/gradcheck.hpp"
#include "sealpose/param_store.hpp"
#include "test_support.hpp"

using namespace sealpose;

namespace {

ParamStore sample_store() {
  ParamStore s(42);
  Rng rng(7);
  s.add_uniform("a.weight", 3, 4, 0.5, rng);
  s.add_uniform("a.bias", 1, 4, 0.5, rng);
  s.add("b", 2, 2);
  s.get("b")(0, 1) = std::nextafter(1.0, 2.0);  // last-bit sensitivity
  s.get("b")(1, 0) = -0.0;
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "sealpose_param_store_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(ParamStore, NamesAreUniqueAndOrdered) {
  ParamStore s = sample_store();
  EXPECT_THROW(s.add("b", 1, 1), ContractError);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.entries()[0].name, "a.weight");
  EXPECT_EQ(s.entries()[2].name, "b");
  EXPECT_EQ(s.total_size(), 12u + 4u + 4u);
  EXPECT_EQ(s.subset("a.").size(), 2u);
  EXPECT_THROW(s.get("missing"), ContractError);
}

TEST(ParamStore, FileRoundTripIsBitExact) {
  const ParamStore s = sample_store();
  const auto path = temp_file("roundtrip.ckpt");
  s.save(path);
  const ParamStore back = ParamStore::load(path);
  EXPECT_EQ(back.seed(), 42u);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(back.entries()[i].name, s.entries()[i].name);
    const Matrix& a = s.entries()[i].value;
    const Matrix& b = back.entries()[i].value;
    ASSERT_EQ(a.rows(), b.rows());
    ASSERT_EQ(a.cols(), b.cols());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
  }
  EXPECT_EQ(back.serialize(), s.serialize());
  EXPECT_TRUE(std::signbit(back.get("b")(1, 0)));
}

TEST(ParamStore, CorruptCheckpointsAreRejectedWithPath) {
  std::string bytes = sample_store().serialize();
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(ParamStore::deserialize(bad_magic), IoError);
  EXPECT_THROW(ParamStore::deserialize(bytes.substr(0, bytes.size() - 3)), IoError);
  EXPECT_THROW(ParamStore::deserialize(bytes + "x"), IoError);

  const auto path = temp_file("does_not_exist.ckpt");
  std::filesystem::remove(path);
  try {
    ParamStore::load(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
  }
}

TEST(ParamBinding, FrozenBindingProducesNoParameterGradients) {
  const ParamStore s = sample_store();
  ad::Tape tape;
  ParamBinding frozen(tape, s, false);
  ad::Var out = ad::sum(frozen["a.weight"]);
  tape.backward(out);
  EXPECT_TRUE(tape.parameter_gradients().empty());
  EXPECT_THROW(frozen["nope"], ContractError);
}

// -- Adam --------------------------------------------------------------------

namespace {

// Scripted Adam on a flat vector; written independently of adam_step.
struct ScriptedAdam {
  std::vector<double> m, v;
  int t = 0;
  void step(std::vector<double>& p, const std::vector<double>& g, double lr) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (m.empty()) m.assign(p.size(), 0.0), v.assign(p.size(), 0.0);
    ++t;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

}  // namespace

TEST(Adam, FirstStepHandValue) {
  ParamStore s;
  s.add("p", 1, 1);
  AdamState st = AdamState::for_store(s);
  adam_step(s, {{"p", Matrix::Constant(1, 1, 0.5)}}, st, 0.1);
  EXPECT_EQ(st.t, 1u);
  EXPECT_NEAR(s.get("p")(0, 0), -0.1 * (0.5 / (0.5 + 1e-8)), 1e-15);
}

// Numeric equality: a -0.0 entry may legitimately come back as +0.0.
bool same_values(const ParamStore& a, const ParamStore& b) {
  for (const auto& e : a.entries()) {
    if (e.value != b.get(e.name)) return false;
  }
  return a.entries().size() == b.entries().size();
}

TEST(Adam, ZeroGradientAndZeroLrLeaveParamsUnchanged) {
  ParamStore s = sample_store();
  const ParamStore before = s;
  AdamState st = AdamState::for_store(s);
  ad::GradientMap zero;
  for (const auto& e : s.entries()) zero[e.name] = Matrix::Zero(e.value.rows(), e.value.cols());
  adam_step(s, zero, st, 0.1);
  EXPECT_EQ(st.t, 1u);
  EXPECT_TRUE(same_values(s, before));

  Rng rng(1);
  ad::GradientMap g;
  for (const auto& e : s.entries()) g[e.name] = sealpose::testing::random_matrix(e.value.rows(), e.value.cols(), rng);
  adam_step(s, g, st, 0.0);
  EXPECT_EQ(st.t, 2u);
  EXPECT_TRUE(same_values(s, before));
}

TEST(Adam, MatchesScriptedOracleOverSeveralSteps) {
  ParamStore s;
  Rng rng(5);
  s.add_uniform("w", 2, 3, 1.0, rng);
  std::vector<double> flat(s.get("w").data(), s.get("w").data() + 6);
  AdamState st = AdamState::for_store(s);
  ScriptedAdam oracle;
  const Matrix g = sealpose::testing::random_matrix(2, 3, rng);
  for (int step = 0; step < 4; ++step) {
    // Identical gradients on the first two steps, then fresh ones.
    const Matrix gs = step < 2 ? g : sealpose::testing::random_matrix(2, 3, rng);
    adam_step(s, {{"w", gs}}, st, 1e-2);
    oracle.step(flat, std::vector<double>(gs.data(), gs.data() + 6), 1e-2);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(s.get("w").data()[i], flat[i], 1e-12);
  }
}

TEST(Adam, MissingGradientIsContractError) {
  ParamStore s = sample_store();
  AdamState st = AdamState::for_store(s);
  EXPECT_THROW(adam_step(s, {{"a.weight", Matrix::Zero(3, 4)}}, st, 0.1), ContractError);
}

// -- finite_diff_check ---------------------------------------------------------

TEST(GradCheck, PolynomialIsNearlyExact) {
  ParamStore s;
  s.add("p", 1, 1)(0, 0) = 3.0;
  const auto r = finite_diff_check(
      [](ad::Tape&, const ParamBinding& b) { return ad::sum(ad::square(b["p"])); }, s, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, NonFiniteFunctionIsNumericError) {
  ParamStore s;
  s.add("p", 1, 1)(0, 0) = 1.0;
  EXPECT_THROW(finite_diff_check(
                   [](ad::Tape& t, const ParamBinding& b) {
                     return ad::sum(ad::cwise_mul(b["p"], t.constant(Matrix::Constant(
                                                             1, 1, std::numeric_limits<double>::quiet_NaN()))));
                   },
                   s, 1e-5),
               NumericError);
}
