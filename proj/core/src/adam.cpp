#include "sealpose/adam.hpp"

#include <cmath>

#include "sealpose/errors.hpp"

namespace sealpose {

AdamState AdamState::for_store(const ParamStore& store, double beta1, double beta2, double eps) {
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const auto& e : store.entries()) {
    s.m.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
    s.v.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
  }
  return s;
}

void adam_step(ParamStore& params, const ad::GradientMap& grads, AdamState& state, double lr) {
  auto& entries = params.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw ContractError("adam_step: state does not match parameter store");
  }
  if (!(lr >= 0.0)) throw ContractError("adam_step: learning rate must be non-negative");
  for (const auto& e : entries) {
    auto it = grads.find(e.name);
    if (it == grads.end()) throw ContractError("adam_step: missing gradient for '" + e.name + "'");
    if (it->second.rows() != e.value.rows() || it->second.cols() != e.value.cols()) {
      throw ContractError("adam_step: gradient shape mismatch for '" + e.name + "'");
    }
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Matrix& g = grads.at(entries[i].name);
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    Matrix& p = entries[i].value;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double mhat = m.data()[k] / c1;
      const double vhat = v.data()[k] / c2;
      p.data()[k] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace sealpose
