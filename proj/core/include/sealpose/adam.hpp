#pragma once

#include <cstdint>
#include <vector>

#include "sealpose/autodiff.hpp"
#include "sealpose/param_store.hpp"

namespace sealpose {

/// Moment estimates for one ParamStore, entry-aligned with it.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_store(const ParamStore& store, double beta1 = 0.9, double beta2 = 0.999,
                             double eps = 1e-8);
};

/// One bias-corrected Adam update in place; no learning-rate schedule.
/// Every parameter name must have a gradient.
void adam_step(ParamStore& params, const ad::GradientMap& grads, AdamState& state, double lr);

}  // namespace sealpose
