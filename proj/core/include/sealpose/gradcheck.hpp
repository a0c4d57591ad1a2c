#pragma once

#include <functional>

#include "sealpose/autodiff.hpp"
#include "sealpose/param_store.hpp"

namespace sealpose {

/// Builds a scalar on the given tape from bound parameters.
using ScalarGraphFn = std::function<ad::Var(ad::Tape&, const ParamBinding&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = 0;
};

/// Compares autodiff gradients with central differences for every scalar
/// in `params`. Error per coordinate is |ad - fd| / max(1, |fd|).
GradCheckResult finite_diff_check(const ScalarGraphFn& f, const ParamStore& params, double step);

}  // namespace sealpose
