#include "sealpose/gradcheck.hpp"

#include <cmath>

#include "sealpose/errors.hpp"

namespace sealpose {

namespace {

double evaluate(const ScalarGraphFn& f, const ParamStore& params) {
  ad::Tape tape;
  ParamBinding bound(tape, params, false);
  const double v = f(tape, bound).scalar();
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: function returned non-finite value");
  return v;
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarGraphFn& f, const ParamStore& params, double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff_check: step must be positive");

  ad::GradientMap analytic;
  {
    ad::Tape tape;
    ParamBinding bound(tape, params, true);
    ad::Var out = f(tape, bound);
    if (!std::isfinite(out.scalar())) {
      throw NumericError("finite_diff_check: function returned non-finite value");
    }
    tape.backward(out);
    analytic = tape.parameter_gradients();
  }

  GradCheckResult result;
  ParamStore probe = params;
  for (auto& entry : probe.entries()) {
    const Matrix& g = analytic.at(entry.name);
    for (Eigen::Index k = 0; k < entry.value.size(); ++k) {
      double& slot = entry.value.data()[k];
      const double saved = slot;
      slot = saved + step;
      const double up = evaluate(f, probe);
      slot = saved - step;
      const double down = evaluate(f, probe);
      slot = saved;
      const double fd = (up - down) / (2.0 * step);
      const double err = std::abs(g.data()[k] - fd) / std::max(1.0, std::abs(fd));
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_parameter = entry.name;
        result.worst_index = k;
      }
    }
  }
  return result;
}

}  // namespace sealpose
