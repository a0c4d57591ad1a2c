#include "sealpose/gbi.hpp"

#include <cmath>

#include "sealpose/csv.hpp"
#include "sealpose/errors.hpp"
#include "sealpose/metrics.hpp"

namespace sealpose {

namespace {

void zero_root(Matrix& y, int root) { y.middleCols(3 * root, 3).setZero(); }

GbiRecord make_record(int iteration, double energy, const Pose3D& pose, const Pose3D* gt, const SkeletonSpec& spec,
                      bool metrics) {
  GbiRecord r;
  r.iteration = iteration;
  r.energy = energy;
  if (!metrics) return r;
  r.lse = lse(pose, spec);
  if (gt) {
    r.p_mpjpe = p_mpjpe(pose, *gt);
    r.bsle = bsle(pose, *gt, spec);
    r.lle = lle(pose, *gt, spec);
  }
  return r;
}

}  // namespace

void validate(const GbiConfig& c) {
  if (c.steps < 0) throw ContractError("gbi: steps must be >= 0");
  if (!(c.step_size > 0.0)) throw ContractError("gbi: step_size must be > 0");
}

nlohmann::json to_json(const GbiConfig& c) {
  return {{"steps", c.steps},
          {"step_size", c.step_size},
          {"line_search", c.line_search},
          {"record_metrics", c.record_metrics}};
}

GbiConfig gbi_from_json(const nlohmann::json& j) {
  GbiConfig c;
  c.steps = j.value("steps", c.steps);
  c.step_size = j.value("step_size", c.step_size);
  c.line_search = j.value("line_search", c.line_search);
  c.record_metrics = j.value("record_metrics", c.record_metrics);
  validate(c);
  return c;
}

std::string GbiTrajectory::csv_header() { return "iteration,energy,p_mpjpe,lse,bsle,lle"; }

void GbiTrajectory::write_csv(std::ostream& os) const {
  os << csv_header() << '\n';
  for (const GbiRecord& r : records) {
    os << r.iteration << ',' << format_double(r.energy) << ',' << csv_field(r.p_mpjpe) << ',' << csv_field(r.lse)
       << ',' << csv_field(r.bsle) << ',' << csv_field(r.lle) << '\n';
  }
}

EnergyGradient energy_gradient(const GbiModel& model, const Matrix& x, const Matrix& y) {
  if (model.params == nullptr || model.ctx == nullptr) throw ContractError("gbi: no loss-net");
  ad::Tape tape;
  ParamBinding frozen(tape, *model.params, false);
  ad::Var yv = tape.variable(y);
  ad::Var e = lossnet_energy(frozen, model.config, *model.ctx, tape.constant(x), yv);
  // Samples are independent, so the gradient of the sum is per-row exact.
  tape.backward(ad::sum(e));
  return {e.value(), yv.grad().size() ? yv.grad() : Matrix::Zero(y.rows(), y.cols())};
}

std::vector<GbiTrajectory> gbi_refine_batch(const GbiModel& model, std::span<const Pose2D> x,
                                            std::span<const Pose3D> y0, std::span<const Pose3D> gt,
                                            const SkeletonSpec& spec, const GbiConfig& config) {
  validate(config);
  const std::size_t B = x.size();
  if (y0.size() != B) throw ContractError("gbi: inputs and initial poses differ in count");
  if (!gt.empty() && gt.size() != B) throw ContractError("gbi: ground truth count differs");
  std::vector<GbiTrajectory> out(B);
  if (B == 0) return out;
  const int root = spec.root;

  const Matrix xn = normalize_inputs(model.camera, x);
  Matrix y = poses_to_rows(y0);
  zero_root(y, root);
  Matrix energy = lossnet_energies(*model.params, model.config, *model.ctx, xn, y);
  std::vector<bool> active(B, true);

  auto record = [&](std::size_t b, int iteration) {
    const Pose3D pose = row_to_pose(y.row(static_cast<Eigen::Index>(b)));
    out[b].records.push_back(make_record(iteration, energy(static_cast<Eigen::Index>(b), 0), pose,
                                         gt.empty() ? nullptr : &gt[b], spec, config.record_metrics));
  };
  for (std::size_t b = 0; b < B; ++b) record(b, 0);

  for (int k = 1; k <= config.steps; ++k) {
    EnergyGradient eg;
    try {
      eg = energy_gradient(model, xn, y);
    } catch (const NumericError& e) {
      // Fall back to per-sample evaluation to find the offending rows.
      eg.energy = energy;
      eg.grad = Matrix::Constant(y.rows(), y.cols(), std::nan(""));
      for (std::size_t b = 0; b < B; ++b) {
        const auto r = static_cast<Eigen::Index>(b);
        if (!active[b]) continue;
        try {
          eg.grad.row(r) = energy_gradient(model, xn.row(r), y.row(r)).grad;
        } catch (const NumericError&) {
        }
      }
    }
    std::vector<double> step(B, config.step_size);
    for (std::size_t b = 0; b < B; ++b) {
      const auto r = static_cast<Eigen::Index>(b);
      if (active[b] && !eg.grad.row(r).allFinite()) {
        active[b] = false;
        out[b].truncated = true;
        out[b].diagnostic = "non-finite energy gradient at iteration " + std::to_string(k);
      }
    }
    eg.grad.middleCols(3 * root, 3).setZero();

    Matrix candidate = y;
    std::vector<bool> pending(B, false);
    for (std::size_t b = 0; b < B; ++b) pending[b] = active[b];
    Matrix cand_energy = energy;
    for (int attempt = 0;; ++attempt) {
      for (std::size_t b = 0; b < B; ++b) {
        if (!pending[b]) continue;
        const auto r = static_cast<Eigen::Index>(b);
        candidate.row(r) = y.row(r) - step[b] * eg.grad.row(r);
      }
      zero_root(candidate, root);
      cand_energy = lossnet_energies(*model.params, model.config, *model.ctx, xn, candidate);
      if (!config.line_search) break;
      bool any = false;
      for (std::size_t b = 0; b < B; ++b) {
        if (!pending[b]) continue;
        const auto r = static_cast<Eigen::Index>(b);
        if (cand_energy(r, 0) <= energy(r, 0)) {
          pending[b] = false;
        } else if (attempt == kMaxHalvings) {
          // No acceptable step: stay put.
          candidate.row(r) = y.row(r);
          cand_energy(r, 0) = energy(r, 0);
          pending[b] = false;
        } else {
          step[b] *= 0.5;
          any = true;
        }
      }
      if (!any) break;
    }
    for (std::size_t b = 0; b < B; ++b) {
      if (!active[b]) continue;
      const auto r = static_cast<Eigen::Index>(b);
      y.row(r) = candidate.row(r);
      energy(r, 0) = cand_energy(r, 0);
      record(b, k);
    }
  }
  for (std::size_t b = 0; b < B; ++b) out[b].final_pose = row_to_pose(y.row(static_cast<Eigen::Index>(b)));
  return out;
}

GbiTrajectory gbi_refine(const GbiModel& model, const Pose2D& x, const Pose3D& y0, const Pose3D* gt,
                         const SkeletonSpec& spec, const GbiConfig& config) {
  std::span<const Pose3D> gts;
  if (gt) gts = std::span<const Pose3D>(gt, 1);
  return gbi_refine_batch(model, std::span<const Pose2D>(&x, 1), std::span<const Pose3D>(&y0, 1), gts, spec,
                          config)
      .front();
}

GbiTrajectory mean_trajectory(std::span<const GbiTrajectory> trajectories) {
  GbiTrajectory mean;
  if (trajectories.empty()) return mean;
  std::size_t len = trajectories.front().records.size();
  for (const auto& t : trajectories) len = std::min(len, t.records.size());
  const double n = static_cast<double>(trajectories.size());
  auto add = [](std::optional<double>& acc, const std::optional<double>& v) {
    if (v) acc = acc.value_or(0.0) + *v;
  };
  for (std::size_t k = 0; k < len; ++k) {
    GbiRecord r;
    r.iteration = static_cast<int>(k);
    for (const auto& t : trajectories) {
      const GbiRecord& s = t.records[k];
      r.energy += s.energy;
      add(r.p_mpjpe, s.p_mpjpe);
      add(r.lse, s.lse);
      add(r.bsle, s.bsle);
      add(r.lle, s.lle);
    }
    r.energy /= n;
    for (auto* f : {&r.p_mpjpe, &r.lse, &r.bsle, &r.lle}) {
      if (*f) **f /= n;
    }
    mean.records.push_back(r);
  }
  for (const auto& t : trajectories) {
    if (t.truncated) {
      mean.truncated = true;
      mean.diagnostic = t.diagnostic;
    }
  }
  return mean;
}

}  // namespace sealpose
