#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sealpose/lossnet.hpp"
#include "sealpose/param_store.hpp"
#include "sealpose/skeleton.hpp"
#include "sealpose/synthdata.hpp"
#include "sealpose/types.hpp"

namespace sealpose {

struct GbiConfig {
  int steps = 20;
  /// In model units (meters per unit energy gradient).
  double step_size = 1e-2;
  /// Halve the step until the energy does not increase (at most 10 times).
  bool line_search = true;
  bool record_metrics = true;
};

inline constexpr int kMaxHalvings = 10;

void validate(const GbiConfig& config);
nlohmann::json to_json(const GbiConfig& config);
GbiConfig gbi_from_json(const nlohmann::json& j);

struct GbiRecord {
  int iteration = 0;
  double energy = 0.0;
  std::optional<double> p_mpjpe;
  std::optional<double> lse;
  std::optional<double> bsle;
  std::optional<double> lle;
};

struct GbiTrajectory {
  std::vector<GbiRecord> records;  ///< steps + 1 unless truncated
  Pose3D final_pose;               ///< mm
  bool truncated = false;
  std::string diagnostic;

  static std::string csv_header();
  void write_csv(std::ostream& os) const;
};

struct GbiModel {
  const ParamStore* params = nullptr;
  LossNetConfig config;
  const LossNetContext* ctx = nullptr;
  CameraModel camera;
};

/// Energy and its gradient with respect to y for a batch.
/// x: B x 2J normalized inputs; y: B x 3J meters.
struct EnergyGradient {
  Matrix energy;  ///< B x 1
  Matrix grad;    ///< B x 3J
};
EnergyGradient energy_gradient(const GbiModel& model, const Matrix& x, const Matrix& y);

/// Refines y0 (mm) for the 2D observation x (pixels) by descending the
/// frozen energy: y <- y - step * dE/dy (model units), root re-zeroed after
/// every step. Metrics needing ground truth are recorded only when gt is
/// given.
GbiTrajectory gbi_refine(const GbiModel& model, const Pose2D& x, const Pose3D& y0, const Pose3D* gt,
                         const SkeletonSpec& spec, const GbiConfig& config);

/// Batched form: every sample keeps its own step size and line search, and
/// all energies of one iteration are evaluated together.
std::vector<GbiTrajectory> gbi_refine_batch(const GbiModel& model, std::span<const Pose2D> x,
                                            std::span<const Pose3D> y0, std::span<const Pose3D> gt,
                                            const SkeletonSpec& spec, const GbiConfig& config);

/// Per-iteration means over trajectories (only the common prefix length).
GbiTrajectory mean_trajectory(std::span<const GbiTrajectory> trajectories);

}  // namespace sealpose
