#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sealpose/skeleton.hpp"
#include "sealpose/types.hpp"

namespace sealpose {

/// Mean Euclidean joint distance (same unit as the inputs).
double mpjpe(const Pose3D& pred, const Pose3D& gt);
double mpjpe_2d(const Pose2D& a, const Pose2D& b);

/// Similarity transform (scale, orthogonal matrix, translation) that best
/// maps `pred` onto `gt` in the least-squares sense, applied to `pred`.
/// Reflections are allowed unless `allow_reflection` is false.
Pose3D procrustes_align(const Pose3D& pred, const Pose3D& gt, bool allow_reflection = true);
double p_mpjpe(const Pose3D& pred, const Pose3D& gt, bool allow_reflection = true);

inline constexpr double kPckThresholdMm = 150.0;

/// Percentage of joints with error <= threshold.
double pck(const Pose3D& pred, const Pose3D& gt, double threshold_mm = kPckThresholdMm);
/// Mean PCK over thresholds 0, 5, ..., 150 mm.
double auc(const Pose3D& pred, const Pose3D& gt);

/// Pairs / segments skipped by the near-zero-length guard.
struct SkipCount {
  int skipped = 0;
};

/// Limb symmetry error (percent): mean over symmetry pairs of
/// 100 * |l - r| / ((l + r) / 2). Pairs with both lengths below 1e-9 are
/// skipped.
double lse(const Pose3D& pose, const SkeletonSpec& spec, SkipCount* skips = nullptr);
/// Body segment length error (percent) over `segments`:
/// mean of 100 * |1 - |pred_seg| / |gt_seg||.
double bsle(const Pose3D& pred, const Pose3D& gt, const SkeletonSpec& spec, std::span<const int> segments,
            SkipCount* skips = nullptr);
double bsle(const Pose3D& pred, const Pose3D& gt, const SkeletonSpec& spec, SkipCount* skips = nullptr);
/// BSLE restricted to spec.limb_segments.
double lle(const Pose3D& pred, const Pose3D& gt, const SkeletonSpec& spec, SkipCount* skips = nullptr);

/// Tie-adjusted Kendall tau-b.
double kendall_tau(std::span<const double> a, std::span<const double> b);
/// 100 * concordant / (concordant + discordant); tied pairs ignored.
double ordering_accuracy(std::span<const double> a, std::span<const double> b);

struct MetricsReport {
  double mpjpe = 0.0;
  double p_mpjpe = 0.0;
  double pck = 0.0;
  double auc = 0.0;
  double lse = 0.0;
  double bsle = 0.0;
  double lle = 0.0;
  std::size_t n_samples = 0;

  static std::string csv_header();
  std::string csv_row() const;
  void write_text(std::ostream& os) const;
};

/// Per-sample metrics averaged over samples.
MetricsReport evaluate_poses(std::span<const Pose3D> preds, std::span<const Pose3D> gts, const SkeletonSpec& spec);

struct BinnedStructureReport {
  struct Row {
    double bin_low = 0.0;
    double bin_high = 0.0;
    std::string system;
    std::size_t count = 0;
    std::optional<double> lse;
    std::optional<double> bsle;
    std::optional<double> lle;
  };
  std::vector<double> edges;
  std::vector<Row> rows;

  static std::string csv_header();
  void write_csv(std::ostream& os) const;
};

/// Shared quantile bins over the union of both systems' per-sample
/// P-MPJPE, with per-bin mean LSE / BSLE / LLE for each system.
BinnedStructureReport binned_structure_report(std::span<const Pose3D> pred_a, std::span<const Pose3D> pred_b,
                                              std::span<const Pose3D> gt, const SkeletonSpec& spec, int n_bins,
                                              const std::string& label_a = "a", const std::string& label_b = "b");

/// "%.17g"
std::string format_double(double v);

}  // namespace sealpose
