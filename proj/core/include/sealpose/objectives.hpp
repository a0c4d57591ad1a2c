#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sealpose/autodiff.hpp"
#include "sealpose/lossnet.hpp"
#include "sealpose/param_store.hpp"
#include "sealpose/posenet.hpp"
#include "sealpose/random.hpp"
#include "sealpose/synthdata.hpp"
#include "sealpose/types.hpp"

namespace sealpose {

enum class LossNetObjective { kMargin, kNce };

std::string to_string(LossNetObjective o);
LossNetObjective parse_objective(const std::string& s);

/// Reference the perturbation sort key is measured against.
enum class SortReference { kInput, kCleanProjection };

struct ObjectiveConfig {
  double alpha = 5e-3;
  LossNetObjective lossnet_objective = LossNetObjective::kMargin;
  double kappa = 1.0;
  /// Perturbation negatives per anchor; 0 disables the ordering term.
  int K = 0;
  /// Radius of the perturbation ball over all 2J pixel coordinates.
  double R_max = 10.0;
  int window_w = 1;
  int n_random_pairs = 2;
  double pair_weight = 1.0;
  /// Weight of the neighbouring-window term.
  double window_weight = 1e-3;
  SortReference sort_reference = SortReference::kInput;
};

void validate(const ObjectiveConfig& config);
nlohmann::json to_json(const ObjectiveConfig& config);
ObjectiveConfig objective_from_json(const nlohmann::json& j);

// -- scalar forms -------------------------------------------------------------

/// sum_j mean_c (y - y_pred)^2 + alpha * energy.
double task_loss(const Pose3D& y, const Pose3D& y_pred, double energy, double alpha);
/// MPJPE of the two poses.
double mpjpe_margin(const Pose3D& y, const Pose3D& y_tilde);
/// [delta - e_neg + e_gt]_+
double margin_loss(double e_gt, double e_neg, double delta);
/// -log(exp(-e_gt) / (exp(-e_gt) + exp(-e_neg))), overflow-free.
double nce_loss(double e_gt, double e_neg);

// -- tape forms ---------------------------------------------------------------
// Batched: rows are samples.

/// y, y_pred: B x 3J; energy: B x 1. Returns B x 1 per-sample L_F.
ad::Var task_loss(ad::Var y, ad::Var y_pred, ad::Var energy, double alpha);
/// delta: B x 1 constant margins.
ad::Var margin_loss(ad::Var e_gt, ad::Var e_neg, ad::Var delta);
ad::Var nce_loss(ad::Var e_gt, ad::Var e_neg);

// -- negatives ----------------------------------------------------------------

struct NegativeSet {
  std::vector<Pose3D> poses;      ///< mm
  std::vector<Pose2D> inputs;     ///< perturbed 2D keypoints (pixels)
  std::vector<double> sort_keys;  ///< mean per-joint 2D displacement (pixels)
  std::vector<double> energies;   ///< optional, filled by the caller
  bool sorted() const;
};

/// Frozen pose-net context used to map perturbed keypoints to poses.
struct PoseNetView {
  const ParamStore* params = nullptr;
  PoseNetConfig config;
  int joints = 0;
  int root = 0;
  CameraModel camera;
};

/// Uniform draw from the L2 ball of `radius` in `dim` dimensions.
Eigen::VectorXd sample_in_ball(int dim, double radius, Rng& rng);

/// K perturbed copies of x lifted by the frozen pose-net, sorted
/// ascending by 2D displacement from `reference` (x itself by default).
NegativeSet sample_perturbation_negatives(const PoseNetView& posenet, const Pose2D& x, int K, double R_max, Rng& rng,
                                          const Pose2D* reference = nullptr);

struct PairIndex {
  int farther = 0;  ///< larger sort key; its energy is pushed up
  int nearer = 0;
};

/// Adjacent pairs in sort order plus `n_random_pairs` random ordered pairs
/// with distinct sort keys. Empty when fewer than two negatives exist.
std::vector<PairIndex> ordering_pairs(const NegativeSet& neg, int n_random_pairs, Rng& rng);

struct PairLossResult {
  double value = 0.0;
  bool degenerate = false;  ///< fewer than two negatives
};

/// mean over pairs of [kappa * MPJPE(y_i, y_j) - E_i + E_j]_+ with MPJPE in
/// meters. Uses neg.energies.
PairLossResult pair_ordering_loss(const NegativeSet& neg, double kappa, int n_random_pairs, Rng& rng);
double pair_ordering_loss(const NegativeSet& neg, double kappa, std::span<const PairIndex> pairs);

/// energies: n x 1 on the tape, aligned with neg.poses.
ad::Var pair_ordering_loss(ad::Var energies, const NegativeSet& neg, double kappa, std::span<const PairIndex> pairs);

/// Index of the candidate whose projection best matches u (mean 2D joint
/// distance). Ties go to the lowest index; unprojectable candidates are
/// excluded and reported through `excluded`.
std::size_t select_hard_negative(std::span<const Pose3D> candidates, const Pose2D& u, const CameraModel& camera,
                                 std::vector<std::size_t>* excluded = nullptr);

/// [kappa * MPJPE(ybar(t), ybar(s)) - |Ebar(t) - Ebar(s)|]_+ over windows of
/// length w starting at t and s. MPJPE in meters.
double window_pair_loss(std::span<const double> energies, std::span<const Pose3D> poses, std::size_t t,
                        std::size_t s, int w, double kappa);
/// energies: T x 1 per-frame energies on the tape.
ad::Var window_pair_loss(ad::Var energies, std::span<const Pose3D> poses, std::size_t t, std::size_t s, int w,
                         double kappa);

/// Start index s drawn uniformly from {t-w, ..., t+w} \ {t}, clipped so the
/// window [s, s+w) fits in [0, n).
std::size_t sample_window_partner(std::size_t t, int w, std::size_t n, Rng& rng);

// -- loss-net objective ---------------------------------------------------------

struct LossNetView {
  const ParamBinding* params = nullptr;
  LossNetConfig config;
  const LossNetContext* ctx = nullptr;
};

struct ObjectiveBatch {
  /// Normalized inputs (B x 2J), ground truth and detached predictions in
  /// meters (B x 3J).
  Matrix x;
  Matrix y;
  Matrix y_pred;
  /// Original samples, needed by the negative terms.
  std::vector<const Sample*> samples;
};

struct LossNetObjectiveTerms {
  ad::Var total;  ///< scalar L_E
  double base = 0.0;
  double pair = 0.0;
  double window = 0.0;
  double mean_gt_energy = 0.0;
  double mean_pred_energy = 0.0;
};

/// L_E for one mini-batch: base margin/NCE term between E(x, y) and
/// E(x, y_pred), plus the perturbation ordering term (K > 0) and the
/// neighbouring-window term (window_w > 1), averaged over the batch.
/// `sequence` supplies consecutive frames for the window term.
LossNetObjectiveTerms lossnet_objective(const ObjectiveBatch& batch, const PoseNetView& posenet,
                                        const LossNetView& lossnet, const ObjectiveConfig& config, Rng& rng,
                                        std::span<const Sample> sequence = {});

}  // namespace sealpose
