#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sealpose/adam.hpp"
#include "sealpose/lossnet.hpp"
#include "sealpose/metrics.hpp"
#include "sealpose/objectives.hpp"
#include "sealpose/param_store.hpp"
#include "sealpose/posenet.hpp"
#include "sealpose/skeleton.hpp"
#include "sealpose/synthdata.hpp"

namespace sealpose {

struct TrainConfig {
  double lr_p = 1e-4;
  double lr_l = 1e-4;
  ObjectiveConfig objective;
  int epochs = 30;
  int batch_size = 64;
  std::uint64_t seed = 0;
  /// Validate every this many epochs (and always after the last one).
  int eval_every = 1;
  /// Pure supervised training: alpha forced to 0, loss-net never updated.
  bool baseline_mode = false;
};

void validate(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_from_json(const nlohmann::json& j);

/// Everything about the networks that is fixed for a run.
struct ModelSetup {
  SkeletonSpec spec;
  CameraModel camera;
  PoseNetConfig posenet;
  LossNetConfig lossnet;
};

/// Parameters and optimizer state of both networks.
struct TrainState {
  ParamStore posenet;
  ParamStore lossnet;
  AdamState adam_p;
  AdamState adam_l;
  LossNetContext ctx;

  static TrainState init(const ModelSetup& setup);
};

struct StepRecord {
  double L_F = 0.0;
  std::optional<double> L_E;
  /// Mean energy of the (pre-update) predictions under theta_{t-1}.
  std::optional<double> mean_energy;
  double base = 0.0;
  double pair = 0.0;
  double window = 0.0;
  bool ok = true;
  /// Set when !ok: names the offending term.
  std::string diagnostic;
};

/// Instrumentation points inside a step, for tests.
struct StepHooks {
  /// Called after the loss-net update, before L_F is evaluated.
  std::function<void(ParamStore& lossnet)> after_lossnet_update;
  /// Pose-net gradients just before the pose-net update.
  std::function<void(const ad::GradientMap& grads)> posenet_gradients;
};

inline constexpr double kLossAbortThreshold = 1e8;

/// One iteration of the alternating scheme:
///   1. predictions from the frozen pose-net,
///   2. L_E and a loss-net Adam step (skipped in baseline mode),
///   3. L_F under the updated loss-net and a pose-net Adam step.
/// On a non-finite or exploding loss nothing is updated past the failing
/// term and the record carries the diagnostic.
StepRecord train_step(std::span<const Sample* const> batch, TrainState& state, const ModelSetup& setup,
                      const TrainConfig& config, Rng& rng, std::span<const Sample> sequence = {},
                      const StepHooks* hooks = nullptr);

struct EpochRecord {
  int epoch = 0;
  double L_F = 0.0;
  std::optional<double> L_E;
  std::optional<double> mean_energy;
  std::optional<double> val_mpjpe;
  std::optional<double> val_pmpjpe;
  std::optional<double> val_lse;
  std::optional<double> val_bsle;
  std::optional<double> val_lle;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::string config_digest;
  bool aborted = false;
  std::string diagnostic;

  static std::string csv_header();
  std::string to_csv() const;
  bool operator==(const TrainHistory&) const = default;
};

struct TrainResult {
  TrainHistory history;
  ParamStore posenet_final;
  ParamStore lossnet_final;
  ParamStore posenet_best;
  ParamStore lossnet_best;
  int best_epoch = 0;  ///< 0 = initialization
  std::optional<double> best_val_mpjpe;
};

/// Digest of the model and training configuration.
std::string train_digest(const ModelSetup& setup, const TrainConfig& config);

/// Validation metrics of a pose-net over a dataset (all samples).
MetricsReport validate_posenet(const ParamStore& posenet, const ModelSetup& setup, const Dataset& data);

/// Full training loop. When `out_dir` is set, writes history.csv and the
/// {posenet,lossnet}_{best,final}.ckpt files there; the history is written
/// even when a step aborts. `config_digest` overrides train_digest().
TrainResult train_run(const Dataset& train, const Dataset& val, const ModelSetup& setup, const TrainConfig& config,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                      const std::string& config_digest = "");

// -- greedy sweep ---------------------------------------------------------------

struct SweepGrid {
  std::vector<double> lr_p;
  std::vector<double> lr_l;
  std::vector<double> alpha;
};

nlohmann::json to_json(const SweepGrid& grid);
SweepGrid sweep_grid_from_json(const nlohmann::json& j);

struct SweepRow {
  std::optional<double> lr_p;
  std::optional<double> lr_l;  ///< absent for baseline (stage 1) runs
  std::optional<double> alpha;
  std::optional<double> mpjpe;  ///< best validation MPJPE; absent on error
  int stage = 0;
  std::string status;  ///< "ok", "cached" or "error: ..."
};

struct SweepResult {
  TrainConfig best;
  std::vector<SweepRow> rows;  ///< sorted ascending by MPJPE, errors last

  static std::string csv_header();
  std::string to_csv() const;
};

/// Three-stage greedy tuning:
///   1. lr_p by baseline runs,
///   2. (lr_l, alpha) pairs at that lr_p, keeping the best lr_l,
///   3. alpha at the fixed (lr_p, lr_l); these runs were already made in
///      stage 2, so they are reused and marked "cached".
/// `progress` is called after every run.
SweepResult greedy_sweep(const SweepGrid& grid, const Dataset& train, const Dataset& val, const ModelSetup& setup,
                         const TrainConfig& base, const std::function<void(const SweepRow&)>& progress = {});

}  // namespace sealpose
