#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sealpose/gbi.hpp"
#include "sealpose/lossnet.hpp"
#include "sealpose/posenet.hpp"
#include "sealpose/synthdata.hpp"
#include "sealpose/trainer.hpp"

namespace sealpose::cli {

inline constexpr const char* kOutputRootEnv = "SEALPOSE_OUT";

/// Every knob of an experiment. The digest covers everything except the
/// output directory.
struct ExperimentConfig {
  GeneratorConfig generator = GeneratorConfig::defaults();
  CameraModel camera;
  /// Validation split: same generator with its own seed and size.
  std::size_t val_samples = 1000;
  std::uint64_t val_seed = 100;
  PoseNetConfig posenet;
  LossNetConfig lossnet;
  TrainConfig train;
  GbiConfig gbi;
  std::filesystem::path output_dir;

  const SkeletonSpec& spec() const { return generator.spec; }
  ModelSetup model_setup() const;
  std::string digest() const;
};

nlohmann::json to_json(const ExperimentConfig& c, bool include_output_dir = true);
/// Missing sections keep their defaults. A "skeleton" entry may be a path
/// to a skeleton file (relative to `base_dir`) or an inline object, and
/// replaces generator.skeleton.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_experiment(const std::filesystem::path& path);
void save_experiment(const ExperimentConfig& c, const std::filesystem::path& path);

std::string skeleton_digest(const SkeletonSpec& spec);

/// Output root: $SEALPOSE_OUT if set, else "runs".
std::filesystem::path default_output_root();

/// Entry point of the `sealpose` binary; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sealpose::cli
