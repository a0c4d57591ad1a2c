#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "sealpose/random.hpp"
#include "sealpose/skeleton.hpp"
#include "sealpose/types.hpp"

namespace sealpose {

/// Pinhole camera looking down +z at a subject whose root sits at
/// (0, 0, subject_depth) in camera coordinates.
struct CameraModel {
  double focal = 1000.0;
  Eigen::Vector2d principal_point{500.0, 500.0};
  double subject_depth = 5000.0;
};

/// Euler-angle limits (radians) for the rotation a joint applies to its
/// child segments; rotation is Rz * Ry * Rx.
struct AngleRange {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

struct GeneratorConfig {
  SkeletonSpec spec;
  /// Millimeters, one per segment.
  std::vector<double> bone_lengths;
  /// Unit direction of each segment in the parent frame at rest.
  std::vector<Eigen::Vector3d> rest_directions;
  /// One per joint; index root is the global body orientation.
  std::vector<AngleRange> joint_angle_ranges;
  double noise_2d_sigma = 2.0;
  std::size_t n_samples = 5000;
  std::uint64_t seed = 0;
  /// Frames between random angle keyframes.
  int keyframe_interval = 10;

  /// Canonical 17-joint body with mirrored bone lengths.
  static GeneratorConfig defaults();
};

struct Sample {
  Pose2D x;  ///< observed 2D keypoints (pixels, possibly noisy)
  Pose2D u;  ///< clean projection of y
  Pose3D y;  ///< root-relative ground truth (mm)
  std::size_t frame_index = 0;
};

struct Dataset {
  CameraModel camera;
  std::vector<Sample> samples;
  std::string config_digest;

  int joint_count() const { return samples.empty() ? 0 : static_cast<int>(samples.front().y.rows()); }
  std::size_t size() const { return samples.size(); }
};

using JointAngles = std::vector<Eigen::Vector3d>;

/// Throws ContractError on inconsistent sizes, non-positive or unmirrored
/// bone lengths.
void validate_generator(const GeneratorConfig& config);
void validate_camera(const CameraModel& camera, const GeneratorConfig& config);

JointAngles sample_angles(const GeneratorConfig& config, Rng& rng);
Pose3D forward_kinematics(const GeneratorConfig& config, const JointAngles& angles);
Pose3D generate_pose(const GeneratorConfig& config, Rng& rng);

/// pixel = principal_point + focal * (x, y) / (subject_depth + z).
Pose2D project(const CameraModel& camera, const Pose3D& pose);

/// Sequential frames interpolated between angle keyframes, projected and
/// corrupted with Gaussian pixel noise. Deterministic in config.seed.
Dataset make_dataset(const GeneratorConfig& config, const CameraModel& camera);

nlohmann::json to_json(const GeneratorConfig& config);
GeneratorConfig generator_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CameraModel& camera);
CameraModel camera_from_json(const nlohmann::json& j);
std::string generator_digest(const GeneratorConfig& config, const CameraModel& camera);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
/// One sample per line: frame, u (2J), x (2J), y (3J); header row names
/// every column.
void export_dataset_text(const Dataset& data, const std::filesystem::path& path);

// -- model-space conversion -------------------------------------------------
// Networks see 2D keypoints back-projected onto the subject plane and 3D
// poses in meters, so both live on a unit-ish scale.

inline constexpr double kMetersPerMm = 1e-3;

/// B x 2J rows of normalized 2D inputs.
Matrix normalize_inputs(const CameraModel& camera, std::span<const Pose2D> poses);
Matrix normalize_input(const CameraModel& camera, const Pose2D& pose);
/// B x 3J rows in meters.
Matrix poses_to_rows(std::span<const Pose3D> poses);
Matrix pose_to_row(const Pose3D& pose);
/// Inverse of pose_to_row for one row (back to millimeters).
Pose3D row_to_pose(const Eigen::Ref<const Eigen::RowVectorXd>& row);

}  // namespace sealpose
