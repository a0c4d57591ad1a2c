#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "sealpose/types.hpp"

namespace sealpose {

/// Joint tree with named joints. Segment i is edges[i] = (parent, child).
struct SkeletonSpec {
  std::string name;
  std::vector<std::string> joint_names;
  std::vector<std::pair<int, int>> edges;
  /// (left segment, right segment) pairs compared by the symmetry metric.
  std::vector<std::pair<int, int>> symmetry_pairs;
  std::vector<int> limb_segments;
  int root = 0;

  int joint_count() const { return static_cast<int>(joint_names.size()); }
  int segment_count() const { return static_cast<int>(edges.size()); }

  /// Parent joint of every joint (-1 for the root). Requires a valid spec.
  std::vector<int> parents() const;
  /// Joints ordered so that every parent precedes its children.
  std::vector<int> topological_order() const;

  /// 17-joint pelvis-rooted body: right leg 1-3, left leg 4-6, spine 7-10,
  /// left arm 11-13, right arm 14-16.
  static SkeletonSpec canonical17();
};

struct SkeletonDiagnostic {
  enum class Kind {
    kEmpty,
    kRootOutOfBounds,
    kIndexOutOfBounds,
    kSelfLoop,
    kCycle,
    kDisconnected,
    kBadOrientation,
    kSymmetryOutOfBounds,
    kSymmetryDegenerate,
    kLimbOutOfBounds,
  };
  Kind kind;
  std::string message;
};

/// First violated structural rule, or nullopt when the spec is a valid tree.
std::optional<SkeletonDiagnostic> validate(const SkeletonSpec& spec);

/// Hop distances between all joint pairs on the skeleton tree.
struct SpdMatrix {
  Eigen::MatrixXi hops;
  int max_distance = 8;

  int at(int i, int j) const { return hops(i, j); }
  /// Distance clamped to max_distance, used as an attention-bias bucket.
  int bucket(int i, int j) const { return std::min(hops(i, j), max_distance); }
  Eigen::MatrixXi buckets() const;
};

/// BFS from every joint. Throws StructuralError if the tree is disconnected.
SpdMatrix compute_spd(const SkeletonSpec& spec, int max_distance = 8);

/// Euclidean length of every segment of a J x 3 pose.
Eigen::VectorXd segment_lengths(const Pose3D& pose, const SkeletonSpec& spec);

nlohmann::json to_json(const SkeletonSpec& spec);
SkeletonSpec skeleton_from_json(const nlohmann::json& j);
SkeletonSpec load_skeleton(const std::filesystem::path& path);
void save_skeleton(const SkeletonSpec& spec, const std::filesystem::path& path);

}  // namespace sealpose
