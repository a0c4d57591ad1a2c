#include "sealpose/skeleton.hpp"

#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sealpose/errors.hpp"

namespace sealpose {

SkeletonSpec SkeletonSpec::canonical17() {
  SkeletonSpec s;
  s.name = "canonical17";
  s.joint_names = {"pelvis",     "right_hip",      "right_knee",  "right_ankle", "left_hip",
                   "left_knee",  "left_ankle",     "spine",       "thorax",      "neck",
                   "head",       "left_shoulder",  "left_elbow",  "left_wrist",  "right_shoulder",
                   "right_elbow", "right_wrist"};
  s.edges = {{0, 1},  {1, 2},  {2, 3},   {0, 4},   {4, 5},   {5, 6},   {0, 7},   {7, 8},
             {8, 9},  {9, 10}, {8, 11},  {11, 12}, {12, 13}, {8, 14},  {14, 15}, {15, 16}};
  // Segments: 1 right thigh, 2 right shin, 4 left thigh, 5 left shin,
  // 11 left upper arm, 12 left forearm, 14 right upper arm, 15 right forearm.
  s.symmetry_pairs = {{4, 1}, {5, 2}, {11, 14}, {12, 15}};
  s.limb_segments = {1, 2, 4, 5, 11, 12, 14, 15};
  s.root = 0;
  return s;
}

std::vector<int> SkeletonSpec::parents() const {
  std::vector<int> parent(static_cast<std::size_t>(joint_count()), -1);
  for (const auto& [p, c] : edges) parent[static_cast<std::size_t>(c)] = p;
  return parent;
}

std::vector<int> SkeletonSpec::topological_order() const {
  const int n = joint_count();
  std::vector<std::vector<int>> children(static_cast<std::size_t>(n));
  for (const auto& [p, c] : edges) children[static_cast<std::size_t>(p)].push_back(c);
  std::vector<int> order;
  std::deque<int> queue{root};
  while (!queue.empty()) {
    const int j = queue.front();
    queue.pop_front();
    order.push_back(j);
    for (int c : children[static_cast<std::size_t>(j)]) queue.push_back(c);
  }
  return order;
}

namespace {

SkeletonDiagnostic diag(SkeletonDiagnostic::Kind kind, std::string msg) {
  return SkeletonDiagnostic{kind, std::move(msg)};
}

int find_root(std::vector<int>& uf, int x) {
  while (uf[static_cast<std::size_t>(x)] != x) {
    uf[static_cast<std::size_t>(x)] = uf[static_cast<std::size_t>(uf[static_cast<std::size_t>(x)])];
    x = uf[static_cast<std::size_t>(x)];
  }
  return x;
}

}  // namespace

std::optional<SkeletonDiagnostic> validate(const SkeletonSpec& spec) {
  using Kind = SkeletonDiagnostic::Kind;
  const int n = spec.joint_count();
  if (n == 0) return diag(Kind::kEmpty, "skeleton has no joints");
  if (spec.root < 0 || spec.root >= n) {
    return diag(Kind::kRootOutOfBounds, "root index " + std::to_string(spec.root) + " out of range");
  }
  for (std::size_t i = 0; i < spec.edges.size(); ++i) {
    const auto [p, c] = spec.edges[i];
    if (p < 0 || p >= n || c < 0 || c >= n) {
      return diag(Kind::kIndexOutOfBounds, "edge " + std::to_string(i) + " references joint outside [0, " +
                                               std::to_string(n) + ")");
    }
    if (p == c) return diag(Kind::kSelfLoop, "edge " + std::to_string(i) + " is a self loop");
  }

  std::vector<int> uf(static_cast<std::size_t>(n));
  std::iota(uf.begin(), uf.end(), 0);
  for (std::size_t i = 0; i < spec.edges.size(); ++i) {
    const int a = find_root(uf, spec.edges[i].first);
    const int b = find_root(uf, spec.edges[i].second);
    if (a == b) return diag(Kind::kCycle, "edge " + std::to_string(i) + " closes a cycle");
    uf[static_cast<std::size_t>(a)] = b;
  }
  if (static_cast<int>(spec.edges.size()) != n - 1) {
    return diag(Kind::kDisconnected, "tree over " + std::to_string(n) + " joints needs " +
                                         std::to_string(n - 1) + " edges, got " +
                                         std::to_string(spec.edges.size()));
  }

  std::vector<int> parent_count(static_cast<std::size_t>(n), 0);
  for (const auto& [p, c] : spec.edges) parent_count[static_cast<std::size_t>(c)]++;
  for (int j = 0; j < n; ++j) {
    const int expected = j == spec.root ? 0 : 1;
    if (parent_count[static_cast<std::size_t>(j)] != expected) {
      return diag(Kind::kBadOrientation, "joint " + std::to_string(j) + " has " +
                                             std::to_string(parent_count[static_cast<std::size_t>(j)]) +
                                             " parents; edges must point away from the root");
    }
  }

  const int segs = spec.segment_count();
  for (std::size_t i = 0; i < spec.symmetry_pairs.size(); ++i) {
    const auto [l, r] = spec.symmetry_pairs[i];
    if (l < 0 || l >= segs || r < 0 || r >= segs) {
      return diag(Kind::kSymmetryOutOfBounds, "symmetry pair " + std::to_string(i) +
                                                  " references segment outside [0, " +
                                                  std::to_string(segs) + ")");
    }
    if (l == r) {
      return diag(Kind::kSymmetryDegenerate, "symmetry pair " + std::to_string(i) + " pairs a segment with itself");
    }
  }
  for (int s : spec.limb_segments) {
    if (s < 0 || s >= segs) {
      return diag(Kind::kLimbOutOfBounds, "limb segment " + std::to_string(s) + " out of range");
    }
  }
  return std::nullopt;
}

Eigen::MatrixXi SpdMatrix::buckets() const {
  return hops.unaryExpr([this](int v) { return std::min(v, max_distance); });
}

SpdMatrix compute_spd(const SkeletonSpec& spec, int max_distance) {
  if (max_distance < 1) throw ContractError("compute_spd: max_distance must be >= 1");
  const int n = spec.joint_count();
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& [p, c] : spec.edges) {
    if (p < 0 || p >= n || c < 0 || c >= n) throw StructuralError("compute_spd: edge out of range");
    adj[static_cast<std::size_t>(p)].push_back(c);
    adj[static_cast<std::size_t>(c)].push_back(p);
  }
  SpdMatrix out;
  out.max_distance = max_distance;
  out.hops = Eigen::MatrixXi::Constant(n, n, -1);
  for (int s = 0; s < n; ++s) {
    std::deque<int> queue{s};
    out.hops(s, s) = 0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int w : adj[static_cast<std::size_t>(u)]) {
        if (out.hops(s, w) >= 0) continue;
        out.hops(s, w) = out.hops(s, u) + 1;
        queue.push_back(w);
      }
    }
  }
  if ((out.hops.array() < 0).any()) throw StructuralError("compute_spd: skeleton is disconnected");
  return out;
}

Eigen::VectorXd segment_lengths(const Pose3D& pose, const SkeletonSpec& spec) {
  if (pose.rows() != spec.joint_count()) throw ContractError("segment_lengths: joint count mismatch");
  Eigen::VectorXd out(spec.segment_count());
  for (int i = 0; i < spec.segment_count(); ++i) {
    const auto [p, c] = spec.edges[static_cast<std::size_t>(i)];
    out(i) = (pose.row(c) - pose.row(p)).norm();
  }
  return out;
}

nlohmann::json to_json(const SkeletonSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["joints"] = spec.joint_names;
  j["root"] = spec.root;
  j["edges"] = nlohmann::json::array();
  for (const auto& [p, c] : spec.edges) j["edges"].push_back({p, c});
  j["symmetry_pairs"] = nlohmann::json::array();
  for (const auto& [l, r] : spec.symmetry_pairs) j["symmetry_pairs"].push_back({l, r});
  j["limb_segments"] = spec.limb_segments;
  return j;
}

SkeletonSpec skeleton_from_json(const nlohmann::json& j) {
  SkeletonSpec s;
  try {
    s.name = j.value("name", std::string("custom"));
    s.joint_names = j.at("joints").get<std::vector<std::string>>();
    s.root = j.value("root", 0);
    for (const auto& e : j.at("edges")) s.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    if (j.contains("symmetry_pairs")) {
      for (const auto& e : j.at("symmetry_pairs")) {
        s.symmetry_pairs.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
      }
    }
    if (j.contains("limb_segments")) s.limb_segments = j.at("limb_segments").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("skeleton spec: ") + e.what());
  }
  return s;
}

SkeletonSpec load_skeleton(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(path.string() + ": cannot open skeleton spec");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  SkeletonSpec s = skeleton_from_json(j);
  if (auto d = validate(s)) throw StructuralError(path.string() + ": " + d->message);
  return s;
}

void save_skeleton(const SkeletonSpec& spec, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  f << to_json(spec).dump(2) << "\n";
}

}  // namespace sealpose
