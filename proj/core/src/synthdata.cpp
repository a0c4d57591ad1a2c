#include "sealpose/synthdata.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "sealpose/digest.hpp"
#include "sealpose/errors.hpp"

namespace sealpose {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

AngleRange range_deg(Eigen::Vector3d lo, Eigen::Vector3d hi) { return AngleRange{lo * kDeg, hi * kDeg}; }

Eigen::Matrix3d euler_rotation(const Eigen::Vector3d& a) {
  return (Eigen::AngleAxisd(a.z(), Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(a.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(a.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

std::vector<double> max_root_path(const GeneratorConfig& config) {
  const SkeletonSpec& spec = config.spec;
  std::vector<double> dist(static_cast<std::size_t>(spec.joint_count()), 0.0);
  const auto parent = spec.parents();
  std::vector<int> seg_of(static_cast<std::size_t>(spec.joint_count()), -1);
  for (int s = 0; s < spec.segment_count(); ++s) {
    seg_of[static_cast<std::size_t>(spec.edges[static_cast<std::size_t>(s)].second)] = s;
  }
  for (int j : spec.topological_order()) {
    if (j == spec.root) continue;
    dist[static_cast<std::size_t>(j)] =
        dist[static_cast<std::size_t>(parent[static_cast<std::size_t>(j)])] +
        config.bone_lengths[static_cast<std::size_t>(seg_of[static_cast<std::size_t>(j)])];
  }
  return dist;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

constexpr char kDataMagic[8] = {'S', 'E', 'A', 'L', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kDataVersion = 1;

}  // namespace

GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig c;
  c.spec = SkeletonSpec::canonical17();
  // Segment order follows SkeletonSpec::canonical17 edges.
  c.bone_lengths = {130, 450, 440, 130, 450, 440, 230, 250, 110, 115, 150, 280, 250, 150, 280, 250};
  const Eigen::Vector3d left(1, 0, 0), right(-1, 0, 0), down(0, 1, 0), up(0, -1, 0);
  c.rest_directions = {right, down, down, left, down, down, up, up,
                       up,    up,   left, down, down, right, down, down};

  const Eigen::Vector3d zero = Eigen::Vector3d::Zero();
  const AngleRange fixed{zero, zero};
  const AngleRange hip = range_deg({-90, -20, -30}, {30, 20, 30});
  const AngleRange knee = range_deg({0, 0, 0}, {120, 0, 0});
  const AngleRange shoulder = range_deg({-120, -30, -90}, {60, 30, 90});
  const AngleRange elbow = range_deg({0, 0, 0}, {140, 0, 0});
  c.joint_angle_ranges = {
      range_deg({-10, -60, -10}, {10, 60, 10}),  // pelvis: global orientation
      hip,
      knee,
      fixed,
      hip,
      knee,
      fixed,
      range_deg({-20, -20, -15}, {40, 20, 15}),  // spine
      range_deg({-15, -20, -10}, {15, 20, 10}),  // thorax
      range_deg({-30, -40, -20}, {30, 40, 20}),  // neck
      fixed,
      shoulder,
      elbow,
      fixed,
      shoulder,
      elbow,
      fixed,
  };
  return c;
}

void validate_generator(const GeneratorConfig& config) {
  if (auto d = validate(config.spec)) throw ContractError("generator skeleton: " + d->message);
  const auto segs = static_cast<std::size_t>(config.spec.segment_count());
  const auto joints = static_cast<std::size_t>(config.spec.joint_count());
  if (config.bone_lengths.size() != segs) throw ContractError("generator: one bone length per segment required");
  if (config.rest_directions.size() != segs) {
    throw ContractError("generator: one rest direction per segment required");
  }
  if (config.joint_angle_ranges.size() != joints) {
    throw ContractError("generator: one angle range per joint required");
  }
  for (std::size_t s = 0; s < segs; ++s) {
    if (!(config.bone_lengths[s] > 0.0)) throw ContractError("generator: bone lengths must be positive");
    if (std::abs(config.rest_directions[s].norm() - 1.0) > 1e-9) {
      throw ContractError("generator: rest directions must be unit vectors");
    }
  }
  for (const auto& [l, r] : config.spec.symmetry_pairs) {
    if (config.bone_lengths[static_cast<std::size_t>(l)] != config.bone_lengths[static_cast<std::size_t>(r)]) {
      throw ContractError("generator: mirrored segments " + std::to_string(l) + "/" + std::to_string(r) +
                          " must share one length");
    }
  }
  if (config.noise_2d_sigma < 0.0) throw ContractError("generator: noise sigma must be >= 0");
  if (config.keyframe_interval < 1) throw ContractError("generator: keyframe interval must be >= 1");
}

void validate_camera(const CameraModel& camera, const GeneratorConfig& config) {
  if (!(camera.focal > 0.0)) throw ContractError("camera: focal length must be positive");
  const auto dist = max_root_path(config);
  const double extent = *std::max_element(dist.begin(), dist.end());
  if (!(camera.subject_depth > extent)) {
    throw ContractError("camera: subject depth must exceed the skeleton's extent (" + std::to_string(extent) +
                        " mm)");
  }
}

JointAngles sample_angles(const GeneratorConfig& config, Rng& rng) {
  JointAngles out;
  out.reserve(config.joint_angle_ranges.size());
  for (const AngleRange& r : config.joint_angle_ranges) {
    Eigen::Vector3d a;
    for (int k = 0; k < 3; ++k) {
      const double lo = std::min(r.lo(k), r.hi(k));
      const double hi = std::max(r.lo(k), r.hi(k));
      a(k) = lo == hi ? lo : rng.uniform(lo, hi);
    }
    out.push_back(a);
  }
  return out;
}

Pose3D forward_kinematics(const GeneratorConfig& config, const JointAngles& angles) {
  const SkeletonSpec& spec = config.spec;
  const int n = spec.joint_count();
  if (static_cast<int>(angles.size()) != n) throw ContractError("forward_kinematics: one angle triple per joint");
  std::vector<Eigen::Matrix3d> global(static_cast<std::size_t>(n));
  std::vector<int> seg_of(static_cast<std::size_t>(n), -1);
  for (int s = 0; s < spec.segment_count(); ++s) {
    seg_of[static_cast<std::size_t>(spec.edges[static_cast<std::size_t>(s)].second)] = s;
  }
  const auto parent = spec.parents();
  Pose3D pose = Pose3D::Zero(n, 3);
  for (int j : spec.topological_order()) {
    const auto ju = static_cast<std::size_t>(j);
    const Eigen::Matrix3d local = euler_rotation(angles[ju]);
    if (j == spec.root) {
      global[ju] = local;
      continue;
    }
    const auto p = static_cast<std::size_t>(parent[ju]);
    const auto s = static_cast<std::size_t>(seg_of[ju]);
    const Eigen::Vector3d offset = global[p] * (config.bone_lengths[s] * config.rest_directions[s]);
    pose.row(j) = pose.row(static_cast<Eigen::Index>(p)) + offset.transpose();
    global[ju] = global[p] * local;
  }
  return pose;
}

Pose3D generate_pose(const GeneratorConfig& config, Rng& rng) {
  return forward_kinematics(config, sample_angles(config, rng));
}

Pose2D project(const CameraModel& camera, const Pose3D& pose) {
  Pose2D out(pose.rows(), 2);
  for (Eigen::Index j = 0; j < pose.rows(); ++j) {
    const double depth = camera.subject_depth + pose(j, 2);
    if (!(depth > 0.0)) {
      throw NumericError("project: joint " + std::to_string(j) + " has non-positive depth " + std::to_string(depth));
    }
    out(j, 0) = camera.principal_point.x() + camera.focal * pose(j, 0) / depth;
    out(j, 1) = camera.principal_point.y() + camera.focal * pose(j, 1) / depth;
  }
  return out;
}

Dataset make_dataset(const GeneratorConfig& config, const CameraModel& camera) {
  validate_generator(config);
  validate_camera(camera, config);
  const Rng base(config.seed);
  const auto interval = static_cast<std::size_t>(config.keyframe_interval);
  const std::size_t n_keys = config.n_samples / interval + 2;
  std::vector<JointAngles> keys;
  keys.reserve(n_keys);
  for (std::size_t k = 0; k < n_keys; ++k) {
    Rng rng = base.derive(k);
    keys.push_back(sample_angles(config, rng));
  }

  Dataset data;
  data.camera = camera;
  data.config_digest = generator_digest(config, camera);
  data.samples.resize(config.n_samples);
  const std::uint64_t noise_stream = 1ULL << 40;
  for (std::size_t i = 0; i < config.n_samples; ++i) {
    const std::size_t k = i / interval;
    const double t = static_cast<double>(i % interval) / static_cast<double>(interval);
    JointAngles angles(keys[k].size());
    for (std::size_t j = 0; j < angles.size(); ++j) angles[j] = (1.0 - t) * keys[k][j] + t * keys[k + 1][j];

    Sample& s = data.samples[i];
    s.frame_index = i;
    s.y = forward_kinematics(config, angles);
    s.u = project(camera, s.y);
    s.x = s.u;
    if (config.noise_2d_sigma > 0.0) {
      Rng noise = base.derive(noise_stream + i);
      for (Eigen::Index j = 0; j < s.x.rows(); ++j) {
        s.x(j, 0) += config.noise_2d_sigma * noise.normal();
        s.x(j, 1) += config.noise_2d_sigma * noise.normal();
      }
    }
  }
  return data;
}

nlohmann::json to_json(const GeneratorConfig& c) {
  nlohmann::json j;
  j["skeleton"] = to_json(c.spec);
  j["bone_lengths"] = c.bone_lengths;
  j["rest_directions"] = nlohmann::json::array();
  for (const auto& d : c.rest_directions) j["rest_directions"].push_back({d.x(), d.y(), d.z()});
  j["joint_angle_ranges"] = nlohmann::json::array();
  for (const auto& r : c.joint_angle_ranges) {
    j["joint_angle_ranges"].push_back(
        {{"lo", {r.lo.x(), r.lo.y(), r.lo.z()}}, {"hi", {r.hi.x(), r.hi.y(), r.hi.z()}}});
  }
  j["noise_2d_sigma"] = c.noise_2d_sigma;
  j["n_samples"] = c.n_samples;
  j["seed"] = c.seed;
  j["keyframe_interval"] = c.keyframe_interval;
  return j;
}

GeneratorConfig generator_from_json(const nlohmann::json& j) {
  GeneratorConfig c = GeneratorConfig::defaults();
  try {
    if (j.contains("skeleton")) c.spec = skeleton_from_json(j.at("skeleton"));
    if (j.contains("bone_lengths")) c.bone_lengths = j.at("bone_lengths").get<std::vector<double>>();
    if (j.contains("rest_directions")) {
      c.rest_directions.clear();
      for (const auto& d : j.at("rest_directions")) {
        c.rest_directions.emplace_back(d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>());
      }
    }
    if (j.contains("joint_angle_ranges")) {
      c.joint_angle_ranges.clear();
      for (const auto& r : j.at("joint_angle_ranges")) {
        AngleRange a;
        for (int k = 0; k < 3; ++k) {
          a.lo(k) = r.at("lo").at(k).get<double>();
          a.hi(k) = r.at("hi").at(k).get<double>();
        }
        c.joint_angle_ranges.push_back(a);
      }
    }
    c.noise_2d_sigma = j.value("noise_2d_sigma", c.noise_2d_sigma);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.seed = j.value("seed", c.seed);
    c.keyframe_interval = j.value("keyframe_interval", c.keyframe_interval);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("generator config: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const CameraModel& c) {
  return {{"focal", c.focal},
          {"principal_point", {c.principal_point.x(), c.principal_point.y()}},
          {"subject_depth", c.subject_depth}};
}

CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel c;
  try {
    c.focal = j.value("focal", c.focal);
    if (j.contains("principal_point")) {
      c.principal_point = {j.at("principal_point").at(0).get<double>(), j.at("principal_point").at(1).get<double>()};
    }
    c.subject_depth = j.value("subject_depth", c.subject_depth);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("camera config: ") + e.what());
  }
  return c;
}

std::string generator_digest(const GeneratorConfig& config, const CameraModel& camera) {
  nlohmann::json j{{"generator", to_json(config)}, {"camera", to_json(camera)}};
  return digest_hex(j.dump());
}

// Layout: magic[8] | version u32 | J u32 | n u64 | focal, cx, cy, depth f64 |
//   digest_len u32 | digest | n x (u[2J], x[2J], y[3J] f64)
void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little);
  const auto J = static_cast<std::uint32_t>(data.joint_count());
  std::string out(kDataMagic, sizeof(kDataMagic));
  put<std::uint32_t>(out, kDataVersion);
  put<std::uint32_t>(out, J);
  put<std::uint64_t>(out, data.samples.size());
  put<double>(out, data.camera.focal);
  put<double>(out, data.camera.principal_point.x());
  put<double>(out, data.camera.principal_point.y());
  put<double>(out, data.camera.subject_depth);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.config_digest.size()));
  out.append(data.config_digest);
  for (const Sample& s : data.samples) {
    out.append(reinterpret_cast<const char*>(s.u.data()), sizeof(double) * s.u.size());
    out.append(reinterpret_cast<const char*>(s.x.data()), sizeof(double) * s.x.size());
    out.append(reinterpret_cast<const char*>(s.y.data()), sizeof(double) * s.y.size());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(path.string() + ": write failed");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string() + ": cannot open dataset");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw IoError(path.string() + ": truncated dataset file");
  };
  auto get = [&]<typename T>(T*) {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  };
  need(sizeof(kDataMagic));
  if (std::memcmp(bytes.data(), kDataMagic, sizeof(kDataMagic)) != 0) {
    throw IoError(path.string() + ": not a dataset file (bad magic)");
  }
  pos += sizeof(kDataMagic);
  const auto version = get(static_cast<std::uint32_t*>(nullptr));
  if (version != kDataVersion) throw IoError(path.string() + ": unsupported dataset version " + std::to_string(version));
  const auto J = static_cast<Eigen::Index>(get(static_cast<std::uint32_t*>(nullptr)));
  const auto n = get(static_cast<std::uint64_t*>(nullptr));
  Dataset data;
  data.camera.focal = get(static_cast<double*>(nullptr));
  data.camera.principal_point.x() = get(static_cast<double*>(nullptr));
  data.camera.principal_point.y() = get(static_cast<double*>(nullptr));
  data.camera.subject_depth = get(static_cast<double*>(nullptr));
  const auto digest_len = get(static_cast<std::uint32_t*>(nullptr));
  need(digest_len);
  data.config_digest = bytes.substr(pos, digest_len);
  pos += digest_len;
  const std::size_t record = static_cast<std::size_t>(7 * J) * sizeof(double);
  need(record * n);
  if (pos + record * n != bytes.size()) throw IoError(path.string() + ": trailing bytes after dataset payload");
  data.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample& s = data.samples[i];
    s.frame_index = i;
    s.u.resize(J, 2);
    s.x.resize(J, 2);
    s.y.resize(J, 3);
    std::memcpy(s.u.data(), bytes.data() + pos, sizeof(double) * 2 * J);
    pos += sizeof(double) * 2 * J;
    std::memcpy(s.x.data(), bytes.data() + pos, sizeof(double) * 2 * J);
    pos += sizeof(double) * 2 * J;
    std::memcpy(s.y.data(), bytes.data() + pos, sizeof(double) * 3 * J);
    pos += sizeof(double) * 3 * J;
  }
  return data;
}

void export_dataset_text(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  const int J = data.joint_count();
  f << "frame";
  for (const char* block : {"u", "x"}) {
    for (int j = 0; j < J; ++j) f << "," << block << j << "_x," << block << j << "_y";
  }
  for (int j = 0; j < J; ++j) f << ",y" << j << "_x,y" << j << "_y,y" << j << "_z";
  f << "\n";
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    f << "," << buf;
  };
  for (const Sample& s : data.samples) {
    f << s.frame_index;
    for (Eigen::Index k = 0; k < s.u.size(); ++k) emit(s.u.data()[k]);
    for (Eigen::Index k = 0; k < s.x.size(); ++k) emit(s.x.data()[k]);
    for (Eigen::Index k = 0; k < s.y.size(); ++k) emit(s.y.data()[k]);
    f << "\n";
  }
}

Matrix normalize_input(const CameraModel& camera, const Pose2D& pose) {
  const double s = camera.subject_depth * kMetersPerMm / camera.focal;
  Matrix row(1, 2 * pose.rows());
  for (Eigen::Index j = 0; j < pose.rows(); ++j) {
    row(0, 2 * j) = (pose(j, 0) - camera.principal_point.x()) * s;
    row(0, 2 * j + 1) = (pose(j, 1) - camera.principal_point.y()) * s;
  }
  return row;
}

Matrix normalize_inputs(const CameraModel& camera, std::span<const Pose2D> poses) {
  if (poses.empty()) return Matrix(0, 0);
  Matrix out(static_cast<Eigen::Index>(poses.size()), 2 * poses.front().rows());
  for (std::size_t i = 0; i < poses.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = normalize_input(camera, poses[i]);
  return out;
}

Matrix pose_to_row(const Pose3D& pose) {
  return Eigen::Map<const Matrix>(pose.data(), 1, pose.size()) * kMetersPerMm;
}

Matrix poses_to_rows(std::span<const Pose3D> poses) {
  if (poses.empty()) return Matrix(0, 0);
  Matrix out(static_cast<Eigen::Index>(poses.size()), poses.front().size());
  for (std::size_t i = 0; i < poses.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pose_to_row(poses[i]);
  return out;
}

Pose3D row_to_pose(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (row.size() % 3 != 0) throw ContractError("row_to_pose: width must be a multiple of 3");
  Pose3D pose(row.size() / 3, 3);
  for (Eigen::Index k = 0; k < row.size(); ++k) pose.data()[k] = row(k) / kMetersPerMm;
  return pose;
}

}  // namespace sealpose
