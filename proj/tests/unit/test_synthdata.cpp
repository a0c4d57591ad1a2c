#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "sealpose/errors.hpp"
#include "sealpose/metrics.hpp"
#include "sealpose/synthdata.hpp"

using namespace sealpose;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "sealpose_synthdata_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

bool same_bits(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
    {
      const double x = a(i, j), y = b(i, j);
      if (std::memcmp(&x, &y, sizeof(double)) != 0) return false;
    }
  return true;
}

}  // namespace

TEST(Project, HandValues) {
  CameraModel cam;
  cam.focal = 1000.0;
  cam.principal_point = {500.0, 500.0};
  cam.subject_depth = 4000.0;
  Pose3D p(2, 3);
  p << 0, 0, 0, 100, 0, 0;
  const Pose2D u = project(cam, p);
  EXPECT_EQ(u(0, 0), 500.0);
  EXPECT_EQ(u(0, 1), 500.0);
  EXPECT_DOUBLE_EQ(u(1, 0), 525.0);
  EXPECT_DOUBLE_EQ(u(1, 1), 500.0);

  // Doubling the depth halves the offset from the principal point.
  CameraModel far = cam;
  far.subject_depth = 8000.0;
  Pose3D q(1, 3);
  q << 100, -40, 0;
  const Pose2D a = project(cam, q), b = project(far, q);
  EXPECT_DOUBLE_EQ((b(0, 0) - 500.0) * 2.0, a(0, 0) - 500.0);
  EXPECT_DOUBLE_EQ((b(0, 1) - 500.0) * 2.0, a(0, 1) - 500.0);
}

TEST(Project, ProjectiveAmbiguity) {
  CameraModel cam;
  Pose3D p(1, 3);
  p << 120, -80, 300;
  CameraModel scaled = cam;
  scaled.subject_depth *= 3.0;
  const Pose3D p3 = p * 3.0;
  const Pose2D a = project(cam, p), b = project(scaled, p3);
  EXPECT_NEAR(a(0, 0), b(0, 0), 1e-9);
  EXPECT_NEAR(a(0, 1), b(0, 1), 1e-9);
}

TEST(Project, NonPositiveDepthIsNumericError) {
  CameraModel cam;
  cam.subject_depth = 100.0;
  Pose3D p(1, 3);
  p << 0, 0, -100;
  EXPECT_THROW(project(cam, p), NumericError);
}

TEST(Generator, SegmentLengthsRootAndSymmetry) {
  const GeneratorConfig cfg = GeneratorConfig::defaults();
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Pose3D p = generate_pose(cfg, rng);
    EXPECT_TRUE(p.row(cfg.spec.root).isZero(0.0));
    const Eigen::VectorXd len = segment_lengths(p, cfg.spec);
    for (int s = 0; s < cfg.spec.segment_count(); ++s) ASSERT_NEAR(len(s), cfg.bone_lengths[s], 1e-9);
    ASSERT_NEAR(lse(p, cfg.spec), 0.0, 1e-9);
    ASSERT_EQ(bsle(p, p, cfg.spec), 0.0);
  }
}

TEST(Generator, CollapsedRangesGiveTheRestPose) {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  for (auto& r : cfg.joint_angle_ranges) r.hi = r.lo;
  Rng a(1), b(99);
  const Pose3D p = generate_pose(cfg, a), q = generate_pose(cfg, b);
  EXPECT_TRUE(same_bits(p, q));
}

TEST(Generator, InvalidConfigsAreRejected) {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  cfg.bone_lengths[0] = 0.0;
  EXPECT_THROW(validate_generator(cfg), ContractError);
  cfg = GeneratorConfig::defaults();
  const auto [l, r] = cfg.spec.symmetry_pairs.front();
  cfg.bone_lengths[l] += 1.0;
  (void)r;
  EXPECT_THROW(validate_generator(cfg), ContractError);
  CameraModel cam;
  cam.subject_depth = 10.0;
  EXPECT_THROW(validate_camera(cam, GeneratorConfig::defaults()), ContractError);
}

TEST(Dataset, NoiseFreeInputsEqualCleanProjection) {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  cfg.noise_2d_sigma = 0.0;
  cfg.n_samples = 50;
  const Dataset d = make_dataset(cfg, CameraModel{});
  ASSERT_EQ(d.size(), 50u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_TRUE(same_bits(d.samples[i].x, d.samples[i].u));
    EXPECT_EQ(d.samples[i].frame_index, i);
    EXPECT_TRUE(same_bits(project(d.camera, d.samples[i].y), d.samples[i].u));
  }
}

TEST(Dataset, DeterministicAndNoisy) {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  cfg.n_samples = 200;
  const Dataset a = make_dataset(cfg, CameraModel{});
  const Dataset b = make_dataset(cfg, CameraModel{});
  double noise_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(same_bits(a.samples[i].x, b.samples[i].x));
    EXPECT_TRUE(same_bits(a.samples[i].y, b.samples[i].y));
    noise_sq += (a.samples[i].x - a.samples[i].u).squaredNorm();
    count += static_cast<std::size_t>(a.samples[i].x.size());
  }
  EXPECT_NEAR(std::sqrt(noise_sq / count), cfg.noise_2d_sigma, 0.1);
  cfg.seed = 1;
  const Dataset c = make_dataset(cfg, CameraModel{});
  EXPECT_FALSE(same_bits(a.samples[5].y, c.samples[5].y));
}

TEST(Dataset, ConsecutiveFramesAreSmooth) {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  cfg.n_samples = 300;
  const Dataset d = make_dataset(cfg, CameraModel{});
  double neighbour = 0.0, random = 0.0;
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    neighbour += mpjpe(d.samples[i].y, d.samples[i + 1].y);
    random += mpjpe(d.samples[i].y, d.samples[(i * 97 + 31) % d.size()].y);
  }
  EXPECT_LT(neighbour, 0.5 * random);
}

TEST(Dataset, FileRoundTripAndTextExport) {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  cfg.n_samples = 100;
  const Dataset d = make_dataset(cfg, CameraModel{});
  const auto path = temp_path("d.bin");
  save_dataset(d, path);
  const Dataset back = load_dataset(path);
  ASSERT_EQ(back.size(), 100u);
  EXPECT_EQ(back.config_digest, d.config_digest);
  EXPECT_EQ(back.camera.focal, d.camera.focal);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_TRUE(same_bits(back.samples[i].x, d.samples[i].x));
    EXPECT_TRUE(same_bits(back.samples[i].u, d.samples[i].u));
    EXPECT_TRUE(same_bits(back.samples[i].y, d.samples[i].y));
  }

  const auto txt = temp_path("d.txt");
  export_dataset_text(d, txt);
  std::ifstream f(txt);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) ++lines;
  EXPECT_EQ(lines, 101);  // header + one row per sample

  std::ofstream(temp_path("junk.bin")) << "not a dataset";
  EXPECT_THROW(load_dataset(temp_path("junk.bin")), IoError);
}

TEST(Dataset, FiveThousandSamplesGenerateQuickly) {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  cfg.n_samples = 5000;
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset d = make_dataset(cfg, CameraModel{});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(d.size(), 5000u);
  EXPECT_LT(secs, 5.0);
}

TEST(ModelSpace, NormalizationRoundTrips) {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  cfg.n_samples = 3;
  const Dataset d = make_dataset(cfg, CameraModel{});
  const Matrix row = pose_to_row(d.samples[0].y);
  EXPECT_EQ(row.cols(), 3 * d.joint_count());
  const Pose3D back = row_to_pose(row.row(0));
  EXPECT_LT((back - d.samples[0].y).cwiseAbs().maxCoeff(), 1e-12);
  // Principal point maps to the origin of the normalized plane.
  Pose2D pp(1, 2);
  pp << d.camera.principal_point.x(), d.camera.principal_point.y();
  EXPECT_TRUE(normalize_input(d.camera, pp).isZero(0.0));
}
