#include "sealpose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "sealpose/errors.hpp"

namespace sealpose {

namespace {

constexpr double kMinLength = 1e-9;

void require_same(const Pose3D& a, const Pose3D& b, const char* op) {
  if (a.rows() != b.rows()) throw ContractError(std::string(op) + ": joint counts differ");
}

Eigen::VectorXd joint_errors(const Pose3D& pred, const Pose3D& gt) {
  return (pred - gt).rowwise().norm();
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double mpjpe(const Pose3D& pred, const Pose3D& gt) {
  require_same(pred, gt, "mpjpe");
  if (pred.rows() == 0) throw ContractError("mpjpe: empty pose");
  return joint_errors(pred, gt).mean();
}

double mpjpe_2d(const Pose2D& a, const Pose2D& b) {
  if (a.rows() != b.rows() || a.rows() == 0) throw ContractError("mpjpe_2d: joint counts differ");
  return (a - b).rowwise().norm().mean();
}

Pose3D procrustes_align(const Pose3D& pred, const Pose3D& gt, bool allow_reflection) {
  require_same(pred, gt, "procrustes_align");
  const Eigen::RowVector3d mu_p = pred.colwise().mean();
  const Eigen::RowVector3d mu_g = gt.colwise().mean();
  const Eigen::MatrixX3d X = pred.rowwise() - mu_p;
  const Eigen::MatrixX3d Y = gt.rowwise() - mu_g;
  if (Y.squaredNorm() < kMinLength * kMinLength) {
    throw NumericError("procrustes_align: ground-truth joints are coincident");
  }
  const double norm_x = X.squaredNorm();
  if (norm_x == 0.0) {
    Pose3D out = Pose3D::Zero(pred.rows(), 3);
    out.rowwise() += mu_g;
    return out;
  }
  const Eigen::Matrix3d M = X.transpose() * Y;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU();
  Eigen::Vector3d S = svd.singularValues();
  const Eigen::Matrix3d V = svd.matrixV();
  if (!allow_reflection && (U * V.transpose()).determinant() < 0.0) {
    U.col(2) *= -1.0;
    S(2) *= -1.0;
  }
  const Eigen::Matrix3d R = U * V.transpose();
  const double scale = S.sum() / norm_x;
  Pose3D out = scale * (X * R);
  out.rowwise() += mu_g;
  return out;
}

double p_mpjpe(const Pose3D& pred, const Pose3D& gt, bool allow_reflection) {
  return mpjpe(procrustes_align(pred, gt, allow_reflection), gt);
}

double pck(const Pose3D& pred, const Pose3D& gt, double threshold_mm) {
  require_same(pred, gt, "pck");
  if (!(threshold_mm >= 0.0)) throw ContractError("pck: threshold must be non-negative");
  const Eigen::VectorXd err = joint_errors(pred, gt);
  const auto hits = (err.array() <= threshold_mm).count();
  return 100.0 * static_cast<double>(hits) / static_cast<double>(err.size());
}

double auc(const Pose3D& pred, const Pose3D& gt) {
  double total = 0.0;
  constexpr int kSteps = 31;
  for (int i = 0; i < kSteps; ++i) total += pck(pred, gt, 5.0 * i);
  return total / kSteps;
}

double lse(const Pose3D& pose, const SkeletonSpec& spec, SkipCount* skips) {
  if (spec.symmetry_pairs.empty()) throw ContractError("lse: skeleton has no symmetry pairs");
  const Eigen::VectorXd len = segment_lengths(pose, spec);
  double total = 0.0;
  int used = 0;
  for (const auto& [l, r] : spec.symmetry_pairs) {
    const double a = len(l), b = len(r);
    if (a < kMinLength && b < kMinLength) {
      if (skips) skips->skipped++;
      continue;
    }
    total += 100.0 * std::abs((a - b) / ((a + b) / 2.0));
    ++used;
  }
  return used ? total / used : 0.0;
}

double bsle(const Pose3D& pred, const Pose3D& gt, const SkeletonSpec& spec, std::span<const int> segments,
            SkipCount* skips) {
  require_same(pred, gt, "bsle");
  if (segments.empty()) throw ContractError("bsle: no segments selected");
  const Eigen::VectorXd lp = segment_lengths(pred, spec);
  const Eigen::VectorXd lg = segment_lengths(gt, spec);
  double total = 0.0;
  int used = 0;
  for (int s : segments) {
    if (s < 0 || s >= spec.segment_count()) throw ContractError("bsle: segment index out of range");
    if (lg(s) < kMinLength) {
      if (skips) skips->skipped++;
      continue;
    }
    total += 100.0 * std::abs(lp(s) - lg(s)) / lg(s);
    ++used;
  }
  return used ? total / used : 0.0;
}

double bsle(const Pose3D& pred, const Pose3D& gt, const SkeletonSpec& spec, SkipCount* skips) {
  std::vector<int> all(static_cast<std::size_t>(spec.segment_count()));
  std::iota(all.begin(), all.end(), 0);
  return bsle(pred, gt, spec, all, skips);
}

double lle(const Pose3D& pred, const Pose3D& gt, const SkeletonSpec& spec, SkipCount* skips) {
  return bsle(pred, gt, spec, spec.limb_segments, skips);
}

namespace {

struct PairCounts {
  long long concordant = 0;
  long long discordant = 0;
  long long ties_a = 0;  // tied in a only
  long long ties_b = 0;  // tied in b only
  long long total = 0;
};

PairCounts count_pairs(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("rank correlation: sequences differ in length");
  if (a.size() < 2) throw ContractError("rank correlation: at least two observations required");
  PairCounts c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      ++c.total;
      if (da == 0.0 && db == 0.0) continue;
      if (da == 0.0) {
        ++c.ties_a;
      } else if (db == 0.0) {
        ++c.ties_b;
      } else if ((da > 0.0) == (db > 0.0)) {
        ++c.concordant;
      } else {
        ++c.discordant;
      }
    }
  }
  return c;
}

}  // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  const PairCounts c = count_pairs(a, b);
  const double untied_a = static_cast<double>(c.concordant + c.discordant + c.ties_b);
  const double untied_b = static_cast<double>(c.concordant + c.discordant + c.ties_a);
  if (untied_a == 0.0 || untied_b == 0.0) return 0.0;
  return static_cast<double>(c.concordant - c.discordant) / std::sqrt(untied_a * untied_b);
}

double ordering_accuracy(std::span<const double> a, std::span<const double> b) {
  const PairCounts c = count_pairs(a, b);
  const long long compared = c.concordant + c.discordant;
  if (compared == 0) return 0.0;
  return 100.0 * static_cast<double>(c.concordant) / static_cast<double>(compared);
}

std::string MetricsReport::csv_header() { return "n_samples,mpjpe,p_mpjpe,pck,auc,lse,bsle,lle"; }

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os << n_samples << "," << format_double(mpjpe) << "," << format_double(p_mpjpe) << "," << format_double(pck)
     << "," << format_double(auc) << "," << format_double(lse) << "," << format_double(bsle) << ","
     << format_double(lle);
  return os.str();
}

void MetricsReport::write_text(std::ostream& os) const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "samples   %zu\nMPJPE     %.3f mm\nP-MPJPE   %.3f mm\nPCK@150   %.2f %%\nAUC       %.2f %%\n"
                "LSE       %.3f %%\nBSLE      %.3f %%\nLLE       %.3f %%\n",
                n_samples, mpjpe, p_mpjpe, pck, auc, lse, bsle, lle);
  os << buf;
}

MetricsReport evaluate_poses(std::span<const Pose3D> preds, std::span<const Pose3D> gts, const SkeletonSpec& spec) {
  if (preds.size() != gts.size()) throw ContractError("evaluate_poses: prediction and ground-truth counts differ");
  MetricsReport r;
  r.n_samples = preds.size();
  if (preds.empty()) return r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    r.mpjpe += mpjpe(preds[i], gts[i]);
    r.p_mpjpe += p_mpjpe(preds[i], gts[i]);
    r.pck += pck(preds[i], gts[i]);
    r.auc += auc(preds[i], gts[i]);
    r.lse += lse(preds[i], spec);
    r.bsle += bsle(preds[i], gts[i], spec);
    r.lle += lle(preds[i], gts[i], spec);
  }
  const double n = static_cast<double>(preds.size());
  r.mpjpe /= n;
  r.p_mpjpe /= n;
  r.pck /= n;
  r.auc /= n;
  r.lse /= n;
  r.bsle /= n;
  r.lle /= n;
  return r;
}

std::string BinnedStructureReport::csv_header() { return "bin_low,bin_high,system,count,lse,bsle,lle"; }

void BinnedStructureReport::write_csv(std::ostream& os) const {
  os << csv_header() << "\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const Row& r : rows) {
    os << format_double(r.bin_low) << "," << format_double(r.bin_high) << "," << r.system << "," << r.count << ","
       << opt(r.lse) << "," << opt(r.bsle) << "," << opt(r.lle) << "\n";
  }
}

BinnedStructureReport binned_structure_report(std::span<const Pose3D> pred_a, std::span<const Pose3D> pred_b,
                                              std::span<const Pose3D> gt, const SkeletonSpec& spec, int n_bins,
                                              const std::string& label_a, const std::string& label_b) {
  if (n_bins < 1) throw ContractError("binned_structure_report: n_bins must be >= 1");
  if (pred_a.size() != gt.size() || pred_b.size() != gt.size() || gt.empty()) {
    throw ContractError("binned_structure_report: sample lists must be aligned and non-empty");
  }
  const std::size_t n = gt.size();
  std::vector<double> pa(n), pb(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[i] = p_mpjpe(pred_a[i], gt[i]);
    pb[i] = p_mpjpe(pred_b[i], gt[i]);
  }
  std::vector<double> all(pa);
  all.insert(all.end(), pb.begin(), pb.end());
  std::sort(all.begin(), all.end());

  BinnedStructureReport report;
  report.edges.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int k = 0; k <= n_bins; ++k) {
    const double q = static_cast<double>(k) / n_bins;
    const double pos = q * static_cast<double>(all.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, all.size() - 1);
    report.edges[static_cast<std::size_t>(k)] = all[lo] + (pos - static_cast<double>(lo)) * (all[hi] - all[lo]);
  }
  report.edges.front() = all.front();
  report.edges.back() = all.back();

  auto bin_of = [&](double v) {
    const auto it = std::upper_bound(report.edges.begin() + 1, report.edges.end() - 1, v);
    return static_cast<int>(it - (report.edges.begin() + 1));
  };

  auto add_system = [&](std::span<const Pose3D> preds, const std::vector<double>& perr, const std::string& label) {
    std::vector<std::size_t> count(static_cast<std::size_t>(n_bins), 0);
    std::vector<double> s_lse(static_cast<std::size_t>(n_bins), 0.0), s_bsle(s_lse), s_lle(s_lse);
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = static_cast<std::size_t>(bin_of(perr[i]));
      count[b]++;
      s_lse[b] += lse(preds[i], spec);
      s_bsle[b] += bsle(preds[i], gt[i], spec);
      s_lle[b] += lle(preds[i], gt[i], spec);
    }
    for (int b = 0; b < n_bins; ++b) {
      const auto bu = static_cast<std::size_t>(b);
      BinnedStructureReport::Row row;
      row.bin_low = report.edges[bu];
      row.bin_high = report.edges[bu + 1];
      row.system = label;
      row.count = count[bu];
      if (count[bu] > 0) {
        const double c = static_cast<double>(count[bu]);
        row.lse = s_lse[bu] / c;
        row.bsle = s_bsle[bu] / c;
        row.lle = s_lle[bu] / c;
      }
      report.rows.push_back(row);
    }
  };
  add_system(pred_a, pa, label_a);
  add_system(pred_b, pb, label_b);
  return report;
}

}  // namespace sealpose
