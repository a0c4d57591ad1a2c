#include "sealpose/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sealpose/errors.hpp"
#include "sealpose/metrics.hpp"

namespace sealpose {

namespace {

void require_same(const Pose3D& a, const Pose3D& b, const char* op) {
  if (a.rows() != b.rows()) throw ContractError(std::string(op) + ": pose shapes differ");
}

// Row vector that averages rows [start, start + w) of an n x 1 column.
Matrix window_average_row(std::size_t n, std::size_t start, int w) {
  Matrix row = Matrix::Zero(1, static_cast<Eigen::Index>(n));
  for (int i = 0; i < w; ++i) row(0, static_cast<Eigen::Index>(start) + i) = 1.0 / w;
  return row;
}

Pose3D window_mean_pose(std::span<const Pose3D> poses, std::size_t start, int w) {
  Pose3D mean = Pose3D::Zero(poses[start].rows(), 3);
  for (int i = 0; i < w; ++i) mean += poses[start + static_cast<std::size_t>(i)];
  return mean / static_cast<double>(w);
}

void check_window(std::size_t n, std::size_t t, std::size_t s, int w, std::size_t energy_count) {
  if (w < 1) throw ContractError("window_pair_loss: w must be >= 1");
  const auto uw = static_cast<std::size_t>(w);
  if (t + uw > n || s + uw > n) throw ContractError("window_pair_loss: window out of range");
  if (energy_count != n) throw ContractError("window_pair_loss: energies and poses differ in length");
}

}  // namespace

std::string to_string(LossNetObjective o) { return o == LossNetObjective::kMargin ? "margin" : "nce"; }

LossNetObjective parse_objective(const std::string& s) {
  if (s == "margin") return LossNetObjective::kMargin;
  if (s == "nce") return LossNetObjective::kNce;
  throw ContractError("unknown objective '" + s + "' (expected margin or nce)");
}

void validate(const ObjectiveConfig& c) {
  if (!(c.alpha >= 0.0)) throw ContractError("objective: alpha must be >= 0");
  if (!(c.kappa >= 0.0)) throw ContractError("objective: kappa must be >= 0");
  if (c.K < 0) throw ContractError("objective: K must be >= 0");
  if (!(c.R_max >= 0.0)) throw ContractError("objective: R_max must be >= 0");
  if (c.window_w < 1) throw ContractError("objective: window_w must be >= 1");
  if (c.n_random_pairs < 0) throw ContractError("objective: n_random_pairs must be >= 0");
  if (!(c.pair_weight >= 0.0) || !(c.window_weight >= 0.0))
    throw ContractError("objective: term weights must be >= 0");
}

nlohmann::json to_json(const ObjectiveConfig& c) {
  return {{"alpha", c.alpha},
          {"lossnet_objective", to_string(c.lossnet_objective)},
          {"kappa", c.kappa},
          {"K", c.K},
          {"R_max", c.R_max},
          {"window_w", c.window_w},
          {"n_random_pairs", c.n_random_pairs},
          {"pair_weight", c.pair_weight},
          {"window_weight", c.window_weight},
          {"sort_reference", c.sort_reference == SortReference::kInput ? "input" : "clean_projection"}};
}

ObjectiveConfig objective_from_json(const nlohmann::json& j) {
  ObjectiveConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.lossnet_objective = parse_objective(j.value("lossnet_objective", to_string(c.lossnet_objective)));
  c.kappa = j.value("kappa", c.kappa);
  c.K = j.value("K", c.K);
  c.R_max = j.value("R_max", c.R_max);
  c.window_w = j.value("window_w", c.window_w);
  c.n_random_pairs = j.value("n_random_pairs", c.n_random_pairs);
  c.pair_weight = j.value("pair_weight", c.pair_weight);
  c.window_weight = j.value("window_weight", c.window_weight);
  const std::string ref = j.value("sort_reference", std::string("input"));
  if (ref == "input") {
    c.sort_reference = SortReference::kInput;
  } else if (ref == "clean_projection") {
    c.sort_reference = SortReference::kCleanProjection;
  } else {
    throw ContractError("objective: unknown sort_reference '" + ref + "'");
  }
  validate(c);
  return c;
}

// -- scalar forms -------------------------------------------------------------

double task_loss(const Pose3D& y, const Pose3D& y_pred, double energy, double alpha) {
  require_same(y, y_pred, "task_loss");
  const double mse = (y - y_pred).array().square().rowwise().mean().sum();
  return mse + alpha * energy;
}

double mpjpe_margin(const Pose3D& y, const Pose3D& y_tilde) { return mpjpe(y_tilde, y); }

double margin_loss(double e_gt, double e_neg, double delta) {
  if (!(delta >= 0.0)) throw ContractError("margin_loss: delta must be >= 0");
  return std::max(0.0, delta - e_neg + e_gt);
}

double nce_loss(double e_gt, double e_neg) {
  // softplus(e_gt - e_neg) = max(d, 0) + log1p(exp(-|d|))
  const double d = e_gt - e_neg;
  return std::max(d, 0.0) + std::log1p(std::exp(-std::abs(d)));
}

// -- tape forms ---------------------------------------------------------------

ad::Var task_loss(ad::Var y, ad::Var y_pred, ad::Var energy, double alpha) {
  if (y.rows() != y_pred.rows() || y.cols() != y_pred.cols() || y.cols() % 3 != 0)
    throw ContractError("task_loss: pose shapes differ");
  if (energy.rows() != y.rows() || energy.cols() != 1) throw ContractError("task_loss: energy must be B x 1");
  ad::Var mse = ad::scale(ad::row_sum(ad::square(y_pred - y)), 1.0 / 3.0);
  return mse + alpha * energy;
}

ad::Var margin_loss(ad::Var e_gt, ad::Var e_neg, ad::Var delta) {
  return ad::relu(delta - e_neg + e_gt);
}

ad::Var nce_loss(ad::Var e_gt, ad::Var e_neg) { return ad::softplus(e_gt - e_neg); }

// -- negatives ----------------------------------------------------------------

bool NegativeSet::sorted() const { return std::is_sorted(sort_keys.begin(), sort_keys.end()); }

Eigen::VectorXd sample_in_ball(int dim, double radius, Rng& rng) {
  if (dim < 1) throw ContractError("sample_in_ball: dim must be >= 1");
  Eigen::VectorXd v(dim);
  double norm = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    norm = v.norm();
  } while (norm == 0.0);
  const double r = radius * std::pow(rng.uniform(), 1.0 / dim);
  return v * (r / norm);
}

NegativeSet sample_perturbation_negatives(const PoseNetView& posenet, const Pose2D& x, int K, double R_max, Rng& rng,
                                          const Pose2D* reference) {
  if (K < 1) throw ContractError("sample_perturbation_negatives: K must be >= 1");
  if (!(R_max >= 0.0)) throw ContractError("sample_perturbation_negatives: R_max must be >= 0");
  if (posenet.params == nullptr) throw ContractError("sample_perturbation_negatives: no pose-net parameters");
  const Pose2D& ref = reference ? *reference : x;
  const int dim = static_cast<int>(x.size());

  std::vector<Pose2D> inputs;
  inputs.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd eps = sample_in_ball(dim, R_max, rng);
    Pose2D noisy = x;
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      noisy(j, 0) += eps[2 * j];
      noisy(j, 1) += eps[2 * j + 1];
    }
    inputs.push_back(std::move(noisy));
  }
  const Matrix preds = posenet_predict(*posenet.params, posenet.config, posenet.joints, posenet.root,
                                       normalize_inputs(posenet.camera, inputs));

  std::vector<double> keys(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) keys[k] = mpjpe_2d(inputs[k], ref);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

  NegativeSet out;
  for (std::size_t k : order) {
    out.poses.push_back(row_to_pose(preds.row(static_cast<Eigen::Index>(k))));
    out.inputs.push_back(inputs[k]);
    out.sort_keys.push_back(keys[k]);
  }
  return out;
}

std::vector<PairIndex> ordering_pairs(const NegativeSet& neg, int n_random_pairs, Rng& rng) {
  std::vector<PairIndex> pairs;
  const int n = static_cast<int>(neg.sort_keys.size());
  if (n < 2) return pairs;
  if (!neg.sorted()) throw ContractError("ordering_pairs: negatives must be sorted by sort key");
  for (int i = 0; i + 1 < n; ++i) pairs.push_back({i + 1, i});
  if (neg.sort_keys.front() == neg.sort_keys.back()) return pairs;  // no strictly ordered pair exists
  for (int r = 0; r < n_random_pairs; ++r) {
    for (;;) {
      const int a = static_cast<int>(rng.index(static_cast<std::uint64_t>(n)));
      const int b = static_cast<int>(rng.index(static_cast<std::uint64_t>(n)));
      if (neg.sort_keys[a] == neg.sort_keys[b]) continue;
      pairs.push_back(neg.sort_keys[a] > neg.sort_keys[b] ? PairIndex{a, b} : PairIndex{b, a});
      break;
    }
  }
  return pairs;
}

double pair_ordering_loss(const NegativeSet& neg, double kappa, std::span<const PairIndex> pairs) {
  if (pairs.empty()) return 0.0;
  if (neg.energies.size() != neg.poses.size()) throw ContractError("pair_ordering_loss: energies not filled");
  double total = 0.0;
  for (const PairIndex& p : pairs) {
    const double d = kappa * mpjpe(neg.poses[p.farther], neg.poses[p.nearer]) * kMetersPerMm;
    total += std::max(0.0, d - neg.energies[p.farther] + neg.energies[p.nearer]);
  }
  return total / static_cast<double>(pairs.size());
}

PairLossResult pair_ordering_loss(const NegativeSet& neg, double kappa, int n_random_pairs, Rng& rng) {
  if (neg.poses.size() < 2) return {0.0, true};
  const std::vector<PairIndex> pairs = ordering_pairs(neg, n_random_pairs, rng);
  return {pair_ordering_loss(neg, kappa, pairs), false};
}

ad::Var pair_ordering_loss(ad::Var energies, const NegativeSet& neg, double kappa, std::span<const PairIndex> pairs) {
  ad::Tape& tape = *energies.tape();
  const auto n = static_cast<Eigen::Index>(neg.poses.size());
  if (energies.rows() != n || energies.cols() != 1) throw ContractError("pair_ordering_loss: energies must be n x 1");
  if (pairs.empty()) return tape.constant(Matrix::Zero(1, 1));
  const auto P = static_cast<Eigen::Index>(pairs.size());
  // gap = E_farther - E_nearer via a signed selection matrix.
  Matrix select = Matrix::Zero(P, n);
  Matrix margin(P, 1);
  for (Eigen::Index r = 0; r < P; ++r) {
    const PairIndex& p = pairs[static_cast<std::size_t>(r)];
    select(r, p.farther) += 1.0;
    select(r, p.nearer) -= 1.0;
    margin(r, 0) = kappa * mpjpe(neg.poses[p.farther], neg.poses[p.nearer]) * kMetersPerMm;
  }
  ad::Var gap = ad::matmul(tape.constant(std::move(select)), energies);
  return ad::mean(ad::relu(tape.constant(std::move(margin)) - gap));
}

std::size_t select_hard_negative(std::span<const Pose3D> candidates, const Pose2D& u, const CameraModel& camera,
                                 std::vector<std::size_t>* excluded) {
  if (candidates.empty()) throw ContractError("select_hard_negative: no candidates");
  std::size_t best = candidates.size();
  double best_err = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    double err = 0.0;
    try {
      err = mpjpe_2d(project(camera, candidates[k]), u);
    } catch (const NumericError&) {
      if (excluded) excluded->push_back(k);
      continue;
    }
    if (!std::isfinite(err)) {
      if (excluded) excluded->push_back(k);
      continue;
    }
    if (best == candidates.size() || err < best_err) {
      best = k;
      best_err = err;
    }
  }
  if (best == candidates.size()) throw NumericError("select_hard_negative: every candidate failed to project");
  return best;
}

double window_pair_loss(std::span<const double> energies, std::span<const Pose3D> poses, std::size_t t,
                        std::size_t s, int w, double kappa) {
  check_window(poses.size(), t, s, w, energies.size());
  double et = 0.0;
  double es = 0.0;
  for (int i = 0; i < w; ++i) {
    et += energies[t + static_cast<std::size_t>(i)];
    es += energies[s + static_cast<std::size_t>(i)];
  }
  et /= w;
  es /= w;
  const double d = kappa * mpjpe(window_mean_pose(poses, t, w), window_mean_pose(poses, s, w)) * kMetersPerMm;
  return std::max(0.0, d - std::abs(et - es));
}

ad::Var window_pair_loss(ad::Var energies, std::span<const Pose3D> poses, std::size_t t, std::size_t s, int w,
                         double kappa) {
  if (energies.cols() != 1) throw ContractError("window_pair_loss: energies must be T x 1");
  check_window(poses.size(), t, s, w, static_cast<std::size_t>(energies.rows()));
  ad::Tape& tape = *energies.tape();
  const Matrix diff_row = window_average_row(poses.size(), t, w) - window_average_row(poses.size(), s, w);
  ad::Var gap = ad::abs(ad::matmul(tape.constant(diff_row), energies));
  const double d = kappa * mpjpe(window_mean_pose(poses, t, w), window_mean_pose(poses, s, w)) * kMetersPerMm;
  return ad::relu(tape.constant(Matrix::Constant(1, 1, d)) - gap);
}

std::size_t sample_window_partner(std::size_t t, int w, std::size_t n, Rng& rng) {
  if (w < 1) throw ContractError("sample_window_partner: w must be >= 1");
  const auto uw = static_cast<std::size_t>(w);
  if (n < uw + 1) throw ContractError("sample_window_partner: sequence shorter than w + 1 frames");
  const std::size_t last = n - uw;  // largest valid start
  // Offsets -w..-1, 1..w
  const auto pick = static_cast<long long>(rng.index(2 * uw));
  const long long offset = pick < w ? pick - w : pick - w + 1;
  long long s = static_cast<long long>(t) + offset;
  s = std::clamp<long long>(s, 0, static_cast<long long>(last));
  if (static_cast<std::size_t>(s) == t) {
    // Clipping landed on t; step to the nearest valid neighbour.
    s = t < last ? static_cast<long long>(t) + 1 : static_cast<long long>(t) - 1;
  }
  return static_cast<std::size_t>(s);
}

// -- loss-net objective ---------------------------------------------------------

LossNetObjectiveTerms lossnet_objective(const ObjectiveBatch& batch, const PoseNetView& posenet,
                                        const LossNetView& lossnet, const ObjectiveConfig& config, Rng& rng,
                                        std::span<const Sample> sequence) {
  const Eigen::Index B = batch.x.rows();
  if (B == 0) throw ContractError("lossnet_objective: empty batch");
  if (batch.y.rows() != B || batch.y_pred.rows() != B) throw ContractError("lossnet_objective: batch rows differ");
  if (lossnet.params == nullptr || lossnet.ctx == nullptr) throw ContractError("lossnet_objective: no loss-net");
  const ParamBinding& params = *lossnet.params;
  ad::Tape& tape = params.tape();
  const bool need_samples = config.K > 0 || config.window_w > 1;
  if (need_samples && batch.samples.size() != static_cast<std::size_t>(B))
    throw ContractError("lossnet_objective: negative terms need the batch samples");

  LossNetObjectiveTerms terms;

  // Ground truth and prediction share one energy evaluation.
  Matrix x2(2 * B, batch.x.cols());
  x2 << batch.x, batch.x;
  Matrix y2(2 * B, batch.y.cols());
  y2 << batch.y, batch.y_pred;
  ad::Var energies = lossnet_energy(params, lossnet.config, *lossnet.ctx, tape.constant(std::move(x2)),
                                    tape.constant(std::move(y2)));
  std::vector<Eigen::Index> gt_rows(static_cast<std::size_t>(B));
  std::vector<Eigen::Index> pred_rows(static_cast<std::size_t>(B));
  std::iota(gt_rows.begin(), gt_rows.end(), 0);
  std::iota(pred_rows.begin(), pred_rows.end(), B);
  ad::Var e_gt = ad::gather_rows(energies, gt_rows);
  ad::Var e_pred = ad::gather_rows(energies, pred_rows);
  terms.mean_gt_energy = e_gt.value().mean();
  terms.mean_pred_energy = e_pred.value().mean();

  ad::Var base;
  if (config.lossnet_objective == LossNetObjective::kMargin) {
    Matrix delta(B, 1);
    for (Eigen::Index b = 0; b < B; ++b) {
      const Eigen::ArrayXd diff = (batch.y.row(b) - batch.y_pred.row(b)).array();
      double total = 0.0;
      for (Eigen::Index j = 0; j < diff.size() / 3; ++j) total += diff.segment(3 * j, 3).matrix().norm();
      delta(b, 0) = total / static_cast<double>(diff.size() / 3);
    }
    base = ad::mean(margin_loss(e_gt, e_pred, tape.constant(std::move(delta))));
  } else {
    base = ad::mean(nce_loss(e_gt, e_pred));
  }
  terms.base = base.scalar();
  ad::Var total = base;

  if (config.K > 0 && config.pair_weight > 0.0) {
    const int K = config.K;
    std::vector<NegativeSet> sets(static_cast<std::size_t>(B));
    std::vector<std::vector<PairIndex>> pairs(static_cast<std::size_t>(B));
    Matrix xn(B * K, batch.x.cols());
    Matrix yn(B * K, batch.y.cols());
    for (Eigen::Index b = 0; b < B; ++b) {
      const Sample& sample = *batch.samples[static_cast<std::size_t>(b)];
      Rng local = rng.derive(static_cast<std::uint64_t>(b));
      const Pose2D* ref = config.sort_reference == SortReference::kCleanProjection ? &sample.u : nullptr;
      NegativeSet& set = sets[static_cast<std::size_t>(b)];
      set = sample_perturbation_negatives(posenet, sample.x, K, config.R_max, local, ref);
      pairs[static_cast<std::size_t>(b)] = ordering_pairs(set, config.n_random_pairs, local);
      for (int k = 0; k < K; ++k) {
        xn.row(b * K + k) = batch.x.row(b);
        yn.row(b * K + k) = pose_to_row(set.poses[static_cast<std::size_t>(k)]);
      }
    }
    rng.next();
    ad::Var e_neg = lossnet_energy(params, lossnet.config, *lossnet.ctx, tape.constant(std::move(xn)),
                                   tape.constant(std::move(yn)));
    std::vector<ad::Var> per_sample;
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& p = pairs[static_cast<std::size_t>(b)];
      if (p.empty()) continue;
      std::vector<Eigen::Index> rows(static_cast<std::size_t>(K));
      std::iota(rows.begin(), rows.end(), b * K);
      per_sample.push_back(pair_ordering_loss(ad::gather_rows(e_neg, rows), sets[static_cast<std::size_t>(b)],
                                              config.kappa, p));
    }
    if (!per_sample.empty()) {
      ad::Var pair = ad::mean(ad::concat_cols(per_sample));
      terms.pair = pair.scalar();
      total = total + config.pair_weight * pair;
    }
  }

  if (config.window_w > 1 && config.window_weight > 0.0) {
    const int w = config.window_w;
    const auto uw = static_cast<std::size_t>(w);
    const std::size_t n = sequence.size();
    if (n < uw + 1) throw ContractError("lossnet_objective: window term needs a sequence of at least w + 1 frames");
    // Frames touched by any window, predicted once with the frozen pose-net.
    std::vector<std::pair<std::size_t, std::size_t>> windows;
    std::vector<std::size_t> frames;
    for (Eigen::Index b = 0; b < B; ++b) {
      const std::size_t f = batch.samples[static_cast<std::size_t>(b)]->frame_index;
      if (f >= n) throw ContractError("lossnet_objective: sample frame outside the sequence");
      const std::size_t t = std::min(f, n - uw);
      Rng local = rng.derive(static_cast<std::uint64_t>(B + b));
      const std::size_t s = sample_window_partner(t, w, n, local);
      windows.emplace_back(t, s);
      for (std::size_t i = 0; i < uw; ++i) {
        frames.push_back(t + i);
        frames.push_back(s + i);
      }
    }
    rng.next();
    std::sort(frames.begin(), frames.end());
    frames.erase(std::unique(frames.begin(), frames.end()), frames.end());

    std::vector<Pose2D> inputs;
    for (std::size_t f : frames) inputs.push_back(sequence[f].x);
    const Matrix xf = normalize_inputs(posenet.camera, inputs);
    const Matrix yf = posenet_predict(*posenet.params, posenet.config, posenet.joints, posenet.root, xf);
    ad::Var ef = lossnet_energy(params, lossnet.config, *lossnet.ctx, tape.constant(xf), tape.constant(yf));

    std::vector<Pose3D> poses;
    for (Eigen::Index r = 0; r < yf.rows(); ++r) poses.push_back(row_to_pose(yf.row(r)));
    auto local_index = [&](std::size_t frame) {
      return static_cast<std::size_t>(std::lower_bound(frames.begin(), frames.end(), frame) - frames.begin());
    };
    // Windows are contiguous in frame order, so they stay contiguous in
    // the compacted frame list.
    std::vector<ad::Var> per_anchor;
    for (const auto& [t, s] : windows) {
      per_anchor.push_back(window_pair_loss(ef, poses, local_index(t), local_index(s), w, config.kappa));
    }
    ad::Var window = ad::mean(ad::concat_cols(per_anchor));
    terms.window = window.scalar();
    total = total + config.window_weight * window;
  }

  terms.total = total;
  return terms;
}

}  // namespace sealpose
