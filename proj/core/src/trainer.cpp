#include "sealpose/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sealpose/csv.hpp"
#include "sealpose/digest.hpp"
#include "sealpose/errors.hpp"

namespace sealpose {

namespace {

bool loss_ok(double v) { return std::isfinite(v) && std::abs(v) <= kLossAbortThreshold; }

std::string describe_loss(const char* term, double v) {
  std::ostringstream ss;
  ss << term << " = " << v << (std::isfinite(v) ? " exceeds the abort threshold" : " is not finite");
  return ss.str();
}

void check_dataset(const Dataset& data, const ModelSetup& setup, const char* which) {
  if (data.samples.empty()) throw ContractError(std::string("train_run: ") + which + " dataset is empty");
  if (data.joint_count() != setup.spec.joint_count()) {
    throw ContractError(std::string("train_run: ") + which + " dataset has " + std::to_string(data.joint_count()) +
                        " joints, skeleton has " + std::to_string(setup.spec.joint_count()));
  }
}

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

void validate(const TrainConfig& c) {
  if (!(c.lr_p > 0.0) || !(c.lr_l > 0.0)) throw ContractError("train: learning rates must be > 0");
  if (c.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (c.epochs < 0) throw ContractError("train: epochs must be >= 0");
  if (c.eval_every < 1) throw ContractError("train: eval_every must be >= 1");
  validate(c.objective);
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr_p", c.lr_p},     {"lr_l", c.lr_l},
          {"objective", to_json(c.objective)},
          {"epochs", c.epochs}, {"batch_size", c.batch_size},
          {"seed", c.seed},     {"eval_every", c.eval_every},
          {"baseline_mode", c.baseline_mode}};
}

TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr_p = j.value("lr_p", c.lr_p);
  c.lr_l = j.value("lr_l", c.lr_l);
  if (j.contains("objective")) c.objective = objective_from_json(j.at("objective"));
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.baseline_mode = j.value("baseline_mode", c.baseline_mode);
  validate(c);
  return c;
}

TrainState TrainState::init(const ModelSetup& setup) {
  validate(setup.posenet);
  validate(setup.lossnet);
  TrainState s;
  s.posenet = init_posenet(setup.posenet, setup.spec.joint_count());
  s.ctx = LossNetContext::build(setup.spec, setup.lossnet);
  s.lossnet = init_lossnet(setup.lossnet, s.ctx);
  s.adam_p = AdamState::for_store(s.posenet);
  s.adam_l = AdamState::for_store(s.lossnet);
  return s;
}

StepRecord train_step(std::span<const Sample* const> batch, TrainState& state, const ModelSetup& setup,
                      const TrainConfig& config, Rng& rng, std::span<const Sample> sequence, const StepHooks* hooks) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  const int J = setup.spec.joint_count();
  const int root = setup.spec.root;

  std::vector<Pose2D> inputs;
  std::vector<Pose3D> targets;
  inputs.reserve(batch.size());
  targets.reserve(batch.size());
  for (const Sample* s : batch) {
    inputs.push_back(s->x);
    targets.push_back(s->y);
  }
  const Matrix x = normalize_inputs(setup.camera, inputs);
  const Matrix y = poses_to_rows(targets);

  StepRecord rec;
  const double alpha = config.baseline_mode ? 0.0 : config.objective.alpha;

  if (!config.baseline_mode) {
    // (1) predictions under phi_{t-1}, detached.
    const Matrix y_pred = posenet_predict(state.posenet, setup.posenet, J, root, x);

    // (2) loss-net step on L_E.
    ad::Tape tape;
    ParamBinding theta(tape, state.lossnet, true);
    const PoseNetView pose_view{&state.posenet, setup.posenet, J, root, setup.camera};
    const LossNetView loss_view{&theta, setup.lossnet, &state.ctx};
    ObjectiveBatch ob{x, y, y_pred, {batch.begin(), batch.end()}};
    const LossNetObjectiveTerms terms = lossnet_objective(ob, pose_view, loss_view, config.objective, rng, sequence);
    const double le = terms.total.scalar();
    rec.L_E = le;
    rec.mean_energy = terms.mean_pred_energy;
    rec.base = terms.base;
    rec.pair = terms.pair;
    rec.window = terms.window;
    if (!loss_ok(le)) {
      rec.ok = false;
      rec.diagnostic = describe_loss("L_E", le);
      return rec;
    }
    try {
      tape.backward(terms.total);
    } catch (const NumericError& e) {
      rec.ok = false;
      rec.diagnostic = std::string("L_E gradient: ") + e.what();
      return rec;
    }
    adam_step(state.lossnet, tape.parameter_gradients(), state.adam_l, config.lr_l);
    if (hooks && hooks->after_lossnet_update) hooks->after_lossnet_update(state.lossnet);
  }

  // (3) pose-net step on L_F under theta_t.
  ad::Tape tape;
  ParamBinding phi(tape, state.posenet, true);
  ad::Var y_hat = posenet_forward(phi, setup.posenet, J, root, tape.constant(x));
  ad::Var y_var = tape.constant(y);
  ad::Var per_sample;
  if (config.baseline_mode) {
    per_sample = ad::scale(ad::row_sum(ad::square(y_hat - y_var)), 1.0 / 3.0);
  } else {
    ParamBinding theta(tape, state.lossnet, false);
    ad::Var energy = lossnet_energy(theta, setup.lossnet, state.ctx, tape.constant(x), y_hat);
    per_sample = task_loss(y_var, y_hat, energy, alpha);
  }
  ad::Var lf = ad::mean(per_sample);
  rec.L_F = lf.scalar();
  if (!loss_ok(rec.L_F)) {
    rec.ok = false;
    rec.diagnostic = describe_loss("L_F", rec.L_F);
    return rec;
  }
  try {
    tape.backward(lf);
  } catch (const NumericError& e) {
    rec.ok = false;
    rec.diagnostic = std::string("L_F gradient: ") + e.what();
    return rec;
  }
  const ad::GradientMap grads = tape.parameter_gradients();
  if (hooks && hooks->posenet_gradients) hooks->posenet_gradients(grads);
  adam_step(state.posenet, grads, state.adam_p, config.lr_p);
  return rec;
}

std::string TrainHistory::csv_header() {
  return "epoch,L_F,L_E,mean_energy,val_mpjpe,val_pmpjpe,val_lse,val_bsle,val_lle,config_digest";
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << csv_header() << '\n';
  for (const EpochRecord& r : epochs) {
    os << r.epoch << ',' << format_double(r.L_F) << ',' << csv_field(r.L_E) << ',' << csv_field(r.mean_energy) << ','
       << csv_field(r.val_mpjpe) << ',' << csv_field(r.val_pmpjpe) << ',' << csv_field(r.val_lse) << ','
       << csv_field(r.val_bsle) << ',' << csv_field(r.val_lle) << ',' << config_digest << '\n';
  }
  return os.str();
}

std::string train_digest(const ModelSetup& setup, const TrainConfig& config) {
  const nlohmann::json j = {{"skeleton", to_json(setup.spec)},
                            {"camera", to_json(setup.camera)},
                            {"posenet", to_json(setup.posenet)},
                            {"lossnet", to_json(setup.lossnet)},
                            {"train", to_json(config)}};
  return digest_hex(j.dump());
}

MetricsReport validate_posenet(const ParamStore& posenet, const ModelSetup& setup, const Dataset& data) {
  std::vector<Pose2D> inputs;
  std::vector<Pose3D> gts;
  inputs.reserve(data.size());
  gts.reserve(data.size());
  for (const Sample& s : data.samples) {
    inputs.push_back(s.x);
    gts.push_back(s.y);
  }
  const Matrix pred = posenet_predict(posenet, setup.posenet, setup.spec.joint_count(), setup.spec.root,
                                      normalize_inputs(setup.camera, inputs));
  std::vector<Pose3D> preds;
  preds.reserve(data.size());
  for (Eigen::Index r = 0; r < pred.rows(); ++r) preds.push_back(row_to_pose(pred.row(r)));
  return evaluate_poses(preds, gts, setup.spec);
}

TrainResult train_run(const Dataset& train, const Dataset& val, const ModelSetup& setup, const TrainConfig& config,
                      const std::optional<std::filesystem::path>& out_dir, const std::string& config_digest) {
  validate(config);
  check_dataset(train, setup, "training");
  check_dataset(val, setup, "validation");

  TrainState state = TrainState::init(setup);
  TrainResult res;
  res.history.config_digest = config_digest.empty() ? train_digest(setup, config) : config_digest;
  res.posenet_best = state.posenet;
  res.lossnet_best = state.lossnet;

  auto persist = [&] {
    res.posenet_final = state.posenet;
    res.lossnet_final = state.lossnet;
    if (!out_dir) return;
    std::filesystem::create_directories(*out_dir);
    write_text_file(*out_dir / "history.csv", res.history.to_csv());
    res.posenet_final.save(*out_dir / "posenet_final.ckpt");
    res.lossnet_final.save(*out_dir / "lossnet_final.ckpt");
    res.posenet_best.save(*out_dir / "posenet_best.ckpt");
    res.lossnet_best.save(*out_dir / "lossnet_best.ckpt");
  };

  const Rng root_rng(config.seed);
  Rng shuffle_rng = root_rng.derive(1);
  Rng objective_rng = root_rng.derive(2);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::vector<const Sample*> batch;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);

    EpochRecord rec;
    rec.epoch = epoch;
    double sum_lf = 0.0;
    double sum_le = 0.0;
    double sum_energy = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train.samples[order[i]]);
      const StepRecord step = train_step(batch, state, setup, config, objective_rng, train.samples);
      if (!step.ok) {
        res.history.aborted = true;
        res.history.diagnostic = "epoch " + std::to_string(epoch) + ", batch at " + std::to_string(start) + ": " +
                                 step.diagnostic;
        persist();
        throw NumericError("training aborted: " + res.history.diagnostic);
      }
      const double w = static_cast<double>(end - start);
      sum_lf += w * step.L_F;
      if (step.L_E) sum_le += w * *step.L_E;
      if (step.mean_energy) sum_energy += w * *step.mean_energy;
    }
    const double n = static_cast<double>(order.size());
    rec.L_F = sum_lf / n;
    if (!config.baseline_mode) {
      rec.L_E = sum_le / n;
      rec.mean_energy = sum_energy / n;
    }

    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      const MetricsReport m = validate_posenet(state.posenet, setup, val);
      rec.val_mpjpe = m.mpjpe;
      rec.val_pmpjpe = m.p_mpjpe;
      rec.val_lse = m.lse;
      rec.val_bsle = m.bsle;
      rec.val_lle = m.lle;
      if (!res.best_val_mpjpe || m.mpjpe < *res.best_val_mpjpe) {
        res.best_val_mpjpe = m.mpjpe;
        res.best_epoch = epoch;
        res.posenet_best = state.posenet;
        res.lossnet_best = state.lossnet;
      }
    }
    res.history.epochs.push_back(rec);
  }
  persist();
  return res;
}

// -- greedy sweep ---------------------------------------------------------------

nlohmann::json to_json(const SweepGrid& g) { return {{"lr_p", g.lr_p}, {"lr_l", g.lr_l}, {"alpha", g.alpha}}; }

SweepGrid sweep_grid_from_json(const nlohmann::json& j) {
  SweepGrid g;
  g.lr_p = j.at("lr_p").get<std::vector<double>>();
  g.lr_l = j.at("lr_l").get<std::vector<double>>();
  g.alpha = j.at("alpha").get<std::vector<double>>();
  if (g.lr_p.empty() || g.lr_l.empty() || g.alpha.empty()) throw ContractError("sweep grid: every list must be nonempty");
  return g;
}

std::string SweepResult::csv_header() { return "lr_p,lr_l,alpha,MPJPE,stage,status"; }

std::string SweepResult::to_csv() const {
  std::ostringstream os;
  os << csv_header() << '\n';
  for (const SweepRow& r : rows) {
    os << csv_field(r.lr_p) << ',' << csv_field(r.lr_l) << ',' << csv_field(r.alpha) << ',' << csv_field(r.mpjpe)
       << ',' << r.stage << ',' << sanitize(r.status) << '\n';
  }
  return os.str();
}

SweepResult greedy_sweep(const SweepGrid& grid, const Dataset& train, const Dataset& val, const ModelSetup& setup,
                         const TrainConfig& base, const std::function<void(const SweepRow&)>& progress) {
  if (grid.lr_p.empty() || grid.lr_l.empty() || grid.alpha.empty())
    throw ContractError("greedy_sweep: every grid must be nonempty");

  std::vector<SweepRow> rows;
  auto run = [&](const TrainConfig& c, SweepRow row) {
    try {
      row.mpjpe = train_run(train, val, setup, c).best_val_mpjpe;
      row.status = row.mpjpe ? "ok" : "error: no validation";
    } catch (const std::exception& e) {
      row.mpjpe.reset();
      row.status = std::string("error: ") + e.what();
    }
    rows.push_back(row);
    if (progress) progress(row);
    return row;
  };
  auto better = [](const SweepRow& a, const std::optional<SweepRow>& best) {
    return a.mpjpe && (!best || *a.mpjpe < *best->mpjpe);
  };

  // Stage 1: pose-net learning rate, supervised only.
  std::optional<SweepRow> best1;
  for (double lr_p : grid.lr_p) {
    TrainConfig c = base;
    c.lr_p = lr_p;
    c.baseline_mode = true;
    c.objective.alpha = 0.0;
    const SweepRow r = run(c, {lr_p, std::nullopt, 0.0, std::nullopt, 1, ""});
    if (better(r, best1)) best1 = r;
  }
  if (!best1) throw NumericError("greedy_sweep: every stage-1 run failed");
  const double lr_p = *best1->lr_p;

  // Stage 2: (lr_l, alpha) pairs; keep lr_l of the best pair.
  std::optional<SweepRow> best2;
  std::vector<SweepRow> stage2;
  for (double lr_l : grid.lr_l) {
    for (double alpha : grid.alpha) {
      TrainConfig c = base;
      c.lr_p = lr_p;
      c.lr_l = lr_l;
      c.objective.alpha = alpha;
      c.baseline_mode = false;
      const SweepRow r = run(c, {lr_p, lr_l, alpha, std::nullopt, 2, ""});
      stage2.push_back(r);
      if (better(r, best2)) best2 = r;
    }
  }
  if (!best2) throw NumericError("greedy_sweep: every stage-2 run failed");
  const double lr_l = *best2->lr_l;

  // Stage 3: alpha at fixed (lr_p, lr_l). Same configs as stage 2.
  std::optional<SweepRow> best3;
  for (double alpha : grid.alpha) {
    auto it = std::find_if(stage2.begin(), stage2.end(),
                           [&](const SweepRow& r) { return *r.lr_l == lr_l && *r.alpha == alpha; });
    SweepRow r = *it;
    r.stage = 3;
    if (r.status == "ok") r.status = "cached";
    rows.push_back(r);
    if (progress) progress(r);
    if (better(r, best3)) best3 = r;
  }

  SweepResult out;
  out.best = base;
  out.best.lr_p = lr_p;
  out.best.lr_l = lr_l;
  out.best.objective.alpha = *best3->alpha;
  out.best.baseline_mode = false;
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.mpjpe.has_value() != b.mpjpe.has_value()) return a.mpjpe.has_value();
    return a.mpjpe && *a.mpjpe < *b.mpjpe;
  });
  out.rows = std::move(rows);
  return out;
}

}  // namespace sealpose
