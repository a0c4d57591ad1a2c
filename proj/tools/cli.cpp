#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sealpose/csv.hpp"
#include "sealpose/digest.hpp"
#include "sealpose/errors.hpp"
#include "sealpose/metrics.hpp"

namespace sealpose::cli {

namespace fs = std::filesystem;

ModelSetup ExperimentConfig::model_setup() const { return {generator.spec, camera, posenet, lossnet}; }

nlohmann::json to_json(const ExperimentConfig& c, bool include_output_dir) {
  nlohmann::json j{{"generator", to_json(c.generator)},
                   {"camera", to_json(c.camera)},
                   {"validation", {{"n_samples", c.val_samples}, {"seed", c.val_seed}}},
                   {"posenet", to_json(c.posenet)},
                   {"lossnet", to_json(c.lossnet)},
                   {"train", to_json(c.train)},
                   {"gbi", to_json(c.gbi)}};
  if (include_output_dir) j["output_dir"] = c.output_dir.string();
  return j;
}

std::string ExperimentConfig::digest() const { return digest_hex(to_json(*this, false).dump()); }

ExperimentConfig experiment_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  if (j.contains("generator")) c.generator = generator_from_json(j.at("generator"));
  if (j.contains("skeleton")) {
    const auto& s = j.at("skeleton");
    c.generator.spec = s.is_string() ? load_skeleton(base_dir / s.get<std::string>()) : skeleton_from_json(s);
  }
  if (j.contains("camera")) c.camera = camera_from_json(j.at("camera"));
  if (j.contains("validation")) {
    c.val_samples = j.at("validation").value("n_samples", c.val_samples);
    c.val_seed = j.at("validation").value("seed", c.val_seed);
  }
  if (j.contains("posenet")) c.posenet = posenet_from_json(j.at("posenet"));
  if (j.contains("lossnet")) c.lossnet = lossnet_from_json(j.at("lossnet"));
  if (j.contains("train")) c.train = train_from_json(j.at("train"));
  if (j.contains("gbi")) c.gbi = gbi_from_json(j.at("gbi"));
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  validate_generator(c.generator);
  validate_camera(c.camera, c.generator);
  validate(c.posenet);
  validate(c.lossnet);
  validate(c.train);
  validate(c.gbi);
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("config " + path.string() + ": " + e.what());
  }
  return experiment_from_json(j, path.parent_path());
}

void save_experiment(const ExperimentConfig& c, const fs::path& path) {
  nlohmann::json j = to_json(c);
  j["config_digest"] = c.digest();
  write_text_file(path, j.dump(2) + "\n");
}

std::string skeleton_digest(const SkeletonSpec& spec) { return digest_hex(to_json(spec).dump()); }

fs::path default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::path("runs");
}

namespace {

// -- shared helpers --------------------------------------------------------------

struct Run {
  ExperimentConfig config;
  ParamStore posenet;
  ParamStore lossnet;
  fs::path dir;
};

ParamStore load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing checkpoint: expected " + path.string());
  return ParamStore::load(path);
}

Run load_run(const fs::path& dir, const std::string& which) {
  if (which != "best" && which != "final") throw ContractError("--checkpoint must be best or final");
  const fs::path cfg = dir / "config.json";
  if (!fs::exists(cfg)) throw IoError("missing run config: expected " + cfg.string());
  Run r{load_experiment(cfg), load_checkpoint(dir / ("posenet_" + which + ".ckpt")),
        load_checkpoint(dir / ("lossnet_" + which + ".ckpt")), dir};
  return r;
}

Dataset load_data_for(const fs::path& path, const SkeletonSpec& spec) {
  Dataset d = load_dataset(path);
  if (d.joint_count() != spec.joint_count()) {
    throw ContractError("dataset " + path.string() + " has " + std::to_string(d.joint_count()) +
                        " joints but the skeleton has " + std::to_string(spec.joint_count()));
  }
  return d;
}

std::vector<Pose3D> predict(const ParamStore& posenet, const ModelSetup& setup, const Dataset& data) {
  std::vector<Pose2D> inputs;
  for (const Sample& s : data.samples) inputs.push_back(s.x);
  const Matrix p = posenet_predict(posenet, setup.posenet, setup.spec.joint_count(), setup.spec.root,
                                   normalize_inputs(setup.camera, inputs));
  std::vector<Pose3D> out;
  out.reserve(data.size());
  for (Eigen::Index r = 0; r < p.rows(); ++r) out.push_back(row_to_pose(p.row(r)));
  return out;
}

std::vector<Pose3D> ground_truth(const Dataset& data) {
  std::vector<Pose3D> out;
  out.reserve(data.size());
  for (const Sample& s : data.samples) out.push_back(s.y);
  return out;
}

/// Appends ",<digest>" to every data line and ",config_digest" to the header.
std::string stamp(const std::string& csv, const std::string& digest) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    out << line << ',' << (header ? "config_digest" : digest) << '\n';
    header = false;
  }
  return out.str();
}

void prepare_output(const fs::path& dir, const std::string& marker, bool force) {
  if (fs::exists(dir / marker) && !force) {
    throw ContractError("outputs already exist in " + dir.string() + " (pass --force to overwrite)");
  }
  fs::create_directories(dir);
}

fs::path resolve_out(const std::string& flag, const std::string& command, const std::string& digest) {
  if (!flag.empty()) return flag;
  return default_output_root() / (command + "-" + digest);
}

// -- option plumbing -------------------------------------------------------------

struct ModelFlags {
  std::string lossnet;
  std::string mechanism;
  std::string objective;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr_p;
  std::optional<double> lr_l;
  std::optional<double> alpha;
  std::optional<int> K;
  std::optional<int> window_w;

  void add(CLI::App* app) {
    app->add_option("--lossnet", lossnet, "Loss-net variant: mlp or graph")->check(CLI::IsMember({"mlp", "graph"}));
    app->add_option("--mechanism", mechanism, "Input mechanism: m1, m2, m3 or m4")
        ->check(CLI::IsMember({"m1", "m2", "m3", "m4"}));
    app->add_option("--objective", objective, "Loss-net objective: margin or nce")
        ->check(CLI::IsMember({"margin", "nce"}));
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--batch-size", batch_size, "Mini-batch size");
    app->add_option("--seed", seed, "Training seed");
    app->add_option("--lr-p", lr_p, "Pose-net learning rate");
    app->add_option("--lr-l", lr_l, "Loss-net learning rate");
    app->add_option("--alpha", alpha, "Energy weight in the pose-net loss");
    app->add_option("--negatives", K, "Perturbation negatives per sample (0 disables)");
    app->add_option("--window", window_w, "Window length for the neighbouring-frame term");
  }

  void apply(ExperimentConfig& c) const {
    if (!lossnet.empty()) c.lossnet.variant = parse_variant(lossnet);
    if (!mechanism.empty()) c.lossnet.mechanism = parse_mechanism(mechanism);
    if (!objective.empty()) c.train.objective.lossnet_objective = parse_objective(objective);
    if (epochs) c.train.epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (seed) c.train.seed = *seed;
    if (lr_p) c.train.lr_p = *lr_p;
    if (lr_l) c.train.lr_l = *lr_l;
    if (alpha) c.train.objective.alpha = *alpha;
    if (K) c.train.objective.K = *K;
    if (window_w) c.train.objective.window_w = *window_w;
    validate(c.lossnet);
    validate(c.train);
  }
};

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_experiment(path);
}

// -- commands --------------------------------------------------------------------

int cmd_gen_data(const std::string& config_path, const std::string& split, std::optional<std::size_t> n,
                 std::optional<std::uint64_t> seed, const std::string& out_flag, const std::string& text,
                 bool force, std::ostream& out) {
  ExperimentConfig c = config_or_default(config_path);
  GeneratorConfig g = c.generator;
  if (split == "val") {
    g.n_samples = c.val_samples;
    g.seed = c.val_seed;
  }
  if (n) g.n_samples = *n;
  if (seed) g.seed = *seed;
  validate_generator(g);
  const Dataset data = make_dataset(g, c.camera);

  const fs::path path = out_flag.empty() ? default_output_root() / "data" / (split + "-" + data.config_digest + ".bin")
                                         : fs::path(out_flag);
  if (fs::exists(path) && !force) throw ContractError(path.string() + " exists (pass --force to overwrite)");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_dataset(data, path);
  if (!text.empty()) export_dataset_text(data, text);

  double gt_lse = 0.0;
  for (const Sample& s : data.samples) gt_lse += lse(s.y, g.spec);
  gt_lse /= static_cast<double>(std::max<std::size_t>(1, data.size()));
  char buf[256];
  std::snprintf(buf, sizeof(buf), "joints     %d\nsamples    %zu\nGT LSE     %.2f %%\nGT BSLE    %.2f %%\n",
                g.spec.joint_count(), data.size(), gt_lse, 0.0);
  out << buf << "digest     " << data.config_digest << "\nwrote      " << path.string() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const ModelFlags& flags, bool baseline, const std::string& train_path,
              const std::string& val_path, const std::string& out_flag, bool force, std::ostream& out) {
  ExperimentConfig c = config_or_default(config_path);
  flags.apply(c);
  if (baseline) c.train.baseline_mode = true;
  const std::string digest = c.digest();
  c.output_dir = resolve_out(out_flag, "train", digest);

  const Dataset train = load_data_for(train_path, c.spec());
  const Dataset val = load_data_for(val_path, c.spec());
  prepare_output(c.output_dir, "history.csv", force);
  save_experiment(c, c.output_dir / "config.json");

  const TrainResult r = train_run(train, val, c.model_setup(), c.train, c.output_dir, digest);
  out << "epochs       " << r.history.epochs.size() << "\n";
  if (!r.history.epochs.empty()) {
    const EpochRecord& last = r.history.epochs.back();
    out << "final MPJPE  " << csv_field(last.val_mpjpe) << " mm\n";
    out << "final LSE    " << csv_field(last.val_lse) << " %\n";
  }
  out << "best epoch   " << r.best_epoch << "\n";
  out << "digest       " << digest << "\nwrote        " << c.output_dir.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& which, const std::string& data_path,
             const std::string& compare_dir, int bins, const std::string& out_flag, std::ostream& out) {
  const Run run = load_run(run_dir, which);
  const ModelSetup setup = run.config.model_setup();
  const std::string digest = run.config.digest();
  const Dataset data = load_data_for(data_path, setup.spec);
  const std::vector<Pose3D> gts = ground_truth(data);
  const std::vector<Pose3D> preds = predict(run.posenet, setup, data);
  const MetricsReport report = evaluate_poses(preds, gts, setup.spec);

  const fs::path out_dir = out_flag.empty() ? run.dir / "eval" : fs::path(out_flag);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "metrics.csv",
                  stamp(MetricsReport::csv_header() + "\n" + report.csv_row() + "\n", digest));
  report.write_text(out);

  if (!compare_dir.empty()) {
    const Run other = load_run(compare_dir, which);
    if (skeleton_digest(other.config.spec()) != skeleton_digest(setup.spec)) {
      throw ContractError("cannot compare runs with different skeletons");
    }
    const std::vector<Pose3D> other_preds = predict(other.posenet, other.config.model_setup(), data);
    const MetricsReport other_report = evaluate_poses(other_preds, gts, setup.spec);
    write_text_file(out_dir / "metrics_compare.csv",
                    stamp(MetricsReport::csv_header() + "\n" + other_report.csv_row() + "\n",
                          other.config.digest()));
    std::string label_a = fs::path(run_dir).filename().string();
    std::string label_b = fs::path(compare_dir).filename().string();
    if (label_a.empty()) label_a = "a";
    if (label_b.empty() || label_b == label_a) label_b = label_a + "#2";
    const BinnedStructureReport binned =
        binned_structure_report(preds, other_preds, gts, setup.spec, bins, label_a, label_b);
    std::ostringstream csv;
    binned.write_csv(csv);
    write_text_file(out_dir / "binned.csv", stamp(csv.str(), digest));
    out << "compare:\n";
    other_report.write_text(out);
  }
  out << "wrote " << out_dir.string() << "\n";
  return 0;
}

int cmd_gbi(const std::string& run_dir, const std::string& which, const std::string& data_path,
            std::optional<int> steps, std::optional<double> step_size, bool no_line_search, std::size_t limit,
            const std::string& out_flag, std::ostream& out) {
  const Run run = load_run(run_dir, which);
  GbiConfig g = run.config.gbi;
  if (steps) g.steps = *steps;
  if (step_size) g.step_size = *step_size;
  if (no_line_search) g.line_search = false;
  validate(g);
  const ModelSetup setup = run.config.model_setup();
  Dataset data = load_data_for(data_path, setup.spec);
  if (limit > 0 && data.samples.size() > limit) data.samples.resize(limit);

  std::vector<Pose2D> xs;
  for (const Sample& s : data.samples) xs.push_back(s.x);
  const std::vector<Pose3D> gts = ground_truth(data);
  const std::vector<Pose3D> preds = predict(run.posenet, setup, data);
  const LossNetContext ctx = LossNetContext::build(setup.spec, setup.lossnet);
  const GbiModel model{&run.lossnet, setup.lossnet, &ctx, setup.camera};
  const std::vector<GbiTrajectory> traj = gbi_refine_batch(model, xs, preds, gts, setup.spec, g);
  const GbiTrajectory mean = mean_trajectory(traj);

  const fs::path out_dir = out_flag.empty() ? run.dir / "gbi" : fs::path(out_flag);
  std::ostringstream csv;
  mean.write_csv(csv);
  write_text_file(out_dir / "gbi_mean.csv", stamp(csv.str(), run.config.digest()));
  out << "samples     " << traj.size() << "\n";
  if (!mean.records.empty()) {
    out << "energy      " << format_double(mean.records.front().energy) << " -> "
        << format_double(mean.records.back().energy) << "\n";
    out << "LSE         " << csv_field(mean.records.front().lse) << " -> " << csv_field(mean.records.back().lse)
        << "\n";
  }
  if (mean.truncated) out << "warning     " << mean.diagnostic << "\n";
  out << "wrote " << out_dir.string() << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const ModelFlags& flags, const std::string& grid_path,
              const std::string& train_path, const std::string& val_path, const std::string& out_flag, bool force,
              std::ostream& out) {
  ExperimentConfig c = config_or_default(config_path);
  flags.apply(c);
  std::ifstream gf(grid_path);
  if (!gf) throw IoError("cannot open grid file " + grid_path);
  const SweepGrid grid = sweep_grid_from_json(nlohmann::json::parse(gf));
  const std::string digest = digest_hex(to_json(c, false).dump() + to_json(grid).dump());
  const fs::path out_dir = resolve_out(out_flag, "sweep", digest);
  prepare_output(out_dir, "sweep.csv", force);

  const Dataset train = load_data_for(train_path, c.spec());
  const Dataset val = load_data_for(val_path, c.spec());
  const SweepResult r = greedy_sweep(grid, train, val, c.model_setup(), c.train, [&](const SweepRow& row) {
    out << "stage " << row.stage << "  lr_p=" << csv_field(row.lr_p) << " lr_l=" << csv_field(row.lr_l)
        << " alpha=" << csv_field(row.alpha) << "  MPJPE=" << csv_field(row.mpjpe) << "  " << row.status << "\n";
  });
  write_text_file(out_dir / "sweep.csv", stamp(r.to_csv(), digest));
  ExperimentConfig best = c;
  best.train = r.best;
  best.output_dir.clear();
  save_experiment(best, out_dir / "best_config.json");
  out << "best lr_p=" << format_double(r.best.lr_p) << " lr_l=" << format_double(r.best.lr_l)
      << " alpha=" << format_double(r.best.objective.alpha) << "\nwrote " << out_dir.string() << "\n";
  return 0;
}

int cmd_analyze(const std::string& run_dir, const std::string& which, const std::string& data_path,
                const std::string& out_flag, std::ostream& out) {
  const Run run = load_run(run_dir, which);
  const ModelSetup setup = run.config.model_setup();
  const Dataset data = load_data_for(data_path, setup.spec);
  const std::vector<Pose3D> gts = ground_truth(data);
  const std::vector<Pose3D> preds = predict(run.posenet, setup, data);

  std::vector<Pose2D> xs;
  for (const Sample& s : data.samples) xs.push_back(s.x);
  const LossNetContext ctx = LossNetContext::build(setup.spec, setup.lossnet);
  const Matrix energies =
      lossnet_energies(run.lossnet, setup.lossnet, ctx, normalize_inputs(setup.camera, xs), poses_to_rows(preds));

  std::vector<double> e(energies.data(), energies.data() + energies.size());
  std::vector<double> l_lse, l_bsle, l_lle;
  std::ostringstream per_sample;
  per_sample << "sample,energy,lse,bsle,lle\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    l_lse.push_back(lse(preds[i], setup.spec));
    l_bsle.push_back(bsle(preds[i], gts[i], setup.spec));
    l_lle.push_back(lle(preds[i], gts[i], setup.spec));
    per_sample << i << ',' << format_double(e[i]) << ',' << format_double(l_lse.back()) << ','
               << format_double(l_bsle.back()) << ',' << format_double(l_lle.back()) << '\n';
  }
  std::ostringstream csv;
  csv << "metric,kendall_tau,ordering_accuracy,n_samples\n";
  const std::pair<const char*, const std::vector<double>*> metrics[] = {
      {"lse", &l_lse}, {"bsle", &l_bsle}, {"lle", &l_lle}};
  for (const auto& [name, values] : metrics) {
    const double tau = kendall_tau(e, *values);
    const double acc = ordering_accuracy(e, *values);
    csv << name << ',' << format_double(tau) << ',' << format_double(acc) << ',' << e.size() << '\n';
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-5s tau %+.4f   ordering accuracy %.2f %%\n", name, tau, acc);
    out << buf;
  }
  const fs::path out_dir = out_flag.empty() ? run.dir / "analysis" : fs::path(out_flag);
  const std::string digest = run.config.digest();
  write_text_file(out_dir / "analysis.csv", stamp(csv.str(), digest));
  write_text_file(out_dir / "energies.csv", stamp(per_sample.str(), digest));
  out << "wrote " << out_dir.string() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SEAL-pose laboratory: synthetic data, training, evaluation and analysis", "sealpose"};
  app.require_subcommand(1);

  std::string config, out_flag, text, split = "train", train_path, val_path, run_dir, data_path, compare, grid;
  std::string which = "best";
  std::optional<std::size_t> n_samples;
  std::optional<std::uint64_t> data_seed;
  std::optional<int> steps;
  std::optional<double> step_size;
  bool force = false, baseline = false, no_line_search = false;
  int bins = 5;
  std::size_t limit = 0;
  ModelFlags flags;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
  gen->add_option("--config", config, "Experiment config (JSON)");
  gen->add_option("--split", split, "train or val (val uses the validation seed and size)")
      ->check(CLI::IsMember({"train", "val"}));
  gen->add_option("--n-samples", n_samples, "Override the sample count");
  gen->add_option("--seed", data_seed, "Override the generator seed");
  gen->add_option("--out", out_flag, "Dataset file to write");
  gen->add_option("--text", text, "Also export the samples as CSV");
  gen->add_flag("--force", force, "Overwrite an existing file");

  auto* train = app.add_subcommand("train", "Train a pose-net (with a loss-net unless --baseline)");
  train->add_option("--config", config, "Experiment config (JSON)");
  train->add_option("--train", train_path, "Training dataset")->required();
  train->add_option("--val", val_path, "Validation dataset")->required();
  train->add_option("--out", out_flag, "Run directory");
  train->add_flag("--baseline", baseline, "Supervised MSE only");
  train->add_flag("--force", force, "Overwrite existing outputs");
  flags.add(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a trained run on a dataset");
  eval->add_option("--run", run_dir, "Run directory")->required();
  eval->add_option("--data", data_path, "Dataset")->required();
  eval->add_option("--checkpoint", which, "best or final")->check(CLI::IsMember({"best", "final"}));
  eval->add_option("--compare", compare, "Second run directory for a binned comparison");
  eval->add_option("--bins", bins, "Number of P-MPJPE bins")->check(CLI::PositiveNumber);
  eval->add_option("--out", out_flag, "Output directory (default <run>/eval)");

  auto* gbi = app.add_subcommand("gbi", "Refine predictions by descending the loss-net energy");
  gbi->add_option("--run", run_dir, "Run directory")->required();
  gbi->add_option("--data", data_path, "Dataset")->required();
  gbi->add_option("--checkpoint", which, "best or final")->check(CLI::IsMember({"best", "final"}));
  gbi->add_option("--steps", steps, "Refinement iterations");
  gbi->add_option("--step-size", step_size, "Gradient step size");
  gbi->add_flag("--no-line-search", no_line_search, "Disable backtracking");
  gbi->add_option("--limit", limit, "Use only the first N samples");
  gbi->add_option("--out", out_flag, "Output directory (default <run>/gbi)");

  auto* sweep = app.add_subcommand("sweep", "Greedy three-stage hyperparameter sweep");
  sweep->add_option("--config", config, "Base experiment config (JSON)");
  sweep->add_option("--grid", grid, "Grid file with lr_p, lr_l and alpha lists")->required();
  sweep->add_option("--train", train_path, "Training dataset")->required();
  sweep->add_option("--val", val_path, "Validation dataset")->required();
  sweep->add_option("--out", out_flag, "Output directory");
  sweep->add_flag("--force", force, "Overwrite existing outputs");
  flags.add(sweep);

  auto* analyze = app.add_subcommand("analyze", "Correlate loss-net energy with structural errors");
  analyze->add_option("--run", run_dir, "Run directory")->required();
  analyze->add_option("--data", data_path, "Dataset")->required();
  analyze->add_option("--checkpoint", which, "best or final")->check(CLI::IsMember({"best", "final"}));
  analyze->add_option("--out", out_flag, "Output directory (default <run>/analysis)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(config, split, n_samples, data_seed, out_flag, text, force, out);
    if (*train) return cmd_train(config, flags, baseline, train_path, val_path, out_flag, force, out);
    if (*eval) return cmd_eval(run_dir, which, data_path, compare, bins, out_flag, out);
    if (*gbi) return cmd_gbi(run_dir, which, data_path, steps, step_size, no_line_search, limit, out_flag, out);
    if (*sweep) return cmd_sweep(config, flags, grid, train_path, val_path, out_flag, force, out);
    if (*analyze) return cmd_analyze(run_dir, which, data_path, out_flag, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace sealpose::cli
