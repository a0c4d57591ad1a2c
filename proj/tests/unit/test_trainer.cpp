#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "sealpose/csv.hpp"
#include "sealpose/errors.hpp"
#include "sealpose/trainer.hpp"

using namespace sealpose;

namespace {

struct Fixture {
  Dataset train;
  Dataset val;
  ModelSetup setup;
  TrainConfig config;

  Fixture() {
    GeneratorConfig gen = GeneratorConfig::defaults();
    gen.n_samples = 96;
    gen.seed = 0;
    train = make_dataset(gen, CameraModel{});
    gen.n_samples = 32;
    gen.seed = 100;
    val = make_dataset(gen, CameraModel{});
    setup.spec = gen.spec;
    setup.posenet.hidden_width = 32;
    setup.posenet.n_blocks = 1;
    setup.lossnet.d_embed = 8;
    setup.lossnet.d_model = 8;
    setup.lossnet.heads = 2;
    setup.lossnet.depth = 1;
    setup.lossnet.ffn_width = 8;
    setup.lossnet.head_hidden = 8;
    config.epochs = 2;
    config.batch_size = 16;
    config.lr_p = 1e-3;
    config.lr_l = 1e-3;
  }

  std::vector<const Sample*> first_batch(std::size_t n) const {
    std::vector<const Sample*> b;
    for (std::size_t i = 0; i < n; ++i) b.push_back(&train.samples[i]);
    return b;
  }
};

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / "sealpose_trainer_test" / name;
  std::filesystem::remove_all(d);
  return d;
}

// Plain supervised training written from scratch: same shuffle stream,
// same batches, MSE only, Adam on the pose-net.
ParamStore scripted_supervised(const Fixture& f) {
  const int J = f.setup.spec.joint_count();
  ParamStore phi = init_posenet(f.setup.posenet, J);
  AdamState adam = AdamState::for_store(phi);
  Rng shuffle = Rng(f.config.seed).derive(1);
  std::vector<std::size_t> order(f.train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < f.config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);
    for (std::size_t start = 0; start < order.size(); start += f.config.batch_size) {
      std::vector<Pose2D> xs;
      std::vector<Pose3D> ys;
      for (std::size_t i = start; i < std::min(order.size(), start + f.config.batch_size); ++i) {
        xs.push_back(f.train.samples[order[i]].x);
        ys.push_back(f.train.samples[order[i]].y);
      }
      ad::Tape tape;
      ParamBinding b(tape, phi, true);
      ad::Var pred = posenet_forward(b, f.setup.posenet, J, 0, tape.constant(normalize_inputs(f.train.camera, xs)));
      ad::Var loss = ad::mean(ad::scale(ad::row_sum(ad::square(pred - tape.constant(poses_to_rows(ys)))), 1.0 / 3.0));
      tape.backward(loss);
      adam_step(phi, tape.parameter_gradients(), adam, f.config.lr_p);
    }
  }
  return phi;
}

double cosine(const ad::GradientMap& a, const ad::GradientMap& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [name, g] : a) {
    const Matrix& h = b.at(name);
    dot += (g.array() * h.array()).sum();
    na += g.squaredNorm();
    nb += h.squaredNorm();
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST(Trainer, BaselineModeIsBitIdenticalToPlainSupervisedTraining) {
  Fixture f;
  f.config.baseline_mode = true;
  const TrainResult r = train_run(f.train, f.val, f.setup, f.config);
  const ParamStore scripted = scripted_supervised(f);
  EXPECT_EQ(r.posenet_final.serialize(), scripted.serialize());
  for (const EpochRecord& e : r.history.epochs) {
    EXPECT_FALSE(e.L_E.has_value());
    EXPECT_FALSE(e.mean_energy.has_value());
  }
}

TEST(Trainer, ZeroAlphaMatchesBaselineEvenWithLossNetUpdates) {
  Fixture f;
  f.config.objective.alpha = 0.0;
  const TrainResult seal = train_run(f.train, f.val, f.setup, f.config);
  f.config.baseline_mode = true;
  const TrainResult base = train_run(f.train, f.val, f.setup, f.config);
  EXPECT_EQ(seal.posenet_final.serialize(), base.posenet_final.serialize());
  // The loss-net itself did move.
  EXPECT_NE(seal.lossnet_final.serialize(), base.lossnet_final.serialize());
}

TEST(Trainer, PoseNetStepUsesTheUpdatedLossNet) {
  // Rescaling the energy head after the loss-net update by +s or -s flips
  // the dominant part of dL_F/dphi. If the pose-net step read theta_{t-1},
  // both runs would see identical gradients.
  Fixture f;
  f.config.objective.alpha = 1.0;
  const auto batch = f.first_batch(16);
  auto run = [&](double s) {
    TrainState st = TrainState::init(f.setup);
    Rng rng(0);
    ad::GradientMap captured;
    StepHooks hooks;
    hooks.after_lossnet_update = [s](ParamStore& theta) {
      theta.get("lossnet.head.fc2.weight") *= s;
      theta.get("lossnet.head.fc2.bias") *= s;
    };
    hooks.posenet_gradients = [&](const ad::GradientMap& g) { captured = g; };
    train_step(batch, st, f.setup, f.config, rng, f.train.samples, &hooks);
    return captured;
  };
  const ad::GradientMap plus = run(1e4), minus = run(-1e4), same = run(1e4);
  EXPECT_LT(cosine(plus, minus), -0.99);
  EXPECT_GT(cosine(plus, same), 0.999999);
}

TEST(Trainer, LossNetStepDescendsAtSmallLearningRate) {
  Fixture f;
  f.config.lr_l = 1e-6;
  const auto batch = f.first_batch(16);
  TrainState st = TrainState::init(f.setup);
  const ParamStore phi_before = st.posenet;
  Rng rng(5);
  const Rng rng_copy = rng;
  ParamStore theta_after;
  StepHooks hooks;
  hooks.after_lossnet_update = [&](ParamStore& theta) { theta_after = theta; };
  const StepRecord rec = train_step(batch, st, f.setup, f.config, rng, f.train.samples, &hooks);
  ASSERT_TRUE(rec.ok);
  ASSERT_GT(*rec.L_E, 0.0) << "hinge should be active at initialization";

  std::vector<Pose2D> xs;
  std::vector<Pose3D> ys;
  for (const Sample* s : batch) xs.push_back(s->x), ys.push_back(s->y);
  ObjectiveBatch ob;
  ob.x = normalize_inputs(f.train.camera, xs);
  ob.y = poses_to_rows(ys);
  ob.y_pred = posenet_predict(phi_before, f.setup.posenet, 17, 0, ob.x);
  ob.samples = batch;
  ad::Tape tape;
  ParamBinding theta(tape, theta_after, false);
  Rng again = rng_copy;
  const double after = lossnet_objective(ob, PoseNetView{&phi_before, f.setup.posenet, 17, 0, f.train.camera},
                                         LossNetView{&theta, f.setup.lossnet, &st.ctx}, f.config.objective, again,
                                         f.train.samples)
                           .total.scalar();
  EXPECT_LT(after, *rec.L_E);
}

TEST(Trainer, IdenticalConfigsGiveIdenticalRunsAndFiles) {
  Fixture f;
  f.config.objective.K = 3;
  f.config.objective.window_w = 2;
  const auto d1 = temp_dir("det1"), d2 = temp_dir("det2");
  const TrainResult a = train_run(f.train, f.val, f.setup, f.config, d1);
  const TrainResult b = train_run(f.train, f.val, f.setup, f.config, d2);
  EXPECT_TRUE(a.history == b.history);
  for (const char* name :
       {"history.csv", "posenet_final.ckpt", "lossnet_final.ckpt", "posenet_best.ckpt", "lossnet_best.ckpt"}) {
    std::ifstream fa(d1 / name, std::ios::binary), fb(d2 / name, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_FALSE(sa.empty()) << name;
    EXPECT_EQ(sa, sb) << name;
  }
  EXPECT_EQ(ParamStore::load(d1 / "posenet_final.ckpt").serialize(), a.posenet_final.serialize());
}

TEST(Trainer, ZeroEpochsReturnsInitialization) {
  Fixture f;
  f.config.epochs = 0;
  const TrainResult r = train_run(f.train, f.val, f.setup, f.config);
  EXPECT_TRUE(r.history.epochs.empty());
  EXPECT_EQ(r.posenet_final.serialize(), init_posenet(f.setup.posenet, 17).serialize());
  EXPECT_EQ(r.best_epoch, 0);
}

TEST(Trainer, HistorySchemaAndProgress) {
  Fixture f;
  f.config.epochs = 4;
  f.config.eval_every = 2;
  f.config.lr_p = 3e-3;
  const auto dir = temp_dir("schema");
  const TrainResult r = train_run(f.train, f.val, f.setup, f.config, dir);
  const CsvTable t = read_csv(dir / "history.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"epoch", "L_F", "L_E", "mean_energy", "val_mpjpe", "val_pmpjpe",
                                                "val_lse", "val_bsle", "val_lle", "config_digest"}));
  ASSERT_EQ(t.rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(t.rows[i][0], std::to_string(i + 1));
    EXPECT_EQ(t.rows[i].back(), r.history.config_digest);
    EXPECT_EQ(t.rows[i][4].empty(), i % 2 == 0);  // validation on epochs 2 and 4 only
  }
  EXPECT_LT(*r.history.epochs[3].val_mpjpe, *r.history.epochs[1].val_mpjpe);
}

TEST(Trainer, ExplodingLossAbortsAndPersistsHistory) {
  Fixture f;
  f.setup.posenet.init_scale = 1e4;
  f.config.baseline_mode = true;
  const auto dir = temp_dir("abort");
  try {
    train_run(f.train, f.val, f.setup, f.config, dir);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("L_F"), std::string::npos);
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "history.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "posenet_final.ckpt"));
}

TEST(Trainer, ConfigValidationAndJson) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(validate(c), ContractError);
  c = TrainConfig{};
  c.lr_p = 0.0;
  EXPECT_THROW(validate(c), ContractError);
  c = TrainConfig{};
  c.epochs = 3;
  c.objective.K = 2;
  const TrainConfig b = train_from_json(to_json(c));
  EXPECT_EQ(b.epochs, 3);
  EXPECT_EQ(b.objective.K, 2);
  EXPECT_EQ(b.lr_p, 1e-4);
  EXPECT_EQ(b.objective.alpha, 5e-3);
}

// -- sweep ---------------------------------------------------------------------

TEST(Sweep, SingletonGridReturnsThatConfig) {
  Fixture f;
  f.config.epochs = 1;
  const SweepGrid g{{1e-3}, {2e-3}, {0.01}};
  const SweepResult r = greedy_sweep(g, f.train, f.val, f.setup, f.config);
  EXPECT_EQ(r.best.lr_p, 1e-3);
  EXPECT_EQ(r.best.lr_l, 2e-3);
  EXPECT_EQ(r.best.objective.alpha, 0.01);
  std::vector<int> stages;
  for (const SweepRow& row : r.rows) stages.push_back(row.stage);
  std::sort(stages.begin(), stages.end());
  EXPECT_EQ(stages, (std::vector<int>{1, 2, 3}));
}

TEST(Sweep, WinnerMatchesTableReplay) {
  Fixture f;
  f.config.epochs = 1;
  const SweepGrid g{{3e-4, 3e-3}, {1e-4, 1e-3}, {1e-3, 0.1}};
  const SweepResult r = greedy_sweep(g, f.train, f.val, f.setup, f.config);

  // Rows sorted ascending by MPJPE.
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    if (r.rows[i].mpjpe && r.rows[i - 1].mpjpe) EXPECT_LE(*r.rows[i - 1].mpjpe, *r.rows[i].mpjpe);
  }
  // Replay: stage 1 argmin -> lr_p; stage 2 argmin -> lr_l; stage 3 argmin -> alpha.
  auto argmin = [&](int stage) {
    const SweepRow* best = nullptr;
    for (const SweepRow& row : r.rows) {
      if (row.stage != stage || !row.mpjpe) continue;
      if (!best || *row.mpjpe < *best->mpjpe) best = &row;
    }
    return best;
  };
  const SweepRow* s1 = argmin(1);
  const SweepRow* s2 = argmin(2);
  const SweepRow* s3 = argmin(3);
  ASSERT_TRUE(s1 && s2 && s3);
  EXPECT_EQ(r.best.lr_p, *s1->lr_p);
  EXPECT_EQ(*s2->lr_p, *s1->lr_p);
  EXPECT_EQ(r.best.lr_l, *s2->lr_l);
  EXPECT_EQ(r.best.objective.alpha, *s3->alpha);
  for (const SweepRow& row : r.rows) {
    if (row.stage >= 2 && row.mpjpe) EXPECT_LE(*s3->mpjpe, *row.mpjpe);
    if (row.stage == 3) EXPECT_EQ(*row.lr_l, r.best.lr_l);
  }
  EXPECT_EQ(SweepResult::csv_header(), "lr_p,lr_l,alpha,MPJPE,stage,status");
  const CsvTable t = parse_csv(r.to_csv());
  EXPECT_EQ(t.rows.size(), r.rows.size());
}
