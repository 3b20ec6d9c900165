#include "oracles.hpp"

#include <stpd/simulate.hpp>
#include <stpd/train.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

using namespace stpd;

namespace {

struct Fixture
{
  ProjectorGeometry geo{8, 12, 8};
  Projector proj{geo};
  std::vector<TrainSample> data;
  std::vector<TrainSample> validation;

  Fixture()
  {
    auto const sched = FrameSchedule::from_groups({{3, 60.0}});
    for (std::uint64_t s = 0; s < 4; ++s) {
      auto const ph = make_phantom(default_phantom_spec(8, s, 1.0), sched);
      auto const scan = simulate_scan(ph.activity, proj, ScanModel::interpolated(sched, 2000, 4000), s);
      auto const n = normalize_pair(scan.counts, ph.activity);
      (s < 3 ? data : validation).push_back({n.sinograms.cast<float>(), n.labels.cast<float>()});
    }
  }
};

TrainConfig tiny_train(std::size_t epochs)
{
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 2;
  c.base_lr = 1e-3;
  c.lr_decay = 0.9;
  c.seed = 5;
  c.network.n_blocks = 2;
  c.network.hidden = 4;
  c.network.final_bn_gamma = 0.1;
  return c;
}

bool same_params(NetworkParams<float> &a, NetworkParams<float> &b)
{
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->value != pb[i]->value) { return false; }
  }
  auto ba = a.batch_norms(), bb = b.batch_norms();
  for (std::size_t i = 0; i < ba.size(); ++i) {
    if (ba[i]->running_mean != bb[i]->running_mean || ba[i]->running_var != bb[i]->running_var) { return false; }
  }
  return true;
}

} // namespace

TEST(TrainConfig, ValidationAndSchedule)
{
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(c.lr(0), 8e-4);
  EXPECT_DOUBLE_EQ(c.lr(3), 8e-4 * 0.99 * 0.99 * 0.99);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.base_lr = 0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.lr_decay = 1.5;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Train, HistoryFollowsTheEpochSchedule)
{
  Fixture f;
  auto const cfg = tiny_train(3);
  std::vector<std::size_t> epochs_seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](std::size_t e, double) { epochs_seen.push_back(e); };
  auto const r = train(cfg, f.data, f.proj, f.validation, hooks);
  // 3 samples at batch 2: two steps per epoch
  ASSERT_EQ(r.history.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(r.history[i].step, i);
    EXPECT_EQ(r.history[i].epoch, i / 2);
    EXPECT_DOUBLE_EQ(r.history[i].lr, 1e-3 * std::pow(0.9, double(i / 2)));
    EXPECT_TRUE(std::isfinite(r.history[i].loss));
  }
  EXPECT_EQ(epochs_seen, (std::vector<std::size_t>{0, 1, 2}));
  ASSERT_EQ(r.validation_loss.size(), 3u);
  EXPECT_LT(r.best_epoch, 3u);
  EXPECT_EQ(r.validation_loss[r.best_epoch],
            *std::min_element(r.validation_loss.begin(), r.validation_loss.end()));
}

TEST(Train, BitwiseReproducibleFromSeed)
{
  Fixture f;
  auto const cfg = tiny_train(2);
  auto a = train(cfg, f.data, f.proj);
  auto b = train(cfg, f.data, f.proj);
  EXPECT_TRUE(same_params(a.params, b.params));
  for (std::size_t i = 0; i < a.history.size(); ++i) { EXPECT_EQ(a.history[i].loss, b.history[i].loss); }
  auto other = cfg;
  other.seed = 6;
  auto c = train(other, f.data, f.proj);
  EXPECT_FALSE(same_params(a.params, c.params));
}

TEST(Train, ResumeContinuesBitwise)
{
  Fixture f;
  auto const dir = oracle::temp_dir("resume");
  auto cfg = tiny_train(4);
  cfg.checkpoint_dir = dir / "run";
  cfg.checkpoint_every = 2;
  auto full = train(cfg, f.data, f.proj, f.validation);
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "epoch_0002" / "manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "epoch_0004" / "train_state.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "best" / "manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "last" / "manifest.json"));

  auto cfg2 = cfg;
  cfg2.checkpoint_dir = dir / "resumed";
  auto resumed = train(cfg2, f.data, f.proj, f.validation, {}, dir / "run" / "epoch_0002");
  EXPECT_TRUE(same_params(full.params, resumed.params));
  EXPECT_TRUE(same_params(full.best_params, resumed.best_params));
  EXPECT_EQ(full.best_epoch, resumed.best_epoch);
  ASSERT_EQ(resumed.history.size(), full.history.size());
  for (std::size_t i = 0; i < full.history.size(); ++i) { EXPECT_EQ(resumed.history[i].loss, full.history[i].loss); }

  auto other = cfg;
  other.network.hidden = 5;
  EXPECT_THROW(train(other, f.data, f.proj, {}, {}, dir / "run" / "epoch_0002"), ParameterError);
}

TEST(Train, BestParametersAreThoseOfTheBestValidationEpoch)
{
  Fixture f;
  auto cfg = tiny_train(4);
  auto r = train(cfg, f.data, f.proj, f.validation);
  // retraining up to the best epoch reproduces the stored parameters
  auto prefix = cfg;
  prefix.epochs = r.best_epoch + 1;
  prefix.recalibrate_bn = false;
  auto p = train(prefix, f.data, f.proj);
  EXPECT_TRUE(same_params(r.best_params, p.params));
  EXPECT_NEAR(evaluate_loss(r.best_params, f.validation, f.proj), r.validation_loss[r.best_epoch], 0.0);

  // without validation data the best parameters are the final ones
  auto plain = train(cfg, f.data, f.proj);
  EXPECT_TRUE(same_params(plain.best_params, plain.params));
}

TEST(Train, RecalibratedStatisticsAverageTheBatches)
{
  Fixture f;
  auto cfg = tiny_train(2);
  cfg.recalibrate_bn = false;
  auto const trained = train(cfg, f.data, f.proj).params;

  auto both = trained, only_a = trained, only_b = trained;
  recalibrate_batch_norm(both, {f.data[0], f.data[1]}, f.proj, 1);
  recalibrate_batch_norm(only_a, {f.data[0]}, f.proj, 1);
  recalibrate_batch_norm(only_b, {f.data[1]}, f.proj, 1);
  auto bn = both.batch_norms(), ba = only_a.batch_norms(), bb = only_b.batch_norms();
  auto const before = const_cast<NetworkParams<float> &>(trained).batch_norms();
  bool moved = false;
  // the first batch norm sees the same input in all three runs, so its
  // statistics are exactly the average of the single-sample ones
  for (std::size_t c = 0; c < bn[0]->channels(); ++c) {
    EXPECT_NEAR(bn[0]->running_mean[c], 0.5f * (ba[0]->running_mean[c] + bb[0]->running_mean[c]),
                1e-6f * (1 + std::abs(bn[0]->running_mean[c])));
    EXPECT_NEAR(bn[0]->running_var[c], 0.5f * (ba[0]->running_var[c] + bb[0]->running_var[c]),
                1e-5f * (1 + bn[0]->running_var[c]));
  }
  for (std::size_t i = 0; i < bn.size(); ++i) {
    EXPECT_EQ(bn[i]->mode, ad::BnMode::Eval);
    EXPECT_EQ(bn[i]->momentum, before[i]->momentum);
    moved = moved || bn[i]->running_mean != before[i]->running_mean;
  }
  EXPECT_TRUE(moved);

  // the old running statistics play no part
  auto again = both;
  recalibrate_batch_norm(again, {f.data[0], f.data[1]}, f.proj, 1);
  EXPECT_TRUE(same_params(again, both));
  EXPECT_THROW(recalibrate_batch_norm(again, {}, f.proj, 1), ParameterError);

  // train() applies it to the final parameters with the training batch size
  cfg.recalibrate_bn = true;
  auto r = train(cfg, f.data, f.proj);
  auto manual = trained;
  recalibrate_batch_norm(manual, f.data, f.proj, cfg.batch_size);
  EXPECT_TRUE(same_params(r.params, manual));
}

TEST(Train, DivergenceKeepsTheLastGoodParameters)
{
  Fixture f;
  auto data = f.data;
  data[1].labels[0] = std::numeric_limits<float>::quiet_NaN();
  auto cfg = tiny_train(2);
  cfg.batch_size = 1;
  try {
    train(cfg, data, f.proj);
    FAIL() << "expected divergence";
  } catch (TrainingDiverged const &e) {
    auto last = e.last_good;
    EXPECT_TRUE(std::isfinite(last.parameters().front()->value[0]));
    for (auto const &h : e.history) { EXPECT_TRUE(std::isfinite(h.loss)); }
    // sample 1 is drawn somewhere in the first epoch; every earlier step is kept
    EXPECT_LT(e.history.size(), 3u);
  }
}

TEST(Train, LossFallsOnASingleSample)
{
  Fixture f;
  auto cfg = tiny_train(40);
  cfg.batch_size = 1;
  cfg.lr_decay = 1.0;
  cfg.base_lr = 3e-3;
  std::vector<TrainSample> one{f.data[0]};
  auto const r = train(cfg, one, f.proj);
  EXPECT_LT(r.history.back().loss, 0.5 * r.history.front().loss);
}

TEST(Train, EvaluateLossIsTheEvalModeMse)
{
  Fixture f;
  auto r = train(tiny_train(1), f.data, f.proj);
  double const loss = evaluate_loss(r.params, f.validation, f.proj);
  r.params.set_mode(ad::BnMode::Eval);
  auto const x = stpdnet_forward(r.params, f.validation[0].sinograms, f.proj);
  double mse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double const d = double(x[i]) - double(f.validation[0].labels[i]);
    mse += d * d;
  }
  mse /= double(x.size());
  EXPECT_NEAR(loss, mse, 1e-6 * mse);
}

TEST(Train, LossHistoryCsv)
{
  auto const dir = oracle::temp_dir("loss_csv");
  write_loss_history({{0, 0, 0.1, 0.5}, {1, 0, 0.1, 0.25}}, dir / "loss.csv");
  std::ifstream in(dir / "loss.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "step,epoch,lr,loss");
  EXPECT_EQ(row.substr(0, 4), "0,0,");
}
