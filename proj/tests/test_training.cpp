#include <gtest/gtest.h>

#include <cmath>

#include "graphids/checkpoint.hpp"
#include "graphids/config.hpp"
#include "graphids/detection.hpp"
#include "graphids/error.hpp"
#include "graphids/training.hpp"
#include "test_support.hpp"

namespace graphids {
namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.edim_out = 6;
  c.embed_dim = 4;
  c.window_size = 16;
  c.ae_batch_size = 4;
  c.gnn_batch_size = 128;
  c.gnn_dropout = 0.0;
  c.learning_rate = 5e-3;
  c.max_epochs = 4;
  c.patience = 3;
  c.seed = 3;
  return c;
}

TEST(EarlyStopper, FiresExactlyPatienceEpochsAfterBest) {
  for (int patience : {3, 20}) {
    EarlyStopper s(patience);
    int stopped = 0;
    for (int epoch = 1; epoch <= 100 && stopped == 0; ++epoch) {
      const double metric = epoch <= 3 ? 0.1 * epoch : 0.3;  // plateau, ties do not count
      if (s.update(epoch, metric)) stopped = epoch;
    }
    EXPECT_EQ(s.best_epoch(), 3);
    EXPECT_EQ(stopped, 3 + patience);
  }
}

TEST(EarlyStopper, LateImprovementResetsCounter) {
  EarlyStopper s(3);
  EXPECT_FALSE(s.update(1, 0.5));
  EXPECT_FALSE(s.update(2, 0.4));
  EXPECT_FALSE(s.update(3, 0.6));
  EXPECT_TRUE(s.improved());
  EXPECT_FALSE(s.update(4, 0.1));
  EXPECT_FALSE(s.update(5, 0.1));
  EXPECT_TRUE(s.update(6, 0.1));
}

TEST(AdamW, FirstStepMatchesHandComputation) {
  ParameterStore store;
  Parameter& g = store.add("g", ParamGroup::Gnn, Mat::Constant(1, 1, 2.0));
  Parameter& a = store.add("a", ParamGroup::Autoencoder, Mat::Constant(1, 1, -1.0));
  AdamW opt(store, {.learning_rate = 0.1, .gnn_weight_decay = 0.5, .ae_weight_decay = 0.0});
  g.grad = Mat::Constant(1, 1, 4.0);
  a.grad = Mat::Constant(1, 1, -0.5);
  opt.step();
  // decay: 2 * (1 - 0.05) = 1.9; bias-corrected Adam step is lr * g/|g| (up to eps)
  EXPECT_NEAR(g.value(0, 0), 1.9 - 0.1, 1e-8);
  EXPECT_NEAR(a.value(0, 0), -1.0 + 0.1, 1e-8);

  g.grad = Mat::Constant(1, 1, 0.0);
  a.grad = Mat::Constant(1, 1, 0.0);
  opt.step();
  // m = 0.9*0.4 = 0.36 / (1-0.81); v = 0.999*0.016 / (1-0.998001)
  const double mhat = 0.36 / 0.19, vhat = 0.999 * 0.016 / (1 - 0.999 * 0.999);
  EXPECT_NEAR(g.value(0, 0), 1.8 * 0.95 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-9);
}

TEST(AdamW, WeightDecayTouchesOnlyItsGroup) {
  for (int which = 0; which < 2; ++which) {
    ParameterStore store;
    Parameter& g = store.add("g", ParamGroup::Gnn, Mat::Constant(2, 2, 1.0));
    Parameter& a = store.add("a", ParamGroup::Autoencoder, Mat::Constant(2, 2, 1.0));
    AdamWOptions o{.learning_rate = 0.1};
    (which == 0 ? o.gnn_weight_decay : o.ae_weight_decay) = 0.6;
    AdamW opt(store, o);
    g.grad = Mat::Zero(2, 2);
    a.grad = Mat::Zero(2, 2);
    opt.step();
    const Mat& decayed = which == 0 ? g.value : a.value;
    const Mat& kept = which == 0 ? a.value : g.value;
    EXPECT_EQ(decayed, Mat::Constant(2, 2, 0.94));
    EXPECT_EQ(kept, Mat::Constant(2, 2, 1.0));
  }
}

TEST(AdamW, ClipBoundsGlobalNorm) {
  ParameterStore store;
  Parameter& p = store.add("p", ParamGroup::Gnn, Mat::Zero(1, 2));
  p.grad = (Mat(1, 2) << 3, 4).finished();
  EXPECT_DOUBLE_EQ(clip_grad_norm(store, 1.0), 5.0);
  EXPECT_NEAR(grad_norm(store), 1.0, 1e-6);  // denominator carries a 1e-6 guard
}

TEST(Training, LossDropsOnBenignFlows) {
  const FlowTable table = testing::toy_table(626, 0, 4, 11);
  DatasetSplit split = stratified_split(table, {}, 1);
  ASSERT_EQ(split.train.size(), 500u);
  TrainConfig c = small_config();
  c.max_epochs = 50;
  c.patience = 50;
  c.mask_ratio = 0.15;
  c.learning_rate = 3e-3;
  const TrainResult r = train(c, split);
  double best = r.history.front().train_loss;
  for (const auto& e : r.history) best = std::min(best, e.train_loss);
  EXPECT_LE(best, 0.1 * r.initial_loss) << "initial " << r.initial_loss;
  // all-benign validation cannot be scored, so selection falls back to train loss
  EXPECT_TRUE(r.selected_by_train_loss);
}

TEST(Training, SameSeedIsBitIdentical) {
  const FlowTable table = testing::toy_table(400, 40, 3, 5);
  const TrainConfig c = small_config();
  const DatasetSplit s1 = stratified_split(table, {}, 9);
  const DatasetSplit s2 = stratified_split(table, {}, 9);
  ASSERT_EQ(s1.manifest, s2.manifest);
  const TrainResult a = train(c, s1);
  const TrainResult b = train(c, s2);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_pr_auc, b.history[i].val_pr_auc);
  }
  const EvalReport ra = evaluate(*a.model, s1, c.seed);
  const EvalReport rb = evaluate(*b.model, s2, c.seed);
  EXPECT_EQ(report_to_json(ra), report_to_json(rb));
}

TEST(Training, EarlyStopsAndKeepsBestEpoch) {
  const FlowTable table = testing::toy_table(400, 40, 3, 6);
  TrainConfig c = small_config();
  c.max_epochs = 40;
  c.patience = 3;
  const TrainResult r = train(c, stratified_split(table, {}, 2));
  if (r.early_stopped) EXPECT_EQ(static_cast<int>(r.history.size()), r.best_epoch + 3);
  EXPECT_EQ(r.best.epoch, r.best_epoch);
  EXPECT_EQ(r.best.val_pr_auc, r.history[static_cast<std::size_t>(r.best_epoch - 1)].val_pr_auc);
}

TEST(Checkpoint, RoundTripReproducesValidationScore) {
  const FlowTable table = testing::toy_table(400, 40, 3, 7);
  const TrainConfig c = small_config();
  const DatasetSplit split = stratified_split(table, {}, 4);
  const TrainResult r = train(c, split);
  const auto path = testing::scratch_dir("ckpt") / "m.gck";
  save_checkpoint(path, r.best);
  const Checkpoint loaded = load_checkpoint(path, {.expected_config = &c, .expected_feature_dim = 3});
  EXPECT_EQ(loaded.params, r.best.params);
  EXPECT_EQ(loaded.adam_m, r.best.adam_m);
  EXPECT_EQ(loaded.adam_steps, r.best.adam_steps);
  EXPECT_EQ(loaded.fingerprint, config_fingerprint(c));
  auto model = model_from_checkpoint(loaded);
  const FlowGraph val = build_scaled_graph(split.val, loaded.scaler);
  std::vector<std::uint8_t> labels;
  for (const auto& f : split.val) labels.push_back(f.attack ? 1 : 0);
  EXPECT_EQ(pr_auc(score_graph(*model, val, c.seed), labels), r.best.val_pr_auc);
}

TEST(Checkpoint, MismatchesAreReported) {
  const FlowTable table = testing::toy_table(200, 20, 3, 8);
  TrainConfig c = small_config();
  c.max_epochs = 1;
  c.patience = 1;
  const TrainResult r = train(c, stratified_split(table, {}, 4));
  const auto dir = testing::scratch_dir("ckpt_bad");
  save_checkpoint(dir / "m.gck", r.best);
  EXPECT_THROW(load_checkpoint(dir / "m.gck", {.expected_feature_dim = 5}), CheckpointError);

  TrainConfig other = c;
  other.embed_dim = 8;
  EXPECT_THROW(load_checkpoint(dir / "m.gck", {.expected_config = &other}), CheckpointError);
  std::vector<std::string> warnings;
  EXPECT_NO_THROW(load_checkpoint(dir / "m.gck", {.expected_config = &other, .force = true}, &warnings));
  EXPECT_EQ(warnings.size(), 1u);

  std::string bytes = read_text_file(dir / "m.gck");
  bytes[bytes.size() / 2] ^= 0x5a;
  write_text_file(dir / "bad.gck", bytes);
  EXPECT_THROW(load_checkpoint(dir / "bad.gck"), CheckpointError);
}

TEST(Config, ParseFingerprintAndStrictKeys) {
  const TrainConfig c = parse_config("edim_out: 16\nmask_ratio: 0.3\nseed: 4\n");
  EXPECT_EQ(c.edim_out, 16);
  EXPECT_EQ(c.mask_ratio, 0.3);
  EXPECT_EQ(parse_config(config_to_yaml(c)).items(), c.items());
  TrainConfig reseeded = c;
  reseeded.seed = 99;
  EXPECT_EQ(config_fingerprint(reseeded), config_fingerprint(c));
  TrainConfig changed = c;
  changed.set("mask_ratio", "0.5");
  EXPECT_NE(config_fingerprint(changed), config_fingerprint(c));
  EXPECT_EQ(config_fingerprint(c).size(), 16u);
  EXPECT_THROW(parse_config("edim_outt: 16\n"), Error);
  EXPECT_THROW(parse_config("mask_ratio: 1.0\n").validate(), Error);
  EXPECT_THROW(parse_config("variant: lstm\n"), Error);
}

}  // namespace
}  // namespace graphids
