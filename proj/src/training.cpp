#include "graphids/training.hpp"

#include <chrono>
#include <cmath>

#include "graphids/detection.hpp"
#include "graphids/error.hpp"

namespace graphids {

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience_ < 1) throw Error("patience must be >= 1");
}

bool EarlyStopper::update(int epoch, double metric) {
  improved_ = metric > best_;
  if (improved_) {
    best_ = metric;
    best_epoch_ = epoch;
  }
  return epoch - best_epoch_ >= patience_;
}

FlowGraph build_scaled_graph(const std::vector<FlowRecord>& records, const FeatureScaler& scaler) {
  return FlowGraph::build(records, transform(scaler, records));
}

namespace {

bool has_both_classes(const std::vector<FlowRecord>& records) {
  bool pos = false, neg = false;
  for (const auto& r : records) (r.attack ? pos : neg) = true;
  return pos && neg;
}

bool params_finite(const ParameterStore& store) {
  for (const auto& p : store)
    if (!p.value.allFinite()) return false;
  return true;
}

}  // namespace

TrainResult train(const TrainConfig& config, const DatasetSplit& split, const TrainOptions& options) {
  config.validate();
  if (split.train.empty()) throw Error("train: the training partition is empty");
  for (const auto& r : split.train)
    if (r.attack) throw Error("train: the training partition must be benign-only");

  const int feature_dim = static_cast<int>(split.scaler.dim());
  TrainResult result;
  result.model = std::make_unique<Model>(config, feature_dim);
  Model& model = *result.model;

  AdamWOptions opt;
  opt.learning_rate = config.learning_rate;
  opt.gnn_weight_decay = config.gnn_weight_decay;
  opt.ae_weight_decay = config.ae_weight_decay;
  opt.grad_clip = config.grad_clip;
  AdamW optimizer(model.params(), opt);

  const FlowGraph train_graph = build_scaled_graph(split.train, split.scaler);
  const bool can_validate = has_both_classes(split.val);
  result.selected_by_train_loss = !can_validate;
  FlowGraph val_graph;
  std::vector<std::uint8_t> val_labels;
  if (can_validate) {
    val_graph = build_scaled_graph(split.val, split.scaler);
    for (const auto& r : split.val) val_labels.push_back(r.attack ? 1 : 0);
  }

  BatchIterator batches = make_batch_iterator(model, train_graph, config.seed);
  Rng dropout_rng = make_rng(config.seed, 0xd20b);
  Rng mask_rng = make_rng(config.seed, 0x3a5c);
  EarlyStopper stopper(config.patience);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    batches.start_epoch();
    EdgeBatch batch;
    double loss_sum = 0.0;
    std::size_t flows = 0;
    int step = 0;
    while (batches.next(batch)) {
      ++step;
      model.params().zero_grad();
      const BatchOutput out =
          run_edge_batch(model, train_graph, batch, Mode::Train, true, dropout_rng, mask_rng, options.probe);
      if (!std::isfinite(out.loss))
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(step),
                              epoch, step);
      if (epoch == 1 && step == 1) result.initial_loss = out.loss;
      notify(options.probe, "optimizer_step");
      optimizer.step();
      if (!params_finite(model.params()))
        throw DivergenceError("non-finite parameters after the update at epoch " + std::to_string(epoch) +
                                  ", step " + std::to_string(step),
                              epoch, step);
      loss_sum += out.loss * static_cast<double>(out.n_valid);
      flows += out.n_valid;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(flows);
    double metric = -rec.train_loss;
    if (can_validate) {
      notify(options.probe, "validate");
      rec.val_pr_auc = pr_auc(score_graph(model, val_graph, config.seed, options.probe), val_labels);
      metric = rec.val_pr_auc;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    const bool stop = stopper.update(epoch, metric);
    if (stopper.improved()) {
      result.best = capture_checkpoint(model, &optimizer, split.scaler, split.feature_names, epoch, rec.val_pr_auc);
      result.best.rng_states = {{"shuffle", rng_state(batches.shuffle_rng())},
                                {"sample", rng_state(batches.sample_rng())},
                                {"dropout", rng_state(dropout_rng)},
                                {"mask", rng_state(mask_rng)}};
    }
    if (stop) {
      result.early_stopped = epoch < config.max_epochs;
      break;
    }
  }
  result.best_epoch = stopper.best_epoch();
  restore_parameters(model, result.best);
  return result;
}

}  // namespace graphids
