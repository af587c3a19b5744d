#include "train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "errors.hpp"
#include "metrics.hpp"

namespace bci {

void TrainConfig::validate() const {
  if (lr <= 0.0) fail_usage("TrainConfig: lr must be positive");
  if (batch_size < 1) fail_usage("TrainConfig: batch_size must be positive");
  if (max_epochs < 0) fail_usage("TrainConfig: max_epochs must be non-negative");
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    fail_usage("TrainConfig: val_fraction must be in (0, 1)");
  }
  if (early_stop_train_acc <= 0.0 || early_stop_train_acc >= 1.0 || early_stop_val_acc <= 0.0 ||
      early_stop_val_acc >= 1.0) {
    fail_usage("TrainConfig: early-stop thresholds must be in (0, 1)");
  }
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::train_threshold: return "train_threshold";
    case StopReason::val_threshold: return "val_threshold";
    case StopReason::max_epochs: return "max_epochs";
  }
  return "unknown";
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,loss,ddpm,rec,ce,train_acc,val_acc,ms\n";
  char line[256];
  for (const EpochRecord& r : history.epochs) {
    std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.3f\n", r.epoch, r.loss,
                  r.ddpm, r.rec, r.ce, r.train_acc, r.val_acc, r.ms);
    out += line;
  }
  return out;
}

SplitIndices split_dataset(std::span<const int> labels, int n_classes, double val_fraction,
                           uint64_t seed) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    fail_usage("split_dataset: val_fraction must be in (0, 1)");
  }
  if (n_classes < 1) fail_usage("split_dataset: need at least one class");
  std::vector<std::vector<int>> per_class(static_cast<size_t>(n_classes));
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) fail_data("split_dataset: label out of range");
    per_class[static_cast<size_t>(labels[i])].push_back(static_cast<int>(i));
  }
  SplitIndices split;
  for (int k = 0; k < n_classes; ++k) {
    std::vector<int>& idx = per_class[static_cast<size_t>(k)];
    const int count = static_cast<int>(idx.size());
    const int n_val = static_cast<int>(std::llround(val_fraction * count));
    if (n_val < 1 || count - n_val < 1) {
      fail_data("split_dataset: class " + std::to_string(k) +
                " has too few trials for the requested split");
    }
    Rng class_rng = Rng(seed).stream(0xC1A5500ULL + static_cast<uint64_t>(k));
    class_rng.shuffle(idx);
    split.val.insert(split.val.end(), idx.begin(), idx.begin() + n_val);
    split.train.insert(split.train.end(), idx.begin() + n_val, idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

std::optional<StopReason> early_stop_check(double train_acc, double val_acc,
                                           const TrainConfig& cfg) {
  if (train_acc < 0.0 || train_acc > 1.0 || val_acc < 0.0 || val_acc > 1.0) {
    fail_usage("early_stop_check: accuracies must be in [0, 1]");
  }
  if (train_acc > cfg.early_stop_train_acc) return StopReason::train_threshold;
  if (val_acc > cfg.early_stop_val_acc) return StopReason::val_threshold;
  return std::nullopt;
}

double evaluate_accuracy(const Model& model, std::span<const TrainingExample> examples,
                         std::span<const int> indices) {
  if (indices.empty()) fail_usage("evaluate_accuracy: empty index set");
  int64_t correct = 0;
  for (int idx : indices) {
    const TrainingExample& ex = examples[static_cast<size_t>(idx)];
    const std::vector<double> probs = infer_window(model, ex.window);
    if (ranked_classes(probs)[0] == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

TrainResult train(const std::vector<TrainingExample>& examples, const ModelConfig& model_config,
                  const TrainConfig& train_config) {
  model_config.validate();
  train_config.validate();
  if (examples.empty()) fail_data("train: no examples");
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const TrainingExample& ex : examples) {
    if (ex.label < 0 || ex.label >= model_config.n_classes) {
      fail_data("train: example label out of range");
    }
    labels.push_back(ex.label);
  }

  TrainResult result;
  result.split = split_dataset(labels, model_config.n_classes, train_config.val_fraction,
                               train_config.seed);

  Rng base(train_config.seed);
  Rng init_rng = base.stream(1);
  Rng shuffle_rng = base.stream(2);
  Rng sample_rng = base.stream(3);
  Rng dropout_rng = base.stream(4);

  result.model.config = model_config;
  result.model.schedule = NoiseSchedule::cosine();
  result.model.params = init_params(model_config, init_rng);

  nn::AdamConfig adam_cfg;
  adam_cfg.lr = train_config.lr;
  nn::Adam opt(adam_cfg, result.model.params);
  const LossWeights weights{train_config.w_ddpm, train_config.w_rec, train_config.w_ce};

  result.history.stop_reason = StopReason::max_epochs;
  std::vector<int> order = result.split.train;
  for (int epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0, ddpm_sum = 0.0, rec_sum = 0.0, ce_sum = 0.0;
    int batch_index = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(train_config.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(train_config.batch_size));
      std::vector<TrainingExample> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        batch.push_back(examples[static_cast<size_t>(order[i])]);
      }
      try {
        nn::Graph g;
        nn::BoundParams bound = nn::bind_params(g, result.model.params, true);
        LossBreakdown bd;
        nn::Tensor loss = total_loss(g, bound, model_config, result.model.schedule, batch, weights,
                                     sample_rng, dropout_rng, &bd);
        g.backward(loss);
        opt.step(result.model.params, nn::collect_grads(bound));
        const double n = static_cast<double>(batch.size());
        loss_sum += bd.total * n;
        ddpm_sum += bd.ddpm * n;
        rec_sum += bd.rec * n;
        ce_sum += bd.ce * n;
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::numeric) {
          fail_numeric("epoch " + std::to_string(epoch) + " batch " +
                       std::to_string(batch_index) + ": " + e.what());
        }
        throw;
      }
      ++batch_index;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double n_train = static_cast<double>(order.size());
    rec.loss = loss_sum / n_train;
    rec.ddpm = ddpm_sum / n_train;
    rec.rec = rec_sum / n_train;
    rec.ce = ce_sum / n_train;
    rec.train_acc = evaluate_accuracy(result.model, examples, result.split.train);
    rec.val_acc = evaluate_accuracy(result.model, examples, result.split.val);
    rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                 .count();
    result.history.epochs.push_back(rec);

    if (auto stop = early_stop_check(rec.train_acc, rec.val_acc, train_config)) {
      result.history.stop_reason = *stop;
      break;
    }
  }
  return result;
}

}  // namespace bci
