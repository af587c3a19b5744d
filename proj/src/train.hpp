#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"

namespace bci {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 16;
  int max_epochs = 200;
  double early_stop_train_acc = 0.75;  // stop when exceeded (strict)
  double early_stop_val_acc = 0.40;    // stop when exceeded (strict)
  double val_fraction = 0.2;
  uint64_t seed = 42;
  double w_ddpm = 1.0, w_rec = 1.0, w_ce = 1.0;

  void validate() const;
};

enum class StopReason { train_threshold, val_threshold, max_epochs };
const char* to_string(StopReason r);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0, ddpm = 0.0, rec = 0.0, ce = 0.0;
  double train_acc = 0.0, val_acc = 0.0;
  double ms = 0.0;  // wall clock, excluded from determinism comparisons
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  StopReason stop_reason = StopReason::max_epochs;
};

// "epoch,loss,ddpm,rec,ce,train_acc,val_acc,ms" rows.
std::string history_csv(const TrainHistory& history);

struct SplitIndices {
  std::vector<int> train, val;
};

// Stratified, deterministic split: per class, a seeded shuffle sends
// round(count * val_fraction) trials to validation. Both splits must keep at
// least one trial of every class.
SplitIndices split_dataset(std::span<const int> labels, int n_classes, double val_fraction,
                           uint64_t seed);

// Dual criterion, strict inequalities, train threshold checked first.
std::optional<StopReason> early_stop_check(double train_acc, double val_acc,
                                           const TrainConfig& cfg);

struct TrainResult {
  Model model;
  TrainHistory history;
  SplitIndices split;
};

// Subject-calibration loop: shuffled mini-batches of the joint loss under
// Adam, with accuracies evaluated in inference mode (no labels, no dropout)
// at every epoch end.
TrainResult train(const std::vector<TrainingExample>& examples, const ModelConfig& model_config,
                  const TrainConfig& train_config);

// Top-1 accuracy of evaluation-mode inference over the given examples.
double evaluate_accuracy(const Model& model, std::span<const TrainingExample> examples,
                         std::span<const int> indices);

}  // namespace bci
