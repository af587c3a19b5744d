#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"
#include "pipeline.hpp"
#include "stream.hpp"

namespace bci {

// Fixed-capacity circular sample store indexed by absolute sample position.
// Any window fully inside the last `capacity` written samples reads exactly.
class RingBuffer {
 public:
  RingBuffer(int channels, int64_t capacity);

  void push(const double* chunk, int channels, int n);
  uint64_t write_index() const { return write_index_; }

  // Copies [start, start + len) into out, channel-major; fails when the window
  // is not yet written or already evicted.
  void read(uint64_t start, int len, double* out) const;

  int channels() const { return channels_; }
  int64_t capacity() const { return capacity_; }

 private:
  int channels_;
  int64_t capacity_;
  uint64_t write_index_ = 0;
  std::vector<double> storage_;  // [channel][capacity], circular
};

enum class Phase { cue, imagery, decode, feedback, rest };
const char* to_string(Phase p);

struct TrialEvent {
  int trial_index = -1;  // -1 for rest events
  Phase phase = Phase::cue;
  uint64_t onset_sample = 0;
  double duration_s = 0.0;
  int cue_label = -1;              // cue events
  int predicted_label = -1;        // feedback events (-1 when dropped)
  double feedback_intensity = 0.0; // feedback events
};

struct Prediction {
  std::vector<double> probabilities;
  std::vector<int> ranked;  // descending probability, ties toward lower index
  int top1 = -1;
  double confidence = 0.0;
  double feedback_intensity = 0.0;
  double decode_latency_ms = 0.0;
};

// clamp((max_prob - 1/K) / (1 - 1/K), 0, 1): chance -> 0, certainty -> 1.
double feedback_intensity(std::span<const double> probabilities);

// Baseline-correct + re-reference the already-filtered window ending at the
// imagery offset, then run the single-pass decoder. Wall-clock latency is
// measured around the whole decode.
Prediction decode_latest(const RingBuffer& buffer, uint64_t onset_index, const Model& model,
                         int baseline_samples, double fs, double tau_infer = 0.5);

struct TrialRow {
  int trial_index = 0;
  int cued = -1;
  bool dropped = false;
  Prediction prediction;
  bool correct1 = false;
  bool correct2 = false;
};

struct LatencyStats {
  double mean_ms = 0.0, p50_ms = 0.0, p95_ms = 0.0;
};

struct SessionReport {
  int n_classes = 0;
  std::vector<TrialRow> rows;
  // aggregates (recomputable from rows)
  double top1 = 0.0, top2 = 0.0;
  std::vector<double> per_class_top1;
  std::vector<int64_t> confusion;  // over non-dropped rows
  LatencyStats latency;
  int dropped = 0;

  void recompute();
  bool aggregates_consistent(double tol = 1e-12) const;
};

// One row per trial, then aggregate lines. Latency columns are wall-clock and
// excluded from determinism comparisons.
std::string report_csv(const SessionReport& report, std::span<const std::string> class_names);

struct SessionConfig {
  int n_trials = 20;
  uint64_t seed = 42;
  double fs = 500.0;
  double baseline_s = 0.2;
  double cue_s = 2.0, imagery_s = 2.0, decode_s = 2.0, feedback_s = 3.0, rest_s = 10.0;
  int rest_every = 20;
  double ring_capacity_s = 30.0;
  double tau_infer = 0.5;
  // Wall-clock mode: a decode slower than the decode phase drops the trial.
  // In sample-driven replay the budget is reported but never enforced.
  bool enforce_wall_budget = false;
  PreprocessConfig preprocess;
};

using EventSink = std::function<void(const TrialEvent&)>;
using PredictionSink = std::function<void(int trial_index, const Prediction&)>;

// Closed-loop consumer: ingests frames (streaming filters applied on ingest,
// state reset at each trial marker), schedules cue/imagery/decode/feedback by
// sample count, decodes each trial once its window is buffered, and emits
// events and predictions. Source underrun marks the affected trials dropped.
SessionReport run_session(const Model& model, FrameSource& source, const SessionConfig& config,
                          const EventSink& on_event = {}, const PredictionSink& on_prediction = {});

// Checks the emitted event stream: per trial cue -> imagery -> decode ->
// feedback in order with monotone onsets, a rest event after every
// `rest_every` completed trials, and exactly n_trials trials.
bool validate_event_sequence(std::span<const TrialEvent> events, int n_trials, int rest_every,
                             std::string* why = nullptr);

struct BenchmarkStats {
  int n = 0;
  double mean_ms = 0.0, p50_ms = 0.0, p95_ms = 0.0;
  double first_ms = 0.0;  // cold call, reported separately
};

// Repeated evaluation-mode decodes of random windows.
BenchmarkStats latency_benchmark(const Model& model, int n_windows, uint64_t seed = 0);

}  // namespace bci
