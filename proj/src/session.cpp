#include "session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>

#include "errors.hpp"
#include "metrics.hpp"

namespace bci {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double percentile_nearest_rank(std::vector<double> sorted_values, double q) {
  const size_t n = sorted_values.size();
  if (n == 0) return 0.0;
  const size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(n)));
  return sorted_values[std::min(n - 1, rank == 0 ? 0 : rank - 1)];
}

}  // namespace

RingBuffer::RingBuffer(int channels, int64_t capacity)
    : channels_(channels), capacity_(capacity) {
  if (channels < 1 || capacity < 1) fail_usage("RingBuffer: bad geometry");
  storage_.assign(static_cast<size_t>(channels) * capacity, 0.0);
}

void RingBuffer::push(const double* chunk, int channels, int n) {
  if (channels != channels_) fail_data("RingBuffer: chunk channel count mismatch");
  if (n < 0) fail_usage("RingBuffer: negative chunk length");
  for (int c = 0; c < channels_; ++c) {
    double* row = storage_.data() + static_cast<size_t>(c) * capacity_;
    const double* src = chunk + static_cast<size_t>(c) * n;
    for (int i = 0; i < n; ++i) {
      row[(write_index_ + static_cast<uint64_t>(i)) % static_cast<uint64_t>(capacity_)] = src[i];
    }
  }
  write_index_ += static_cast<uint64_t>(n);
}

void RingBuffer::read(uint64_t start, int len, double* out) const {
  if (len < 1) fail_usage("RingBuffer: window length must be positive");
  if (start + static_cast<uint64_t>(len) > write_index_) {
    fail_data("RingBuffer: window not yet written");
  }
  if (write_index_ > static_cast<uint64_t>(capacity_) &&
      start < write_index_ - static_cast<uint64_t>(capacity_)) {
    fail_data("RingBuffer: window evicted");
  }
  for (int c = 0; c < channels_; ++c) {
    const double* row = storage_.data() + static_cast<size_t>(c) * capacity_;
    double* dst = out + static_cast<size_t>(c) * len;
    for (int i = 0; i < len; ++i) {
      dst[i] = row[(start + static_cast<uint64_t>(i)) % static_cast<uint64_t>(capacity_)];
    }
  }
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::cue: return "cue";
    case Phase::imagery: return "imagery";
    case Phase::decode: return "decode";
    case Phase::feedback: return "feedback";
    case Phase::rest: return "rest";
  }
  return "unknown";
}

double feedback_intensity(std::span<const double> probabilities) {
  if (probabilities.empty()) fail_usage("feedback_intensity: empty probabilities");
  double sum = 0.0, mx = 0.0;
  for (double p : probabilities) {
    if (p < -1e-9 || p > 1.0 + 1e-9) fail_usage("feedback_intensity: not a probability vector");
    sum += p;
    mx = std::max(mx, p);
  }
  if (std::fabs(sum - 1.0) > 1e-6) fail_usage("feedback_intensity: probabilities must sum to 1");
  const double chance = 1.0 / static_cast<double>(probabilities.size());
  return std::clamp((mx - chance) / (1.0 - chance), 0.0, 1.0);
}

Prediction decode_latest(const RingBuffer& buffer, uint64_t onset_index, const Model& model,
                         int baseline_samples, double fs, double tau_infer) {
  const auto t0 = Clock::now();
  const int c = model.config.channels_in;
  const int len = model.config.length_in;
  if (baseline_samples < 1) fail_usage("decode_latest: baseline window must be non-empty");
  if (onset_index < static_cast<uint64_t>(baseline_samples)) {
    fail_data("decode_latest: insufficient buffered data");
  }
  EegEpoch e;
  e.channels = c;
  e.samples = baseline_samples + len;
  e.fs = fs;
  e.onset_index = baseline_samples;
  e.data.resize(static_cast<size_t>(c) * e.samples);
  buffer.read(onset_index - static_cast<uint64_t>(baseline_samples), e.samples, e.data.data());
  dsp::baseline_correct(e, baseline_samples);
  dsp::common_average_reference(e.data.data(), c, e.samples);
  const std::vector<double> window = imagery_window(e);

  Prediction p;
  p.probabilities = infer_window(model, window, tau_infer);
  p.ranked = ranked_classes(p.probabilities);
  p.top1 = p.ranked[0];
  p.confidence = p.probabilities[static_cast<size_t>(p.top1)];
  p.feedback_intensity = feedback_intensity(p.probabilities);
  p.decode_latency_ms = ms_since(t0);
  return p;
}

void SessionReport::recompute() {
  const int k = n_classes;
  dropped = 0;
  int64_t hit1 = 0, hit2 = 0;
  std::vector<int64_t> class_total(static_cast<size_t>(k), 0);
  std::vector<int64_t> class_hit(static_cast<size_t>(k), 0);
  std::vector<int> truth, pred;
  std::vector<double> lat;
  for (const TrialRow& r : rows) {
    if (r.cued < 0 || r.cued >= k) fail_data("SessionReport: cued class out of range");
    ++class_total[static_cast<size_t>(r.cued)];
    if (r.dropped) {
      ++dropped;
      continue;
    }
    hit1 += r.correct1 ? 1 : 0;
    hit2 += r.correct2 ? 1 : 0;
    class_hit[static_cast<size_t>(r.cued)] += r.correct1 ? 1 : 0;
    truth.push_back(r.cued);
    pred.push_back(r.prediction.top1);
    lat.push_back(r.prediction.decode_latency_ms);
  }
  const double n = static_cast<double>(rows.empty() ? 1 : rows.size());
  top1 = static_cast<double>(hit1) / n;
  top2 = static_cast<double>(hit2) / n;
  per_class_top1.assign(static_cast<size_t>(k), 0.0);
  for (int i = 0; i < k; ++i) {
    if (class_total[static_cast<size_t>(i)] > 0) {
      per_class_top1[static_cast<size_t>(i)] =
          static_cast<double>(class_hit[static_cast<size_t>(i)]) /
          static_cast<double>(class_total[static_cast<size_t>(i)]);
    }
  }
  confusion = truth.empty() ? std::vector<int64_t>(static_cast<size_t>(k) * k, 0)
                            : confusion_matrix(truth, pred, k);
  std::sort(lat.begin(), lat.end());
  latency.mean_ms = 0.0;
  for (double v : lat) latency.mean_ms += v;
  if (!lat.empty()) latency.mean_ms /= static_cast<double>(lat.size());
  latency.p50_ms = percentile_nearest_rank(lat, 0.50);
  latency.p95_ms = percentile_nearest_rank(lat, 0.95);
}

bool SessionReport::aggregates_consistent(double tol) const {
  SessionReport copy = *this;
  copy.recompute();
  if (copy.dropped != dropped || copy.confusion != confusion) return false;
  if (std::fabs(copy.top1 - top1) > tol || std::fabs(copy.top2 - top2) > tol) return false;
  for (size_t i = 0; i < per_class_top1.size(); ++i) {
    if (std::fabs(copy.per_class_top1[i] - per_class_top1[i]) > tol) return false;
  }
  return std::fabs(copy.latency.mean_ms - latency.mean_ms) <= tol &&
         std::fabs(copy.latency.p50_ms - latency.p50_ms) <= tol &&
         std::fabs(copy.latency.p95_ms - latency.p95_ms) <= tol;
}

std::string report_csv(const SessionReport& report, std::span<const std::string> class_names) {
  if (static_cast<int>(class_names.size()) != report.n_classes) {
    fail_usage("report_csv: class name count mismatch");
  }
  std::string out = "trial,cued,predicted,correct1,correct2,confidence,intensity,dropped";
  for (int i = 0; i < report.n_classes; ++i) out += ",p" + std::to_string(i);
  out += ",latency_ms\n";
  char buf[128];
  for (const TrialRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%d,%.6f,%.6f,%d", r.trial_index, r.cued,
                  r.dropped ? -1 : r.prediction.top1, r.correct1 ? 1 : 0, r.correct2 ? 1 : 0,
                  r.dropped ? 0.0 : r.prediction.confidence,
                  r.dropped ? 0.0 : r.prediction.feedback_intensity, r.dropped ? 1 : 0);
    out += buf;
    for (int i = 0; i < report.n_classes; ++i) {
      const double p =
          r.dropped ? 0.0 : r.prediction.probabilities[static_cast<size_t>(i)];
      std::snprintf(buf, sizeof(buf), ",%.9f", p);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.3f\n", r.dropped ? 0.0 : r.prediction.decode_latency_ms);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "aggregate,top1,%.6f\n", report.top1);
  out += buf;
  std::snprintf(buf, sizeof(buf), "aggregate,top2,%.6f\n", report.top2);
  out += buf;
  for (int i = 0; i < report.n_classes; ++i) {
    std::snprintf(buf, sizeof(buf), "perclass,%s,top1,%.6f\n",
                  class_names[static_cast<size_t>(i)].c_str(),
                  report.per_class_top1[static_cast<size_t>(i)]);
    out += buf;
  }
  for (int i = 0; i < report.n_classes; ++i) {
    out += "confusion," + class_names[static_cast<size_t>(i)];
    for (int j = 0; j < report.n_classes; ++j) {
      out += "," +
             std::to_string(report.confusion[static_cast<size_t>(i) * report.n_classes + j]);
    }
    out += "\n";
  }
  std::snprintf(buf, sizeof(buf), "aggregate,dropped,%d\n", report.dropped);
  out += buf;
  std::snprintf(buf, sizeof(buf), "aggregate,latency_mean_ms,%.3f\n", report.latency.mean_ms);
  out += buf;
  std::snprintf(buf, sizeof(buf), "aggregate,latency_p50_ms,%.3f\n", report.latency.p50_ms);
  out += buf;
  std::snprintf(buf, sizeof(buf), "aggregate,latency_p95_ms,%.3f\n", report.latency.p95_ms);
  out += buf;
  return out;
}

SessionReport run_session(const Model& model, FrameSource& source, const SessionConfig& config,
                          const EventSink& on_event, const PredictionSink& on_prediction) {
  model.config.validate();
  if (config.n_trials < 1) fail_usage("run_session: n_trials must be positive");
  const double fs = config.fs;
  const int channels = model.config.channels_in;
  const int64_t cue_n = std::llround(config.cue_s * fs);
  const int64_t imagery_n = std::llround(config.imagery_s * fs);
  const int64_t decode_n = std::llround(config.decode_s * fs);
  const int64_t feedback_n = std::llround(config.feedback_s * fs);
  const int baseline_n = static_cast<int>(std::lround(config.baseline_s * fs));
  const int64_t capacity = std::llround(config.ring_capacity_s * fs);

  RingBuffer ring(channels, capacity);
  dsp::BiquadCascade lp = dsp::design_butterworth_lowpass(config.preprocess.butter_order,
                                                          config.preprocess.lowpass_hz, fs);
  dsp::BiquadCascade notch =
      dsp::design_notch(config.preprocess.notch_hz, config.preprocess.notch_q, fs);
  lp.init_state(channels);
  notch.init_state(channels);

  struct Pending {
    int index;
    int label;
    uint64_t cue_onset;
  };
  std::deque<Pending> pending;

  SessionReport report;
  report.n_classes = model.config.n_classes;
  int started = 0;
  int completed = 0;

  auto emit = [&](const TrialEvent& ev) {
    if (on_event) on_event(ev);
  };
  auto finish_trial = [&](const Pending& t, Prediction pred, bool dropped) {
    const uint64_t imagery_on = t.cue_onset + static_cast<uint64_t>(cue_n);
    const uint64_t decode_on = imagery_on + static_cast<uint64_t>(imagery_n);
    const uint64_t feedback_on = decode_on + static_cast<uint64_t>(decode_n);
    emit({t.index, Phase::cue, t.cue_onset, config.cue_s, t.label, -1, 0.0});
    emit({t.index, Phase::imagery, imagery_on, config.imagery_s, -1, -1, 0.0});
    emit({t.index, Phase::decode, decode_on, config.decode_s, -1, -1, 0.0});
    TrialEvent fb{t.index, Phase::feedback, feedback_on, config.feedback_s, -1, -1, 0.0};
    if (!dropped) {
      fb.predicted_label = pred.top1;
      fb.feedback_intensity = pred.feedback_intensity;
    }
    emit(fb);
    if (!dropped && on_prediction) on_prediction(t.index, pred);

    TrialRow row;
    row.trial_index = t.index;
    row.cued = t.label;
    row.dropped = dropped;
    if (!dropped) {
      row.correct1 = pred.ranked[0] == t.label;
      row.correct2 = pred.ranked[0] == t.label || pred.ranked[1] == t.label;
      row.prediction = std::move(pred);
    }
    report.rows.push_back(std::move(row));
    ++completed;
    if (config.rest_every > 0 && completed % config.rest_every == 0) {
      emit({-1, Phase::rest, feedback_on + static_cast<uint64_t>(feedback_n), config.rest_s, -1,
            -1, 0.0});
    }
  };

  bool have_origin = false;
  uint64_t expect = 0;
  uint64_t last_marker = 0;
  std::vector<double> chunk;
  while (completed < config.n_trials) {
    std::optional<Frame> f = source.next();
    if (!f) break;
    if (f->type == Frame::Type::marker) {
      if ((have_origin && f->first_sample_index < expect) ||
          f->first_sample_index < last_marker) {
        fail_data("run_session: non-monotone marker index");
      }
      last_marker = f->first_sample_index;
      if (f->label >= model.config.n_classes) fail_data("run_session: marker label out of range");
      if (started < config.n_trials) {
        pending.push_back({started++, f->label, f->first_sample_index});
        // Trial records are filtered from zero state, matching the offline
        // per-record chain exactly.
        lp.reset();
        notch.reset();
      }
      continue;
    }
    if (f->channels != channels) fail_data("run_session: data frame channel mismatch");
    if (!have_origin) {
      expect = f->first_sample_index;
      have_origin = true;
    }
    if (f->first_sample_index != expect) {
      fail_data("run_session: non-contiguous sample index");
    }
    const int n = f->n_samples;
    chunk.resize(static_cast<size_t>(channels) * n);
    for (size_t i = 0; i < chunk.size(); ++i) chunk[i] = static_cast<double>(f->samples[i]);
    lp.process(chunk.data(), channels, n);
    notch.process(chunk.data(), channels, n);
    ring.push(chunk.data(), channels, n);
    expect += static_cast<uint64_t>(n);

    while (!pending.empty() && completed < config.n_trials) {
      const Pending& t = pending.front();
      const uint64_t imagery_on = t.cue_onset + static_cast<uint64_t>(cue_n);
      const uint64_t window_end = imagery_on + static_cast<uint64_t>(model.config.length_in);
      if (ring.write_index() < window_end) break;
      Prediction pred =
          decode_latest(ring, imagery_on, model, baseline_n, fs, config.tau_infer);
      const bool overrun =
          config.enforce_wall_budget && pred.decode_latency_ms > config.decode_s * 1000.0;
      finish_trial(t, std::move(pred), overrun);
      pending.pop_front();
    }
  }
  // Source exhausted: any started trial without a complete window is dropped.
  while (!pending.empty() && completed < config.n_trials) {
    finish_trial(pending.front(), Prediction{}, true);
    pending.pop_front();
  }
  report.recompute();
  return report;
}

bool validate_event_sequence(std::span<const TrialEvent> events, int n_trials, int rest_every,
                             std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  size_t i = 0;
  uint64_t last_onset = 0;
  const Phase order[4] = {Phase::cue, Phase::imagery, Phase::decode, Phase::feedback};
  for (int t = 0; t < n_trials; ++t) {
    for (Phase p : order) {
      if (i >= events.size()) return fail("missing events for trial " + std::to_string(t));
      const TrialEvent& ev = events[i++];
      if (ev.trial_index != t || ev.phase != p) {
        return fail("unexpected event at position " + std::to_string(i - 1) + " (trial " +
                    std::to_string(ev.trial_index) + " phase " + to_string(ev.phase) + ")");
      }
      if (ev.onset_sample < last_onset) return fail("event onsets are not monotone");
      last_onset = ev.onset_sample;
    }
    if (rest_every > 0 && (t + 1) % rest_every == 0) {
      if (i >= events.size() || events[i].phase != Phase::rest) {
        return fail("missing rest after trial " + std::to_string(t));
      }
      ++i;
    }
  }
  if (i != events.size()) return fail("trailing events after the final trial");
  return true;
}

BenchmarkStats latency_benchmark(const Model& model, int n_windows, uint64_t seed) {
  if (n_windows < 1) fail_usage("latency_benchmark: need at least one window");
  Rng rng(seed);
  const size_t len = static_cast<size_t>(model.config.channels_in) * model.config.length_in;
  std::vector<double> window(len);
  auto randomize = [&] {
    for (double& v : window) v = rng.normal();
  };

  BenchmarkStats stats;
  stats.n = n_windows;
  randomize();
  auto t0 = Clock::now();
  infer_window(model, window);
  stats.first_ms = ms_since(t0);

  std::vector<double> times(static_cast<size_t>(n_windows));
  for (int i = 0; i < n_windows; ++i) {
    randomize();
    t0 = Clock::now();
    infer_window(model, window);
    times[static_cast<size_t>(i)] = ms_since(t0);
  }
  for (double v : times) stats.mean_ms += v;
  stats.mean_ms /= static_cast<double>(n_windows);
  std::sort(times.begin(), times.end());
  stats.p50_ms = percentile_nearest_rank(times, 0.50);
  stats.p95_ms = percentile_nearest_rank(times, 0.95);
  return stats;
}

}  // namespace bci
