#include "bci.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "session.hpp"
#include "stream.hpp"
#include "synth.hpp"
#include "train.hpp"

using namespace bci;

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

bci_status map_kind(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return BCI_E_USAGE;
    case ErrorKind::data: return BCI_E_DATA;
    case ErrorKind::numeric: return BCI_E_NUMERIC;
  }
  return BCI_E_INTERNAL;
}

template <typename F>
bci_status guarded(F&& f) {
  try {
    f();
    return BCI_OK;
  } catch (const Error& e) {
    set_error(e.what());
    return map_kind(e.kind());
  } catch (const std::exception& e) {
    set_error(e.what());
    return BCI_E_INTERNAL;
  }
}

[[noreturn]] void require_failed(const char* what) {
  fail_usage(std::string(what) + " must not be null");
}

template <typename T>
T* require(T* p, const char* what) {
  if (p == nullptr) require_failed(what);
  return p;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::string> generic_class_names(int k);

}  // namespace

struct bci_dataset {
  Dataset data;
  std::string fingerprint;
};

struct bci_model {
  Model model;
  TrainConfig train_config;
  TrainHistory history;
  bool trained = false;  // history/stop_reason only exist for in-process training
  std::string dataset_fingerprint;
};

struct bci_session_report {
  SessionReport report;
  int n_classes = 0;
};

extern "C" {

const char* bci_version(void) { return "0.1.0"; }

const char* bci_last_error(void) { return g_last_error.c_str(); }

void bci_string_free(char* s) { std::free(s); }

void bci_synth_params_init(bci_synth_params* p) {
  if (!p) return;
  p->channels = 64;
  p->fs_hz = 500.0;
  p->trials_per_class = 100;
  p->snr = 1.0;
  p->seed = 42;
}

bci_status bci_dataset_synth(const bci_synth_params* p, bci_dataset** out) {
  return guarded([&] {
    require(p, "params");
    require(out, "out");
    SynthConfig cfg = SynthConfig::defaults();
    cfg.channels = static_cast<int>(p->channels);
    cfg.fs = p->fs_hz;
    cfg.trials_per_class = static_cast<int>(p->trials_per_class);
    cfg.snr = p->snr;
    cfg.seed = p->seed;
    // default signatures assume the full 64-channel montage; clamp ranges to the
    // requested channel count
    for (auto& cls : cfg.signatures) {
      for (auto& sig : cls) {
        sig.ch_lo = std::min(sig.ch_lo, cfg.channels - 1);
        sig.ch_hi = std::min(sig.ch_hi, cfg.channels);
      }
    }
    auto* handle = new bci_dataset{generate_dataset(cfg), ""};
    const std::vector<uint8_t> bytes = encode_bcie(handle->data);
    handle->fingerprint = fingerprint_bytes(bytes.data(), bytes.size());
    *out = handle;
  });
}

bci_status bci_dataset_load(const char* path, bci_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto* handle = new bci_dataset{load_bcie(path), file_fingerprint(path)};
    *out = handle;
  });
}

bci_status bci_dataset_save(const bci_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds, "dataset");
    require(path, "path");
    save_bcie(ds->data, path);
  });
}

void bci_dataset_free(bci_dataset* ds) { delete ds; }

bci_status bci_dataset_info(const bci_dataset* ds, uint32_t* channels, double* fs_hz,
                            uint32_t* n_classes, uint32_t* n_trials,
                            uint32_t* samples_per_trial, uint32_t* baseline_samples) {
  return guarded([&] {
    require(ds, "dataset");
    if (channels) *channels = static_cast<uint32_t>(ds->data.channels);
    if (fs_hz) *fs_hz = ds->data.fs;
    if (n_classes) *n_classes = static_cast<uint32_t>(ds->data.n_classes);
    if (n_trials) *n_trials = static_cast<uint32_t>(ds->data.trials.size());
    if (samples_per_trial) *samples_per_trial = static_cast<uint32_t>(ds->data.samples_per_trial);
    if (baseline_samples) *baseline_samples = static_cast<uint32_t>(ds->data.baseline_samples);
  });
}

bci_status bci_dataset_class_counts(const bci_dataset* ds, uint32_t* counts, uint32_t len) {
  return guarded([&] {
    require(ds, "dataset");
    require(counts, "counts");
    const std::vector<int> c = ds->data.class_counts();
    if (len < c.size()) fail_usage("class_counts: buffer too small");
    for (size_t i = 0; i < c.size(); ++i) counts[i] = static_cast<uint32_t>(c[i]);
  });
}

void bci_train_params_init(bci_train_params* p) {
  if (!p) return;
  const TrainConfig d;
  p->base_width = 8;
  p->batch_size = static_cast<uint32_t>(d.batch_size);
  p->max_epochs = static_cast<uint32_t>(d.max_epochs);
  p->seed = d.seed;
  p->lr = d.lr;
  p->val_fraction = d.val_fraction;
  p->w_ddpm = d.w_ddpm;
  p->w_rec = d.w_rec;
  p->w_ce = d.w_ce;
}

namespace {

ModelConfig model_config_for(const Dataset& ds, uint32_t base_width) {
  ModelConfig mc;
  mc.channels_in = ds.channels;
  mc.length_in = ds.samples_per_trial - ds.baseline_samples;
  mc.base_width = static_cast<int>(base_width);
  mc.n_classes = ds.n_classes;
  return mc;
}

void check_compatible(const Model& m, const Dataset& ds) {
  if (m.config.channels_in != ds.channels ||
      m.config.length_in != ds.samples_per_trial - ds.baseline_samples ||
      m.config.n_classes != ds.n_classes) {
    fail_data("config mismatch between checkpoint and dataset");
  }
}

}  // namespace

bci_status bci_model_train(const bci_dataset* ds, const bci_train_params* p, bci_model** out) {
  return guarded([&] {
    require(ds, "dataset");
    require(p, "params");
    require(out, "out");
    TrainConfig tc;
    tc.batch_size = static_cast<int>(p->batch_size);
    tc.max_epochs = static_cast<int>(p->max_epochs);
    tc.seed = p->seed;
    tc.lr = p->lr;
    tc.val_fraction = p->val_fraction;
    tc.w_ddpm = p->w_ddpm;
    tc.w_rec = p->w_rec;
    tc.w_ce = p->w_ce;
    const ModelConfig mc = model_config_for(ds->data, p->base_width);
    const std::vector<TrainingExample> examples = preprocess_dataset(ds->data, {});
    TrainResult r = train(examples, mc, tc);
    auto* handle = new bci_model;
    handle->model = std::move(r.model);
    handle->train_config = tc;
    handle->history = std::move(r.history);
    handle->trained = true;
    handle->dataset_fingerprint = ds->fingerprint;
    *out = handle;
  });
}

bci_status bci_model_load(const char* path, bci_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    Checkpoint ckpt = load_checkpoint(path);
    auto* handle = new bci_model;
    handle->model = to_model(ckpt);
    handle->train_config = ckpt.train_config;
    handle->trained = false;
    handle->dataset_fingerprint = ckpt.dataset_fingerprint;
    *out = handle;
  });
}

bci_status bci_model_save(const bci_model* m, const char* path) {
  return guarded([&] {
    require(m, "model");
    require(path, "path");
    save_checkpoint(path, m->model, m->train_config, m->dataset_fingerprint);
  });
}

void bci_model_free(bci_model* m) { delete m; }

bci_status bci_model_param_count(const bci_model* m, uint64_t* count) {
  return guarded([&] {
    require(m, "model");
    require(count, "count");
    *count = static_cast<uint64_t>(m->model.params.total_size());
  });
}

bci_status bci_model_classes(const bci_model* m, uint32_t* n_classes) {
  return guarded([&] {
    require(m, "model");
    require(n_classes, "n_classes");
    *n_classes = static_cast<uint32_t>(m->model.config.n_classes);
  });
}

bci_status bci_model_stop_reason(const bci_model* m, char** reason) {
  return guarded([&] {
    require(m, "model");
    require(reason, "reason");
    *reason = dup_string(m->trained ? to_string(m->history.stop_reason) : "");
  });
}

bci_status bci_model_history_csv(const bci_model* m, char** csv) {
  return guarded([&] {
    require(m, "model");
    require(csv, "csv");
    *csv = dup_string(history_csv(m->history));
  });
}

bci_status bci_model_evaluate(const bci_model* m, const bci_dataset* ds, uint32_t topk,
                              double* topk_overall, double* topk_per_class, int64_t* confusion) {
  return guarded([&] {
    require(m, "model");
    require(ds, "dataset");
    check_compatible(m->model, ds->data);
    const int k = m->model.config.n_classes;
    if (topk < 1 || static_cast<int>(topk) > k) fail_usage("evaluate: topk out of range");
    const std::vector<TrainingExample> examples = preprocess_dataset(ds->data, {});
    std::vector<int> truth;
    std::vector<std::vector<int>> rankings;
    truth.reserve(examples.size());
    rankings.reserve(examples.size());
    for (const TrainingExample& ex : examples) {
      truth.push_back(ex.label);
      rankings.push_back(ranked_classes(infer_window(m->model, ex.window)));
    }
    if (topk_overall) {
      for (uint32_t kk = 1; kk <= topk; ++kk) {
        topk_overall[kk - 1] = topk_accuracy(rankings, truth, static_cast<int>(kk));
      }
    }
    if (topk_per_class) {
      for (int cls = 0; cls < k; ++cls) {
        std::vector<int> cls_truth;
        std::vector<std::vector<int>> cls_ranks;
        for (size_t i = 0; i < truth.size(); ++i) {
          if (truth[i] == cls) {
            cls_truth.push_back(truth[i]);
            cls_ranks.push_back(rankings[i]);
          }
        }
        for (uint32_t kk = 1; kk <= topk; ++kk) {
          topk_per_class[static_cast<size_t>(cls) * topk + (kk - 1)] =
              cls_truth.empty() ? 0.0
                                : topk_accuracy(cls_ranks, cls_truth, static_cast<int>(kk));
        }
      }
    }
    if (confusion) {
      std::vector<int> pred;
      pred.reserve(rankings.size());
      for (const auto& r : rankings) pred.push_back(r[0]);
      const std::vector<int64_t> cm = confusion_matrix(truth, pred, k);
      std::copy(cm.begin(), cm.end(), confusion);
    }
  });
}

void bci_session_params_init(bci_session_params* p) {
  if (!p) return;
  p->n_trials = 20;
  p->seed = 42;
}

bci_status bci_session_replay(const bci_model* m, const bci_dataset* ds,
                              const bci_session_params* p, bci_session_report** out) {
  return guarded([&] {
    require(m, "model");
    require(ds, "dataset");
    require(p, "params");
    require(out, "out");
    check_compatible(m->model, ds->data);
    SessionConfig cfg;
    cfg.n_trials = static_cast<int>(p->n_trials);
    cfg.seed = p->seed;
    cfg.fs = ds->data.fs;
    cfg.baseline_s = ds->data.baseline_samples / ds->data.fs;
    ReplayFrameSource source(ds->data, cfg.n_trials, cfg.seed);
    auto* handle = new bci_session_report;
    handle->report = run_session(m->model, source, cfg);
    handle->n_classes = m->model.config.n_classes;
    *out = handle;
  });
}

bci_status bci_session_tcp(const bci_model* m, const char* host, uint16_t port,
                           const bci_session_params* p, bci_session_report** out) {
  return guarded([&] {
    require(m, "model");
    require(host, "host");
    require(p, "params");
    require(out, "out");
    SessionConfig cfg;
    cfg.n_trials = static_cast<int>(p->n_trials);
    cfg.seed = p->seed;
    // the paradigm fixes a 2 s imagery window, which pins fs to the model
    cfg.fs = m->model.config.length_in / 2.0;
    cfg.baseline_s = 0.2;
    TcpFrameSource source(host, port);
    auto* handle = new bci_session_report;
    handle->report = run_session(m->model, source, cfg);
    handle->n_classes = m->model.config.n_classes;
    *out = handle;
  });
}

void bci_session_report_free(bci_session_report* r) { delete r; }

bci_status bci_session_report_summary(const bci_session_report* r, double* top1, double* top2,
                                      double* latency_mean_ms, double* latency_p95_ms,
                                      uint32_t* dropped, uint32_t* n_rows) {
  return guarded([&] {
    require(r, "report");
    if (top1) *top1 = r->report.top1;
    if (top2) *top2 = r->report.top2;
    if (latency_mean_ms) *latency_mean_ms = r->report.latency.mean_ms;
    if (latency_p95_ms) *latency_p95_ms = r->report.latency.p95_ms;
    if (dropped) *dropped = static_cast<uint32_t>(r->report.dropped);
    if (n_rows) *n_rows = static_cast<uint32_t>(r->report.rows.size());
  });
}

bci_status bci_session_report_trial(const bci_session_report* r, uint32_t row, uint32_t* cued,
                                    int32_t* predicted, double* confidence, double* intensity,
                                    uint32_t* dropped) {
  return guarded([&] {
    require(r, "report");
    if (row >= r->report.rows.size()) fail_usage("report_trial: row out of range");
    const TrialRow& tr = r->report.rows[row];
    if (cued) *cued = static_cast<uint32_t>(tr.cued);
    if (predicted) *predicted = tr.dropped ? -1 : tr.prediction.top1;
    if (confidence) *confidence = tr.dropped ? 0.0 : tr.prediction.confidence;
    if (intensity) *intensity = tr.dropped ? 0.0 : tr.prediction.feedback_intensity;
    if (dropped) *dropped = tr.dropped ? 1 : 0;
  });
}

bci_status bci_session_report_csv(const bci_session_report* r, char** csv) {
  return guarded([&] {
    require(r, "report");
    require(csv, "csv");
    const std::vector<std::string> names = generic_class_names(r->n_classes);
    *csv = dup_string(report_csv(r->report, names));
  });
}

bci_status bci_model_benchmark(const bci_model* m, uint32_t n, uint64_t seed, double* mean_ms,
                               double* p50_ms, double* p95_ms, double* first_ms) {
  return guarded([&] {
    require(m, "model");
    if (n == 0) fail_usage("benchmark: n must be positive");
    const BenchmarkStats stats = latency_benchmark(m->model, static_cast<int>(n), seed);
    if (mean_ms) *mean_ms = stats.mean_ms;
    if (p50_ms) *p50_ms = stats.p50_ms;
    if (p95_ms) *p95_ms = stats.p95_ms;
    if (first_ms) *first_ms = stats.first_ms;
  });
}

}  // extern "C"

namespace {

std::vector<std::string> generic_class_names(int k) {
  if (k == 4) return {"Clock", "Toilet", "Water", "Resting state"};
  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) names.push_back("class" + std::to_string(i));
  return names;
}

}  // namespace
