#include "synth.hpp"

#include <bit>
#include <cmath>

#include "errors.hpp"

namespace bci {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr int kPinkRows = 12;
}  // namespace

int SynthConfig::samples_per_trial() const {
  return static_cast<int>(std::lround((baseline_s + imagery_s) * fs));
}

int SynthConfig::baseline_samples() const {
  return static_cast<int>(std::lround(baseline_s * fs));
}

void SynthConfig::validate() const {
  if (channels < 1 || fs <= 0.0) fail_usage("SynthConfig: bad geometry");
  if (n_classes < 2) fail_usage("SynthConfig: need at least two classes");
  if (trials_per_class < 1) fail_usage("SynthConfig: trials_per_class must be positive");
  if (static_cast<int>(signatures.size()) != n_classes) {
    fail_usage("SynthConfig: one signature list per class required");
  }
  if (!signatures.back().empty()) {
    fail_usage("SynthConfig: resting class (last index) must have no signatures");
  }
  for (const auto& cls : signatures) {
    for (const Signature& sig : cls) {
      if (sig.freq_hz <= 0.0 || sig.freq_hz >= fs / 2.0) {
        fail_usage("SynthConfig: signature frequency outside (0, Nyquist)");
      }
      if (sig.ch_lo < 0 || sig.ch_hi > channels || sig.ch_lo >= sig.ch_hi) {
        fail_usage("SynthConfig: signature channel range invalid");
      }
    }
  }
  if (pink_fraction < 0.0 || pink_fraction > 1.0) {
    fail_usage("SynthConfig: pink_fraction must be in [0, 1]");
  }
  if (noise_scale < 0.0) fail_usage("SynthConfig: noise_scale must be non-negative");
}

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.signatures = {
      {{10.0, 0, 16, 10.0}},
      {{22.0, 16, 32, 10.0}},
      {{35.0, 32, 48, 10.0}},
      {},
  };
  return c;
}

std::vector<double> pink_noise(int n, Rng& rng) {
  if (n < 1) fail_usage("pink_noise: n must be positive");
  double rows[kPinkRows];
  double row_sum = 0.0;
  for (double& r : rows) {
    r = rng.normal();
    row_sum += r;
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(kPinkRows + 1));
  std::vector<double> out(static_cast<size_t>(n));
  uint64_t counter = 1;
  for (int i = 0; i < n; ++i, ++counter) {
    int k = std::countr_zero(counter);
    if (k >= kPinkRows) k = kPinkRows - 1;
    row_sum -= rows[k];
    rows[k] = rng.normal();
    row_sum += rows[k];
    out[static_cast<size_t>(i)] = (row_sum + rng.normal()) * norm;
  }
  return out;
}

EegEpoch generate_trial(int k, const SynthConfig& config, Rng& rng) {
  config.validate();
  if (k < 0 || k >= config.n_classes) fail_usage("generate_trial: invalid class");
  const int n = config.samples_per_trial();
  EegEpoch e;
  e.channels = config.channels;
  e.samples = n;
  e.fs = config.fs;
  e.label = k;
  e.onset_index = config.baseline_samples();
  e.data.resize(static_cast<size_t>(config.channels) * n);

  const double pink_amp = config.noise_scale * std::sqrt(config.pink_fraction);
  const double white_amp = config.noise_scale * std::sqrt(1.0 - config.pink_fraction);
  for (int c = 0; c < config.channels; ++c) {
    std::vector<double> pink = pink_noise(n, rng);
    double* row = e.channel(c);
    for (int i = 0; i < n; ++i) {
      row[i] = pink_amp * pink[static_cast<size_t>(i)] + white_amp * rng.normal();
    }
  }
  for (const Signature& sig : config.signatures[static_cast<size_t>(k)]) {
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double w = 2.0 * kPi * sig.freq_hz / config.fs;
    const double amp = config.snr * sig.amplitude;
    for (int c = sig.ch_lo; c < sig.ch_hi; ++c) {
      double* row = e.channel(c);
      for (int i = 0; i < n; ++i) row[i] += amp * std::sin(w * i + phase);
    }
  }
  return e;
}

Dataset generate_dataset(const SynthConfig& config) {
  config.validate();
  std::vector<int> labels;
  labels.reserve(static_cast<size_t>(config.n_classes) * config.trials_per_class);
  for (int k = 0; k < config.n_classes; ++k) {
    labels.insert(labels.end(), static_cast<size_t>(config.trials_per_class), k);
  }
  Rng order_rng = Rng(config.seed).stream(0);
  order_rng.shuffle(labels);

  Dataset ds;
  ds.channels = config.channels;
  ds.fs = config.fs;
  ds.n_classes = config.n_classes;
  ds.samples_per_trial = config.samples_per_trial();
  ds.baseline_samples = config.baseline_samples();
  ds.trials.reserve(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    Rng trial_rng = Rng(config.seed).stream(1 + i);
    ds.trials.push_back(generate_trial(labels[i], config, trial_rng));
  }
  return ds;
}

}  // namespace bci
