#pragma once

#include <cstdint>
#include <vector>

#include "dataset.hpp"
#include "rng.hpp"

namespace bci {

// One injected rhythm: a sinusoid at freq_hz on channels [ch_lo, ch_hi),
// amplitude scaled by the global snr factor, phase drawn once per trial.
struct Signature {
  double freq_hz = 0.0;
  int ch_lo = 0;
  int ch_hi = 0;  // exclusive
  double amplitude = 0.0;
};

struct SynthConfig {
  int channels = 64;
  double fs = 500.0;
  double baseline_s = 0.2;
  double imagery_s = 2.0;
  int n_classes = 4;
  int trials_per_class = 100;
  std::vector<std::vector<Signature>> signatures;  // per class; resting class empty
  double snr = 1.0;
  double noise_scale = 1.0;    // background noise amplitude (0 disables noise)
  double pink_fraction = 0.5;  // power fraction of pink noise vs white
  uint64_t seed = 42;

  int samples_per_trial() const;
  int baseline_samples() const;
  void validate() const;

  // 10 Hz on channels 0-15, 22 Hz on 16-31, 35 Hz on 32-47, resting empty.
  static SynthConfig defaults();
};

// Unit-variance 1/f noise (Voss-McCartney: 16 octave-held rows plus a white
// row, normalized by sqrt(17)).
std::vector<double> pink_noise(int n, Rng& rng);

// One trial of class k. The rng argument owns all of the trial's randomness,
// so a trial is a pure function of (config, k, rng state).
EegEpoch generate_trial(int k, const SynthConfig& config, Rng& rng);

// trials_per_class * n_classes trials in seed-shuffled class order; trial i
// draws its randomness from stream (seed, i).
Dataset generate_dataset(const SynthConfig& config);

}  // namespace bci
