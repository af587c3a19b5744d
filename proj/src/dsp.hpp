#pragma once

#include <string>
#include <vector>

#include "dataset.hpp"

namespace bci::dsp {

// One second-order section, feedback coefficients normalized to a0 = 1.
// First-order sections are stored as degenerate biquads (b2 = a2 = 0).
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

// Cascade of biquads with per-channel direct-form-II-transposed state, so a
// signal filtered in arbitrary chunks matches whole-signal filtering bitwise.
class BiquadCascade {
 public:
  BiquadCascade() = default;
  explicit BiquadCascade(std::vector<Biquad> sections);

  // Allocates (or re-allocates) zeroed state for the given channel count.
  void init_state(int channels);
  // Zeroes existing state.
  void reset();

  // In-place filtering of a channel-major [channels x n] chunk.
  void process(double* data, int channels, int n);

  const std::vector<Biquad>& sections() const { return sections_; }
  int state_channels() const { return channels_; }

  // True when every pole lies strictly inside the unit circle by `margin`.
  bool stable(double margin = 1e-9) const;

  // Diagnostic table: one line per section, coefficients at 17 significant digits.
  std::string coefficient_table() const;

 private:
  std::vector<Biquad> sections_;
  int channels_ = 0;
  std::vector<double> state_;  // [section][channel][2]
};

// Butterworth low-pass via bilinear transform with frequency pre-warping;
// odd orders embed the real pole as a degenerate biquad. DC gain is exactly 1.
BiquadCascade design_butterworth_lowpass(int order, double cutoff_hz, double fs);

// Single-section notch with unity gain at DC and Nyquist.
BiquadCascade design_notch(double freq_hz, double q, double fs);

// |H(e^{j 2 pi f / fs})| of the cascade, in dB.
double frequency_response_db(const BiquadCascade& cascade, double f_hz, double fs);

// Per sample, subtract the mean across channels (in place).
void common_average_reference(double* data, int channels, int n);

// Per channel, subtract the mean over the pre-onset baseline window from the
// whole epoch. Requires at least baseline_pre_samples before onset_index.
void baseline_correct(EegEpoch& epoch, int baseline_pre_samples);

// Copy [onset - pre_s, onset + len_s) out of a channel-major continuous buffer
// into an epoch whose onset_index points at the imagery start.
EegEpoch epoch_extract(const double* buffer, int channels, int64_t buffer_len,
                       int64_t onset_index, double pre_s, double len_s, double fs);

}  // namespace bci::dsp
