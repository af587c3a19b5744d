#include "dsp.hpp"

#include <cmath>
#include <complex>
#include <cstdio>

#include "errors.hpp"

namespace bci::dsp {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

BiquadCascade::BiquadCascade(std::vector<Biquad> sections) : sections_(std::move(sections)) {
  if (sections_.empty()) fail_usage("BiquadCascade: needs at least one section");
}

void BiquadCascade::init_state(int channels) {
  if (channels < 1) fail_usage("BiquadCascade: channel count must be positive");
  channels_ = channels;
  state_.assign(sections_.size() * static_cast<size_t>(channels) * 2, 0.0);
}

void BiquadCascade::reset() { std::fill(state_.begin(), state_.end(), 0.0); }

void BiquadCascade::process(double* data, int channels, int n) {
  if (channels_ == 0) init_state(channels);
  if (channels != channels_) fail_usage("BiquadCascade: chunk channel count does not match state");
  if (n < 0) fail_usage("BiquadCascade: negative chunk length");
  for (size_t si = 0; si < sections_.size(); ++si) {
    const Biquad& s = sections_[si];
    for (int c = 0; c < channels; ++c) {
      double* st = state_.data() + (si * static_cast<size_t>(channels) + c) * 2;
      double s1 = st[0], s2 = st[1];
      double* x = data + static_cast<size_t>(c) * n;
      for (int i = 0; i < n; ++i) {
        const double in = x[i];
        const double out = s.b0 * in + s1;
        s1 = s.b1 * in - s.a1 * out + s2;
        s2 = s.b2 * in - s.a2 * out;
        x[i] = out;
      }
      st[0] = s1;
      st[1] = s2;
    }
  }
}

bool BiquadCascade::stable(double margin) const {
  for (const Biquad& s : sections_) {
    // roots of z^2 + a1 z + a2
    const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2));
    const std::complex<double> r1 = (-s.a1 + disc) / 2.0;
    const std::complex<double> r2 = (-s.a1 - disc) / 2.0;
    if (std::abs(r1) >= 1.0 - margin || std::abs(r2) >= 1.0 - margin) return false;
  }
  return true;
}

std::string BiquadCascade::coefficient_table() const {
  std::string out = "section,b0,b1,b2,a1,a2\n";
  char line[256];
  for (size_t i = 0; i < sections_.size(); ++i) {
    const Biquad& s = sections_[i];
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, s.b0, s.b1,
                  s.b2, s.a1, s.a2);
    out += line;
  }
  return out;
}

BiquadCascade design_butterworth_lowpass(int order, double cutoff_hz, double fs) {
  if (order < 1) fail_usage("butterworth: order must be >= 1");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= fs / 2.0) {
    fail_usage("butterworth: cutoff must lie in (0, Nyquist)");
  }
  // Bilinear transform with pre-warping; c = cot(pi fc / fs).
  const double c = 1.0 / std::tan(kPi * cutoff_hz / fs);
  std::vector<Biquad> sections;
  const int pairs = order / 2;
  for (int k = 1; k <= pairs; ++k) {
    // Conjugate analog pole pair of the normalized prototype at angle theta.
    const double theta = kPi / 2.0 + (2.0 * k - 1.0) * kPi / (2.0 * order);
    const double zeta = -std::cos(theta);
    const double a0 = c * c + 2.0 * zeta * c + 1.0;
    Biquad s;
    s.b0 = 1.0 / a0;
    s.b1 = 2.0 / a0;
    s.b2 = 1.0 / a0;
    s.a1 = (2.0 - 2.0 * c * c) / a0;
    s.a2 = (c * c - 2.0 * zeta * c + 1.0) / a0;
    sections.push_back(s);
  }
  if (order % 2 == 1) {
    const double a0 = c + 1.0;
    Biquad s;
    s.b0 = 1.0 / a0;
    s.b1 = 1.0 / a0;
    s.b2 = 0.0;
    s.a1 = (1.0 - c) / a0;
    s.a2 = 0.0;
    sections.push_back(s);
  }
  return BiquadCascade(std::move(sections));
}

BiquadCascade design_notch(double freq_hz, double q, double fs) {
  if (!(freq_hz > 0.0) || freq_hz >= fs / 2.0) fail_usage("notch: frequency must lie in (0, Nyquist)");
  if (!(q > 0.0)) fail_usage("notch: Q must be positive");
  const double w0 = 2.0 * kPi * freq_hz / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = 1.0 / a0;
  s.b1 = -2.0 * cw / a0;
  s.b2 = 1.0 / a0;
  s.a1 = -2.0 * cw / a0;
  s.a2 = (1.0 - alpha) / a0;
  return BiquadCascade({s});
}

double frequency_response_db(const BiquadCascade& cascade, double f_hz, double fs) {
  if (f_hz < 0.0 || f_hz >= fs / 2.0) fail_usage("frequency_response: f must lie in [0, Nyquist)");
  const double w = 2.0 * kPi * f_hz / fs;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h(1.0, 0.0);
  for (const Biquad& s : cascade.sections()) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  }
  return 20.0 * std::log10(std::abs(h));
}

void common_average_reference(double* data, int channels, int n) {
  if (channels < 1) fail_usage("common_average_reference: needs at least one channel");
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int c = 0; c < channels; ++c) mean += data[static_cast<size_t>(c) * n + i];
    mean /= channels;
    for (int c = 0; c < channels; ++c) data[static_cast<size_t>(c) * n + i] -= mean;
  }
}

void baseline_correct(EegEpoch& epoch, int baseline_pre_samples) {
  if (baseline_pre_samples < 1) fail_usage("baseline_correct: baseline window must be non-empty");
  if (epoch.onset_index < baseline_pre_samples) {
    fail_data("baseline_correct: insufficient pre-onset samples");
  }
  const int start = epoch.onset_index - baseline_pre_samples;
  for (int c = 0; c < epoch.channels; ++c) {
    double* row = epoch.channel(c);
    double mean = 0.0;
    for (int i = 0; i < baseline_pre_samples; ++i) mean += row[start + i];
    mean /= baseline_pre_samples;
    for (int i = 0; i < epoch.samples; ++i) row[i] -= mean;
  }
}

EegEpoch epoch_extract(const double* buffer, int channels, int64_t buffer_len,
                       int64_t onset_index, double pre_s, double len_s, double fs) {
  const int pre = static_cast<int>(std::lround(pre_s * fs));
  const int len = static_cast<int>(std::lround(len_s * fs));
  if (onset_index - pre < 0 || onset_index + len > buffer_len) {
    fail_data("epoch_extract: insufficient history in buffer");
  }
  EegEpoch e;
  e.channels = channels;
  e.samples = pre + len;
  e.fs = fs;
  e.onset_index = pre;
  e.data.resize(static_cast<size_t>(channels) * e.samples);
  for (int c = 0; c < channels; ++c) {
    const double* src = buffer + static_cast<size_t>(c) * buffer_len + (onset_index - pre);
    std::copy(src, src + e.samples, e.channel(c));
  }
  return e;
}

}  // namespace bci::dsp
