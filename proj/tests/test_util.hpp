#pragma once

// Shared test oracles. Everything here is independent of the library's
// implementation paths: finite differences for gradients, a radix-2 FFT for
// spectra, and naive recomputation helpers.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "rng.hpp"

namespace testutil {

// Mixed absolute/relative error: |a-b| <= tol * max(1, |a|, |b|).
inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Central finite-difference gradient check.
//
// `loss` rebuilds the computation from scratch for the given leaf values and
// returns the scalar loss. `analytic` holds the gradients produced by one
// backward pass at `inputs`. Returns the maximum mixed error over all
// coordinates of all checked inputs.
inline double finite_difference_max_err(
    const std::function<double(const std::vector<std::vector<double>>&)>& loss,
    std::vector<std::vector<double>> inputs,
    const std::vector<std::vector<double>>& analytic, double step = 1e-5) {
  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t j = 0; j < inputs[i].size(); ++j) {
      const double keep = inputs[i][j];
      inputs[i][j] = keep + step;
      const double fp = loss(inputs);
      inputs[i][j] = keep - step;
      const double fm = loss(inputs);
      inputs[i][j] = keep;
      const double numeric = (fp - fm) / (2.0 * step);
      worst = std::max(worst, rel_err(analytic[i][j], numeric));
    }
  }
  return worst;
}

inline std::vector<double> random_vec(size_t n, bci::Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Power spectrum of a real signal zero-padded to the next power of two.
// Entry k corresponds to frequency k * fs / n_fft.
inline std::vector<double> power_spectrum(const std::vector<double>& x, size_t& n_fft_out) {
  size_t n_fft = 1;
  while (n_fft < x.size()) n_fft <<= 1;
  std::vector<std::complex<double>> buf(n_fft);
  for (size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
  fft(buf);
  std::vector<double> p(n_fft / 2 + 1);
  for (size_t k = 0; k < p.size(); ++k) p[k] = std::norm(buf[k]);
  n_fft_out = n_fft;
  return p;
}

// Goertzel-style single-frequency power of one channel.
inline double band_power(const double* x, int n, double freq_hz, double fs) {
  double re = 0.0, im = 0.0;
  const double w = 2.0 * 3.14159265358979323846 * freq_hz / fs;
  for (int t = 0; t < n; ++t) {
    re += x[t] * std::cos(w * t);
    im -= x[t] * std::sin(w * t);
  }
  const double scale = 1.0 / n;
  return (re * re + im * im) * scale * scale;
}

}  // namespace testutil
