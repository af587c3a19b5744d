#pragma once

#include <vector>

namespace bci {

// Clipped closed-form cumulative signal-retention coefficient of the cosine
// noise schedule: f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), alpha_bar = f(t)/f(0),
// clipped to [1e-5, 1].
double cosine_alpha_bar(int t, int T, double s);

// Precomputed alpha_bar table for t = 0..T. alpha_bar_0 is exactly 1, the
// table is strictly decreasing, and every entry lies in (0, 1].
struct NoiseSchedule {
  int T = 1000;
  double s = 0.008;
  std::vector<double> alpha_bar;  // T + 1 entries

  static NoiseSchedule cosine(int T = 1000, double s = 0.008);

  double at(int t) const;  // range-checked alpha_bar_t
};

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, elementwise.
std::vector<double> forward_noising(const std::vector<double>& x0, int t,
                                    const std::vector<double>& eps,
                                    const NoiseSchedule& schedule);

}  // namespace bci
