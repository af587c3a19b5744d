#include "schedule.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace bci {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kFloor = 1e-5;
}  // namespace

double cosine_alpha_bar(int t, int T, double s) {
  if (T < 1) fail_usage("cosine_alpha_bar: T must be positive");
  if (t < 0 || t > T) fail_usage("cosine_alpha_bar: t out of range");
  auto f = [&](double tt) {
    const double c = std::cos(((tt / T + s) / (1.0 + s)) * kPi / 2.0);
    return c * c;
  };
  const double raw = f(static_cast<double>(t)) / f(0.0);
  return std::clamp(raw, kFloor, 1.0);
}

NoiseSchedule NoiseSchedule::cosine(int T, double s) {
  NoiseSchedule sched;
  sched.T = T;
  sched.s = s;
  sched.alpha_bar.resize(static_cast<size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) sched.alpha_bar[static_cast<size_t>(t)] = cosine_alpha_bar(t, T, s);
  sched.alpha_bar[0] = 1.0;
  // Near t = T several raw values can fall below the clip floor and collapse
  // onto it; nudge each flattened entry one ulp above its successor so the
  // table stays strictly decreasing while alpha_bar_T remains exactly 1e-5.
  for (int t = T - 1; t >= 1; --t) {
    double& cur = sched.alpha_bar[static_cast<size_t>(t)];
    const double next = sched.alpha_bar[static_cast<size_t>(t) + 1];
    if (cur <= next) cur = std::nextafter(next, 1.0);
  }
  return sched;
}

double NoiseSchedule::at(int t) const {
  if (t < 0 || t > T) fail_usage("NoiseSchedule: t out of range");
  return alpha_bar[static_cast<size_t>(t)];
}

std::vector<double> forward_noising(const std::vector<double>& x0, int t,
                                    const std::vector<double>& eps,
                                    const NoiseSchedule& schedule) {
  if (x0.size() != eps.size()) fail_usage("forward_noising: x0/eps shape mismatch");
  const double ab = schedule.at(t);
  const double sa = std::sqrt(ab);
  const double sn = std::sqrt(1.0 - ab);
  std::vector<double> xt(x0.size());
  for (size_t i = 0; i < x0.size(); ++i) xt[i] = sa * x0[i] + sn * eps[i];
  return xt;
}

}  // namespace bci
