#include "fkstab/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fkstab {
namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt1_2 = 0.70710678118654752440;
}  // namespace

double log_normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -kLogSqrt2Pi - 0.5 * std::log(variance) - 0.5 * d * d / variance;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kSqrt1_2); }

double log_normal_upper_tail(double z) {
  if (z == kInf) return -kInf;
  if (z < 25.0) return std::log(0.5 * std::erfc(z * kSqrt1_2));
  // Mills-ratio series; relative error below 1e-9 for z >= 25.
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - std::log(z) - kLogSqrt2Pi + std::log(series);
}

double log_normal_interval(double za, double zb) {
  if (!(zb > za)) return -kInf;
  if (za >= 0.0) {
    const double la = log_normal_upper_tail(za);
    const double lb = log_normal_upper_tail(zb);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (zb <= 0.0) return log_normal_interval(-zb, -za);
  return std::log(1.0 - std::exp(log_normal_upper_tail(-za)) - std::exp(log_normal_upper_tail(zb)));
}

double log_sum_exp(std::span<const double> terms) {
  double m = -kInf;
  for (double t : terms) m = std::max(m, t);
  if (m == -kInf) return -kInf;
  if (m == kInf) return kInf;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

double log_add_exp(double a, double b) {
  const double terms[2] = {a, b};
  return log_sum_exp(terms);
}

double log_gaussian_exp_linear(double m, double s, double k, double a, double b) {
  if (!(b > a)) return -kInf;
  const double shift = m + k * s * s;
  return k * m + 0.5 * k * k * s * s + log_normal_interval((a - shift) / s, (b - shift) / s);
}

double log_gaussian_exp_abs_linear(double m, double s, double c, double a, double b) {
  double pos = -kInf;
  double neg = -kInf;
  if (b > 0.0) pos = log_gaussian_exp_linear(m, s, c, std::max(a, 0.0), b);
  if (a < 0.0) neg = log_gaussian_exp_linear(m, s, -c, a, std::min(b, 0.0));
  return 1.0 + log_add_exp(pos, neg);
}

double log_gaussian_exp_quadratic(double m, double s, double alpha, double a, double b) {
  const double shrink = 1.0 - 2.0 * alpha * s * s;
  if (!(shrink > 0.0)) return kInf;
  const double tilted_mean = m / shrink;
  const double tilted_sd = s / std::sqrt(shrink);
  return 1.0 - 0.5 * std::log(shrink) + alpha * m * m / shrink +
         log_normal_interval((a - tilted_mean) / tilted_sd, (b - tilted_mean) / tilted_sd);
}

}  // namespace fkstab
