#pragma once

#include <span>

namespace fkstab {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_normal_pdf(double x, double mean, double variance);
double normal_cdf(double z);
/// log P(Z > z) for standard normal Z, accurate far into the tail.
double log_normal_upper_tail(double z);
/// log P(za < Z < zb); either bound may be infinite.
double log_normal_interval(double za, double zb);

/// log of sum exp(terms), -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> terms);
double log_add_exp(double a, double b);

/// log ∫_a^b N(x; m, s²) e^{kx} dx.
double log_gaussian_exp_linear(double m, double s, double k, double a, double b);

/// log ∫_a^b N(x; m, s²) exp(1 + c|x|) dx.
double log_gaussian_exp_abs_linear(double m, double s, double c, double a, double b);

/// log ∫_a^b N(x; m, s²) exp(1 + αx²) dx; +inf when 2αs² >= 1.
double log_gaussian_exp_quadratic(double m, double s, double alpha, double a, double b);

}  // namespace fkstab
