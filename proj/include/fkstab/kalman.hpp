#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fkstab/finite_model.hpp"
#include "fkstab/hmm_model.hpp"

namespace fkstab {

/// One-step-ahead Kalman flow: the law N(mean[n], variance[n]) of X_n given
/// y_0..y_{n-1}, for n = 0..len(y). log_z[n] is the log density of
/// y_0..y_{n-1}; log_increments[n-1] = log_z[n] - log_z[n-1].
struct KalmanTrajectory {
  std::vector<double> predictive_means;
  std::vector<double> predictive_variances;
  std::vector<double> log_increments;
  std::vector<double> log_z;
};

KalmanTrajectory kalman_filter(const LinearGaussianParams& params, std::span<const double> y);

struct DiscretizationOptions {
  std::size_t points = 200;
  double width_sd = 8.0;  // half-width in units of the stationary (or prior) sd
};

/// Finite-grid approximation of the linear-Gaussian model with G_n = g(·, y_n).
FiniteModel discretize_linear_gaussian(const LinearGaussianParams& params, std::span<const double> y,
                                       const DiscretizationOptions& options = {});

/// Scalar observations from a record of 1-d vectors.
std::vector<double> scalar_observations(const ObservationRecord& y);

}  // namespace fkstab
