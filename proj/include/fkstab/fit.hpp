#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace fkstab {

enum class FitMode { log_linear, linear };

/// Ordinary least squares of y (or log y) on x.
struct FitReport {
  FitMode mode = FitMode::log_linear;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double residual_max = 0.0;
  double residual_sd = 0.0;   // sqrt(SSE / (m - 2))
  double x_mean = 0.0;
  double sxx = 0.0;
  std::size_t points_used = 0;
  std::size_t dropped = 0;
  std::string note;

  /// Fitted value on the fitted scale (log y in log-linear mode).
  double predict(double x) const { return intercept + slope * x; }
  /// Standard error of a new observation at x (OLS prediction interval).
  double prediction_sd(double x) const;
};

inline constexpr double kLogFloor = 1e-13;

/// Points with y < floor are dropped in log-linear mode and counted in
/// the report. Needs at least three usable points.
FitReport fit_geometric(std::span<const double> x, std::span<const double> y,
                        FitMode mode = FitMode::log_linear, double floor = kLogFloor);
/// Same with x = 0, 1, 2, ...
FitReport fit_geometric(std::span<const double> y, FitMode mode = FitMode::log_linear);

const char* to_string(FitMode mode);

}  // namespace fkstab
