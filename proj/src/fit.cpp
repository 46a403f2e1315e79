#include "fkstab/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fkstab/error.hpp"

namespace fkstab {

const char* to_string(FitMode mode) { return mode == FitMode::log_linear ? "log-linear" : "linear"; }

double FitReport::prediction_sd(double x) const {
  const double m = static_cast<double>(points_used);
  const double dx = x - x_mean;
  return residual_sd * std::sqrt(1.0 + 1.0 / m + (sxx > 0.0 ? dx * dx / sxx : 0.0));
}

FitReport fit_geometric(std::span<const double> x, std::span<const double> y, FitMode mode, double floor) {
  if (x.size() != y.size()) throw ValidationError("fit: x and y lengths differ");
  FitReport r;
  r.mode = mode;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]) || !std::isfinite(x[i])) {
      ++r.dropped;
      continue;
    }
    if (mode == FitMode::log_linear) {
      if (y[i] < floor) {
        ++r.dropped;
        continue;
      }
      ys.push_back(std::log(y[i]));
    } else {
      ys.push_back(y[i]);
    }
    xs.push_back(x[i]);
  }
  if (r.dropped > 0)
    r.note = std::to_string(r.dropped) + " point(s) dropped" +
             (mode == FitMode::log_linear ? " below the floor " + std::to_string(floor) : std::string(" (not finite)"));
  if (xs.size() < 3) throw ValidationError("fit needs at least 3 usable points, got " + std::to_string(xs.size()));

  const double m = static_cast<double>(xs.size());
  r.points_used = xs.size();
  r.x_mean = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  const double y_mean = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
  double sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - r.x_mean;
    const double dy = ys[i] - y_mean;
    r.sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(r.sxx > 0.0)) throw ValidationError("fit needs at least two distinct x values");
  r.slope = sxy / r.sxx;
  r.intercept = y_mean - r.slope * r.x_mean;
  double sse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - r.predict(xs[i]);
    sse += e * e;
    r.residual_max = std::max(r.residual_max, std::abs(e));
  }
  r.residual_sd = std::sqrt(sse / (m - 2.0));
  // A series with no spread is fitted exactly.
  r.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
  return r;
}

FitReport fit_geometric(std::span<const double> y, FitMode mode) {
  std::vector<double> x(y.size());
  std::iota(x.begin(), x.end(), 0.0);
  return fit_geometric(x, y, mode);
}

}  // namespace fkstab
