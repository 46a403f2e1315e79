#include "fkstab/kalman.hpp"

#include <cmath>

#include "fkstab/error.hpp"
#include "fkstab/gaussian.hpp"

namespace fkstab {

KalmanTrajectory kalman_filter(const LinearGaussianParams& params, std::span<const double> y) {
  build_linear_gaussian(params);
  KalmanTrajectory out;
  double m = params.m0;
  double p = params.p0;
  out.predictive_means.push_back(m);
  out.predictive_variances.push_back(p);
  out.log_z.push_back(0.0);
  for (double obs : y) {
    const double s = p + params.r;
    const double inc = log_normal_pdf(obs, m, s);
    const double gain = p / s;
    const double m_post = m + gain * (obs - m);
    const double p_post = (1.0 - gain) * p;
    m = params.a * m_post;
    p = params.a * params.a * p_post + params.q;
    out.log_increments.push_back(inc);
    out.log_z.push_back(out.log_z.back() + inc);
    out.predictive_means.push_back(m);
    out.predictive_variances.push_back(p);
  }
  return out;
}

FiniteModel discretize_linear_gaussian(const LinearGaussianParams& params, std::span<const double> y,
                                       const DiscretizationOptions& options) {
  build_linear_gaussian(params);
  if (options.points < 2) throw ValidationError("discretization needs at least 2 points");
  if (y.empty()) throw ValidationError("discretization needs at least one observation");
  double spread = std::sqrt(params.p0);
  if (std::abs(params.a) < 1.0) spread = std::max(spread, std::sqrt(params.q / (1.0 - params.a * params.a)));
  const double half = options.width_sd * spread;
  const auto k = static_cast<Eigen::Index>(options.points);
  std::vector<double> grid(options.points);
  for (std::size_t i = 0; i < options.points; ++i)
    grid[i] = params.m0 - half + 2.0 * half * static_cast<double>(i) / static_cast<double>(options.points - 1);

  Matrix m(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) m(i, j) = std::exp(log_normal_pdf(grid[j], params.a * grid[i], params.q));
    m.row(i) /= m.row(i).sum();
  }
  Vector mu(k);
  for (Eigen::Index i = 0; i < k; ++i) mu[i] = std::exp(log_normal_pdf(grid[i], params.m0, params.p0));
  mu /= mu.sum();
  std::vector<Vector> log_g;
  for (double obs : y) {
    Vector lg(k);
    for (Eigen::Index i = 0; i < k; ++i) lg[i] = log_normal_pdf(obs, grid[i], params.r);
    log_g.push_back(std::move(lg));
  }
  // A single observation would read as a homogeneous potential; that is
  // the same model for the one step it covers.
  return build_finite_model_log({m}, std::move(log_g), std::move(mu), std::nullopt, std::move(grid));
}

std::vector<double> scalar_observations(const ObservationRecord& y) {
  std::vector<double> out;
  out.reserve(y.size());
  for (const auto& v : y) {
    if (v.size() != 1) throw ValidationError("expected scalar observations");
    out.push_back(v[0]);
  }
  return out;
}

}  // namespace fkstab
