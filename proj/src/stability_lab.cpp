#include "fkstab/stability_lab.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "fkstab/finite_oracle.hpp"
#include "fkstab/kalman.hpp"

namespace fkstab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class... Parts>
[[noreturn]] void reject(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw ValidationError(os.str());
}

std::size_t max_of(std::span<const std::size_t> n_list) {
  if (n_list.empty()) reject("n-list is empty");
  std::size_t m = 0;
  for (std::size_t n : n_list) m = std::max(m, n);
  return m;
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

SampleMoments sample_moments(std::span<const double> values) {
  SampleMoments m;
  m.count = values.size();
  if (values.empty()) return m;
  const double count = static_cast<double>(values.size());
  m.mean = pairwise_sum(values) / count;
  if (values.size() < 2) return m;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - m.mean) * (values[i] - m.mean);
  m.variance = pairwise_sum(sq) / (count - 1.0);
  m.std_error = std::sqrt(m.variance / count);
  return m;
}

std::size_t resolve_workers(std::size_t workers) {
  if (workers > 0) return workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

const EstimatorSummary& ReplicateStats::estimator(const std::string& name) const {
  for (const auto& e : estimators)
    if (e.name == name) return e;
  reject("no estimator named '", name, "'");
}

std::vector<double> ReplicateStats::column(std::size_t k, std::size_t n) const {
  if (runs.empty()) reject("replicate trajectories were not kept");
  std::vector<double> out;
  out.reserve(runs.size());
  for (const auto& run : runs) out.push_back(run.estimates.at(n).at(k));
  return out;
}

std::vector<double> ReplicateStats::log_z_column(std::size_t n) const {
  if (runs.empty()) reject("replicate trajectories were not kept");
  std::vector<double> out;
  out.reserve(runs.size());
  for (const auto& run : runs) out.push_back(run.log_z.at(n));
  return out;
}

ReplicateStats summarize_runs(std::vector<FilterTrajectory> runs, std::size_t particles,
                              std::span<const std::string> names, bool keep_runs) {
  ReplicateStats stats;
  stats.replicates = runs.size();
  stats.particles = particles;
  if (runs.empty()) return stats;
  stats.horizon = runs.front().log_z.size() - 1;
  const std::size_t steps = stats.horizon + 1;
  const std::size_t n_phi = runs.front().estimates.front().size();
  auto summarize = [&](std::string name, auto&& value) {
    EstimatorSummary e;
    e.name = std::move(name);
    std::vector<double> col(runs.size());
    for (std::size_t n = 0; n < steps; ++n) {
      for (std::size_t r = 0; r < runs.size(); ++r) col[r] = value(runs[r], n);
      const auto m = sample_moments(col);
      e.mean.push_back(m.mean);
      e.variance.push_back(m.variance);
      e.std_error.push_back(m.std_error);
    }
    stats.estimators.push_back(std::move(e));
  };
  for (std::size_t k = 0; k < n_phi; ++k)
    summarize(k < names.size() ? names[k] : "phi" + std::to_string(k),
              [k](const FilterTrajectory& t, std::size_t n) { return t.estimates[n][k]; });
  summarize("log_z", [](const FilterTrajectory& t, std::size_t n) { return t.log_z[n]; });
  summarize("z", [](const FilterTrajectory& t, std::size_t n) { return std::exp(t.log_z[n]); });
  if (keep_runs) stats.runs = std::move(runs);
  return stats;
}

TrendCheck no_upward_trend(std::span<const double> values, double eps) {
  if (values.size() < 2) reject("trend check needs at least two values");
  TrendCheck t;
  t.eps = eps;
  const std::size_t half = values.size() / 2;
  t.first_half_max = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(half));
  t.second_half_max = *std::max_element(values.begin() + static_cast<std::ptrdiff_t>(half), values.end());
  t.holds = t.second_half_max <= (1.0 + eps) * t.first_half_max;
  return t;
}

// ---------------------------------------------------------------- CLT

CltReport clt_variance_experiment(const FiniteModel& model, const Vector& phi, std::size_t particles,
                                  std::span<const std::size_t> n_list, std::size_t replicates, std::uint64_t seed,
                                  const CltOptions& options) {
  if (static_cast<std::size_t>(phi.size()) != model.size()) reject("φ has the wrong length");
  if (!phi.allFinite()) reject("φ must be bounded");
  const std::size_t n_max = max_of(n_list);
  model.require_horizon(n_max);

  CltReport report;
  report.particles = particles;
  report.replicates = replicates;
  const auto traj = exact_filter(model, n_max);
  const std::vector<TestFunction> phis{finite_test_function(phi)};
  const auto stats = run_replicates(FiniteSubstrate(model), particles, n_max, replicates, seed, phis,
                                    ReplicateOptions{options.workers, true, {"phi"}});
  const double big_n = static_cast<double>(particles);
  for (std::size_t n : n_list) {
    CltRow row;
    row.n = n;
    row.reference_mean = traj.etas[n].dot(phi);
    const auto col = stats.column(0, n);
    std::vector<double> sq(col.size());
    for (std::size_t r = 0; r < col.size(); ++r) sq[r] = big_n * (col[r] - row.reference_mean) * (col[r] - row.reference_mean);
    const auto m = sample_moments(sq);
    const auto means = sample_moments(col);
    row.empirical = m.mean;
    row.std_error = m.std_error;
    row.mc_mean = means.mean;
    row.mean_std_error = means.std_error;
    row.exact = asymptotic_variance(model, traj, phi, n);
    row.ratio = row.exact > 0.0 ? row.empirical / row.exact : (row.empirical == 0.0 ? 1.0 : kNaN);
    report.rows.push_back(row);
  }
  if (options.trend_horizon >= 2) {
    if (const auto limit = model.horizon_limit(); !limit || *limit >= options.trend_horizon) {
      const auto seq = asymptotic_variance_sequence(model, phi, options.trend_horizon);
      report.sigma_sequence.assign(seq.begin() + 1, seq.end());
      report.trend = no_upward_trend(report.sigma_sequence);
    }
  }
  return report;
}

CltReport clt_variance_experiment(const LinearGaussianParams& params, const ObservationRecord& y,
                                  std::size_t particles, std::span<const std::size_t> n_list,
                                  std::size_t replicates, std::uint64_t seed, const CltOptions& options) {
  const std::size_t n_max = max_of(n_list);
  if (n_max > y.size()) reject("observation record covers ", y.size(), " steps, but n = ", n_max);
  const auto ys = scalar_observations(y);
  const auto kf = kalman_filter(params, ys);
  HmmSubstrate substrate(build_linear_gaussian(params), y);
  const std::vector<TestFunction> phis{[](std::span<const double> x) { return x[0]; }};
  const auto stats = run_replicates(substrate, particles, n_max, replicates, seed, phis,
                                    ReplicateOptions{options.workers, true, {"x"}});
  CltReport report;
  report.particles = particles;
  report.replicates = replicates;
  const double big_n = static_cast<double>(particles);
  for (std::size_t n : n_list) {
    CltRow row;
    row.n = n;
    row.reference_mean = kf.predictive_means[n];
    const auto col = stats.column(0, n);
    std::vector<double> sq(col.size());
    for (std::size_t r = 0; r < col.size(); ++r) sq[r] = big_n * (col[r] - row.reference_mean) * (col[r] - row.reference_mean);
    const auto m = sample_moments(sq);
    const auto means = sample_moments(col);
    row.empirical = m.mean;
    row.std_error = m.std_error;
    row.mc_mean = means.mean;
    row.mean_std_error = means.std_error;
    row.exact = kNaN;
    row.ratio = kNaN;
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------- relvar

std::size_t NRule::at(std::size_t n) const {
  if (kind == Kind::fixed) return particles;
  return static_cast<std::size_t>(std::ceil(kappa * static_cast<double>(n + 1)));
}

namespace {

template <class Substrate_, class LogZ>
RelvarReport relvar_common(const Substrate_& substrate, const NRule& rule, std::span<const std::size_t> n_list,
                           std::size_t replicates, std::uint64_t seed, std::size_t workers, LogZ&& exact_log_z) {
  if (rule.kind == NRule::Kind::fixed && rule.particles == 0) reject("N must be at least 1");
  if (rule.kind == NRule::Kind::proportional && !(rule.kappa > 0.0)) reject("κ must be positive");
  const std::size_t n_max = max_of(n_list);
  RelvarReport report;
  report.rule = rule;
  report.replicates = replicates;
  const std::vector<TestFunction> none;
  auto row_from = [&](const ReplicateStats& stats, std::size_t n) {
    RelvarRow row;
    row.n = n;
    row.particles = stats.particles;
    const auto col = stats.log_z_column(n);
    const double ref = exact_log_z(n);
    std::vector<double> sq(col.size());
    for (std::size_t r = 0; r < col.size(); ++r) {
      const double d = std::expm1(col[r] - ref);
      sq[r] = d * d;
    }
    const auto m = sample_moments(sq);
    row.empirical = m.mean;
    row.std_error = m.std_error;
    row.scaled = row.empirical * static_cast<double>(row.particles) / static_cast<double>(n + 1);
    return row;
  };
  if (rule.kind == NRule::Kind::fixed) {
    const auto stats = run_replicates(substrate, rule.particles, n_max, replicates, seed, none,
                                      ReplicateOptions{workers, true, {}});
    for (std::size_t n : n_list) report.rows.push_back(row_from(stats, n));
  } else {
    for (std::size_t n : n_list) {
      // Each n gets its own particle count, so its own seed lane.
      const auto stats = run_replicates(substrate, rule.at(n), n, replicates, mix64(seed ^ (n + 1)), none,
                                        ReplicateOptions{workers, true, {}});
      report.rows.push_back(row_from(stats, n));
    }
  }
  return report;
}

void attach_fit(RelvarReport& report) {
  if (report.rule.kind != NRule::Kind::fixed) {
    report.note = "no linear fit under the proportional N rule";
    return;
  }
  std::vector<double> x, y;
  for (const auto& row : report.rows) {
    x.push_back(static_cast<double>(row.n + 1));
    y.push_back(row.empirical);
  }
  try {
    report.fit = fit_geometric(x, y, FitMode::linear);
  } catch (const ValidationError& e) {
    report.note = e.what();
  }
}

}  // namespace

RelvarReport relvar_growth_experiment(const FiniteModel& model, const NRule& rule,
                                      std::span<const std::size_t> n_list, std::size_t replicates,
                                      std::uint64_t seed, const RelvarOptions& options) {
  const std::size_t n_max = max_of(n_list);
  model.require_horizon(n_max);
  const auto traj = exact_filter(model, n_max);
  auto report = relvar_common(FiniteSubstrate(model), rule, n_list, replicates, seed, options.workers,
                              [&](std::size_t n) { return traj.log_gamma[n]; });
  if (options.exact) {
    for (auto& row : report.rows)
      if (row.n <= kRelvarHorizonCap && row.particles >= 2) row.exact = relvar_expansion(model, row.particles, row.n).total;
  }
  attach_fit(report);
  return report;
}

RelvarReport relvar_growth_experiment(const LinearGaussianParams& params, const ObservationRecord& y,
                                      const NRule& rule, std::span<const std::size_t> n_list,
                                      std::size_t replicates, std::uint64_t seed, const RelvarOptions& options) {
  const std::size_t n_max = max_of(n_list);
  if (n_max > y.size()) reject("observation record covers ", y.size(), " steps, but n = ", n_max);
  const auto kf = kalman_filter(params, scalar_observations(y));
  HmmSubstrate substrate(build_linear_gaussian(params), y);
  auto report = relvar_common(substrate, rule, n_list, replicates, seed, options.workers,
                              [&](std::size_t n) { return kf.log_z[n]; });
  attach_fit(report);
  return report;
}

// ---------------------------------------------------------------- forgetting

ForgettingReport forgetting_experiment(const FiniteModel& model, const Vector& mu_prime,
                                       std::span<const std::size_t> n_list) {
  max_of(n_list);
  ForgettingReport report;
  report.distances = vnorm_distance(model, mu_prime, n_list);
  report.exact_zero = std::all_of(report.distances.begin(), report.distances.end(),
                                  [](const auto& d) { return d.second == 0.0; });
  if (report.exact_zero) {
    report.note = "μ' = μ: every distance is exactly zero, no rate to fit";
    return report;
  }
  std::vector<double> x, y;
  for (const auto& [n, d] : report.distances) {
    x.push_back(static_cast<double>(n));
    y.push_back(d);
  }
  try {
    report.fit = fit_geometric(x, y, FitMode::log_linear);
    report.rho_hat = std::exp(report.fit->slope);
    report.note = report.fit->note;
  } catch (const ValidationError& e) {
    report.note = e.what();
  }
  return report;
}

}  // namespace fkstab
