#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fkstab/error.hpp"
#include "fkstab/finite_model.hpp"
#include "fkstab/fit.hpp"
#include "fkstab/hmm_model.hpp"
#include "fkstab/particle_filter.hpp"

namespace fkstab {

/// Pairwise (cascade) sum; the result depends only on the order of values.
double pairwise_sum(std::span<const double> values);

struct SampleMoments {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;   // unbiased, 0 for a single value
  double std_error = 0.0;  // sqrt(variance / count)
};
SampleMoments sample_moments(std::span<const double> values);

/// Per-step summary of one estimator across replicates.
struct EstimatorSummary {
  std::string name;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> std_error;
};

struct ReplicateStats {
  std::size_t replicates = 0;
  std::size_t particles = 0;
  std::size_t horizon = 0;
  std::vector<EstimatorSummary> estimators;  // test functions in order, then "log_z" and "z"
  std::vector<FilterTrajectory> runs;        // indexed by stream id

  const EstimatorSummary& estimator(const std::string& name) const;
  /// Values of estimator k (test functions first, then log Z) at step n, one per replicate.
  std::vector<double> column(std::size_t k, std::size_t n) const;
  std::vector<double> log_z_column(std::size_t n) const;
};

/// 0 picks std::thread::hardware_concurrency().
std::size_t resolve_workers(std::size_t workers);

/// Runs job(r) for r in [0, count) on a pool of threads. The first
/// exception thrown by any job is rethrown after all workers stop.
template <class Job>
void parallel_for(std::size_t count, std::size_t workers, Job&& job) {
  const std::size_t threads = std::min(resolve_workers(workers), std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= count || failed.load()) return;
      try {
        job(r);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

ReplicateStats summarize_runs(std::vector<FilterTrajectory> runs, std::size_t particles,
                              std::span<const std::string> names, bool keep_runs);

struct ReplicateOptions {
  std::size_t workers = 0;
  bool keep_runs = true;
  std::vector<std::string> names;  // defaults to phi0, phi1, ...
};

/// R independent filters on stream ids 0..R-1 of the master seed.
template <Substrate S>
ReplicateStats run_replicates(const S& substrate, std::size_t particles, std::size_t n, std::size_t replicates,
                              std::uint64_t seed, std::span<const TestFunction> phis,
                              const ReplicateOptions& options = {}) {
  if (replicates < 2) throw ValidationError("run_replicates needs R >= 2");
  std::vector<FilterTrajectory> runs(replicates);
  parallel_for(replicates, options.workers, [&](std::size_t r) {
    runs[r] = run_filter(substrate, particles, n, RandomStream(seed, r), phis);
  });
  std::vector<std::string> names = options.names;
  for (std::size_t k = names.size(); k < phis.size(); ++k) names.push_back("phi" + std::to_string(k));
  return summarize_runs(std::move(runs), particles, names, options.keep_runs);
}

/// max over the second half of a sequence against (1 + eps) times the max
/// over the first half.
struct TrendCheck {
  double first_half_max = 0.0;
  double second_half_max = 0.0;
  double eps = 0.05;
  bool holds = false;
};
TrendCheck no_upward_trend(std::span<const double> values, double eps = 0.05);

// ---------------------------------------------------------------- CLT

struct CltRow {
  std::size_t n = 0;
  double empirical = 0.0;  // N * mean (π_n^N(φ) - π_n(φ))²
  double std_error = 0.0;
  double exact = 0.0;      // σ_n²; Kalman runs leave it NaN
  double ratio = 0.0;
  double mc_mean = 0.0;    // mean of π_n^N(φ)
  double reference_mean = 0.0;
  double mean_std_error = 0.0;
};

struct CltReport {
  std::size_t particles = 0;
  std::size_t replicates = 0;
  std::vector<CltRow> rows;
  std::vector<double> sigma_sequence;  // σ_1²..σ_T² from the oracle; empty for Kalman runs
  std::optional<TrendCheck> trend;
};

struct CltOptions {
  std::size_t trend_horizon = 200;
  std::size_t workers = 0;
};

CltReport clt_variance_experiment(const FiniteModel& model, const Vector& phi, std::size_t particles,
                                  std::span<const std::size_t> n_list, std::size_t replicates, std::uint64_t seed,
                                  const CltOptions& options = {});

/// Linear-Gaussian variant with φ(x) = x: compares replicate means against
/// the Kalman predictive means.
CltReport clt_variance_experiment(const LinearGaussianParams& params, const ObservationRecord& y,
                                  std::size_t particles, std::span<const std::size_t> n_list,
                                  std::size_t replicates, std::uint64_t seed, const CltOptions& options = {});

// ---------------------------------------------------------------- relvar

struct NRule {
  enum class Kind { fixed, proportional };
  Kind kind = Kind::fixed;
  std::size_t particles = 1000;
  double kappa = 8.0;  // N = ceil(κ (n + 1)) in the proportional regime

  std::size_t at(std::size_t n) const;
  bool operator==(const NRule&) const = default;
};

struct RelvarRow {
  std::size_t n = 0;
  std::size_t particles = 0;
  double empirical = 0.0;  // mean of (Z_n^N / Z_n - 1)²
  double std_error = 0.0;
  std::optional<double> exact;  // enumerated expansion, n <= 14
  double scaled = 0.0;          // empirical * N / (n + 1)
};

struct RelvarReport {
  NRule rule;
  std::size_t replicates = 0;
  std::vector<RelvarRow> rows;
  std::optional<FitReport> fit;  // linear in (n + 1), fixed N only
  std::string note;
};

struct RelvarOptions {
  bool exact = true;
  std::size_t workers = 0;
};

RelvarReport relvar_growth_experiment(const FiniteModel& model, const NRule& rule,
                                      std::span<const std::size_t> n_list, std::size_t replicates,
                                      std::uint64_t seed, const RelvarOptions& options = {});

RelvarReport relvar_growth_experiment(const LinearGaussianParams& params, const ObservationRecord& y,
                                      const NRule& rule, std::span<const std::size_t> n_list,
                                      std::size_t replicates, std::uint64_t seed, const RelvarOptions& options = {});

// ---------------------------------------------------------------- forgetting

struct ForgettingReport {
  std::vector<std::pair<std::size_t, double>> distances;
  std::optional<FitReport> fit;
  std::optional<double> rho_hat;  // exp(slope)
  bool exact_zero = false;
  std::string note;
};

ForgettingReport forgetting_experiment(const FiniteModel& model, const Vector& mu_prime,
                                       std::span<const std::size_t> n_list);

}  // namespace fkstab
