#include "fkstab/particle_filter.hpp"

namespace fkstab {
namespace {

std::size_t draw_from_cdf(std::span<const double> cdf, double u) {
  const double target = u * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<double> cumulative(std::span<const double> w) {
  std::vector<double> c(w.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) c[i] = (s += w[i]);
  return c;
}

}  // namespace

FiniteSubstrate::FiniteSubstrate(FiniteModel model) : model_(std::move(model)) {
  const std::size_t k = model_.size();
  for (const Matrix& m : model_.transitions()) {
    std::vector<double> flat(k * k);
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j)
        flat[i * k + j] = (s += m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    cdfs_.push_back(std::move(flat));
  }
  initial_cdf_ = cumulative(std::span<const double>(model_.initial().data(), k));
}

void FiniteSubstrate::sample_initial(RandomStream& rng, std::span<double> x) const {
  x[0] = static_cast<double>(draw_from_cdf(initial_cdf_, rng.uniform()));
}

double FiniteSubstrate::log_potential(std::size_t n, std::span<const double> x) const {
  return model_.log_potential(n)[static_cast<Eigen::Index>(x[0])];
}

void FiniteSubstrate::mutate(std::size_t n, std::span<const double> x, RandomStream& rng,
                             std::span<double> out) const {
  const std::size_t k = model_.size();
  const auto& table = cdfs_.size() == 1 ? cdfs_.front() : cdfs_.at(n - 1);
  const auto row = static_cast<std::size_t>(x[0]);
  out[0] = static_cast<double>(draw_from_cdf(std::span<const double>(table.data() + row * k, k), rng.uniform()));
}

HmmSubstrate::HmmSubstrate(HmmModel model, ObservationRecord y) : model_(std::move(model)), y_(std::move(y)) {
  for (std::size_t n = 0; n < y_.size(); ++n) {
    if (y_[n].size() != model_.obs_dim()) {
      std::ostringstream os;
      os << "observation " << n << " has dimension " << y_[n].size() << ", expected " << model_.obs_dim();
      throw ValidationError(os.str());
    }
    if (!model_.y_star().contains(y_[n])) {
      std::ostringstream os;
      os << "observation " << n << " lies outside Y* (" << model_.y_star().description() << ")";
      throw ValidationError(os.str());
    }
  }
}

double HmmSubstrate::log_potential(std::size_t n, std::span<const double> x) const {
  return model_.obs_log_likelihood(x, y_.at(n));
}

void multinomial_resample(std::span<const double> log_weights, std::size_t n_draws, RandomStream& rng,
                          std::vector<std::size_t>& ancestors) {
  const std::size_t m = log_weights.size();
  double shift = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) shift = std::max(shift, lw);
  if (m == 0 || !std::isfinite(shift)) throw NumericalError("resampling needs at least one finite log-weight");

  ancestors.resize(n_draws);
  // Exponential spacings E_1..E_{N+1}: the partial sums over the total
  // are distributed as the order statistics of N uniforms.
  thread_local std::vector<double> partial;
  partial.resize(n_draws);
  double total_spacing = 0.0;
  for (std::size_t k = 0; k < n_draws; ++k) partial[k] = (total_spacing += standard_exponential(rng));
  total_spacing += standard_exponential(rng);

  double weight_total = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const double w = std::exp(log_weights[j] - shift);
    weight_total += w;
    if (w > 0.0) last_positive = j;
  }
  std::size_t j = 0;
  double cum = std::exp(log_weights[0] - shift);
  for (std::size_t k = 0; k < n_draws; ++k) {
    const double target = partial[k] / total_spacing * weight_total;
    while (cum < target && j < last_positive) cum += std::exp(log_weights[++j] - shift);
    ancestors[k] = j;
  }
}

std::vector<std::size_t> multinomial_resample(std::span<const double> log_weights, std::size_t n_draws,
                                              RandomStream& rng) {
  std::vector<std::size_t> out;
  multinomial_resample(log_weights, n_draws, rng, out);
  return out;
}

TestFunction finite_test_function(Vector phi) {
  return [phi = std::move(phi)](std::span<const double> x) { return phi[static_cast<Eigen::Index>(x[0])]; };
}

TestFunction constant_test_function(double c) {
  return [c](std::span<const double>) { return c; };
}

}  // namespace fkstab
