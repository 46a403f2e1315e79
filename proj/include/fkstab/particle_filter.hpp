#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "fkstab/error.hpp"
#include "fkstab/finite_model.hpp"
#include "fkstab/hmm_model.hpp"
#include "fkstab/random.hpp"

namespace fkstab {

/// One generation of the N-particle system. Coordinates are stored
/// particle-major in one flat array; finite-model particles hold state
/// indices.
struct ParticleState {
  std::vector<double> positions;
  std::size_t dim = 1;
  std::size_t n_particles = 0;
  std::size_t time = 0;
  double log_z = 0.0;

  std::span<const double> particle(std::size_t i) const { return {positions.data() + i * dim, dim}; }
};

/// What the particle engine needs from a model: μ sampling, G_n in logs and
/// the mutation kernel M_{n}.
template <class S>
concept Substrate = requires(const S& s, std::size_t n, std::span<const double> x, std::span<double> out,
                             RandomStream& rng) {
  { s.dim() } -> std::convertible_to<std::size_t>;
  s.sample_initial(rng, out);
  { s.log_potential(n, x) } -> std::convertible_to<double>;
  s.mutate(n, x, rng, out);
  { s.horizon_limit() } -> std::convertible_to<std::optional<std::size_t>>;
};

class FiniteSubstrate {
 public:
  explicit FiniteSubstrate(FiniteModel model);

  std::size_t dim() const noexcept { return 1; }
  void sample_initial(RandomStream& rng, std::span<double> x) const;
  double log_potential(std::size_t n, std::span<const double> x) const;
  /// Draws X_n ~ M_n(x, ·).
  void mutate(std::size_t n, std::span<const double> x, RandomStream& rng, std::span<double> out) const;
  std::optional<std::size_t> horizon_limit() const noexcept { return model_.horizon_limit(); }
  const FiniteModel& model() const noexcept { return model_; }

 private:
  FiniteModel model_;
  std::vector<std::vector<double>> cdfs_;  // cumulative rows of each M_n, row-major
  std::vector<double> initial_cdf_;
};

/// Continuous-state model paired with a frozen observation record; G_n = g(·, y_n).
class HmmSubstrate {
 public:
  HmmSubstrate(HmmModel model, ObservationRecord y);

  std::size_t dim() const noexcept { return model_.state_dim(); }
  void sample_initial(RandomStream& rng, std::span<double> x) const { model_.sample_initial(rng, x); }
  double log_potential(std::size_t n, std::span<const double> x) const;
  void mutate(std::size_t, std::span<const double> x, RandomStream& rng, std::span<double> out) const {
    model_.sample_signal(x, rng, out);
  }
  std::optional<std::size_t> horizon_limit() const noexcept { return y_.size(); }
  const HmmModel& model() const noexcept { return model_; }
  const ObservationRecord& observations() const noexcept { return y_; }

 private:
  HmmModel model_;
  ObservationRecord y_;
};

/// Multinomial ancestor draw: N iid indices with P(j) ∝ exp(log_weights[j]).
/// Sorted uniforms come from normalized exponential spacings, so the
/// returned indices are in increasing order.
void multinomial_resample(std::span<const double> log_weights, std::size_t n_draws, RandomStream& rng,
                          std::vector<std::size_t>& ancestors);
std::vector<std::size_t> multinomial_resample(std::span<const double> log_weights, std::size_t n_draws,
                                              RandomStream& rng);

using TestFunction = std::function<double(std::span<const double>)>;

/// φ on a finite space, evaluated at the particle's state index.
TestFunction finite_test_function(Vector phi);
TestFunction constant_test_function(double c);

struct StepWorkspace {
  std::vector<double> log_weights;
  std::vector<std::size_t> ancestors;
  std::vector<double> next;
};

template <Substrate S>
ParticleState init_particles(const S& substrate, std::size_t n_particles, const RandomStream& stream) {
  if (n_particles == 0) throw ValidationError("particle count must be at least 1");
  ParticleState state;
  state.dim = substrate.dim();
  state.n_particles = n_particles;
  state.positions.resize(n_particles * state.dim);
  for (std::size_t i = 0; i < n_particles; ++i) {
    RandomStream rng = stream.substream(0, i, DrawPurpose::init);
    substrate.sample_initial(rng, std::span<double>(state.positions.data() + i * state.dim, state.dim));
  }
  return state;
}

/// One selection-mutation step from time n-1 to n, in place.
template <Substrate S>
void advance(ParticleState& state, const S& substrate, const RandomStream& stream, StepWorkspace& ws) {
  const std::size_t big_n = state.n_particles;
  const std::size_t d = state.dim;
  const std::size_t prev = state.time;
  const std::size_t n = prev + 1;
  if (const auto limit = substrate.horizon_limit(); limit && n > *limit) {
    std::ostringstream os;
    os << "step " << n << " needs G_" << prev << " but the model defines only " << *limit << " steps";
    throw ValidationError(os.str());
  }
  ws.log_weights.resize(big_n);
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < big_n; ++j) {
    ws.log_weights[j] = substrate.log_potential(prev, state.particle(j));
    shift = std::max(shift, ws.log_weights[j]);
  }
  if (!std::isfinite(shift)) {
    std::ostringstream os;
    os << "all potentials underflowed at step " << prev << " (max log-potential " << shift << ")";
    throw NumericalError(os.str());
  }
  double mass = 0.0;
  for (double lw : ws.log_weights) mass += std::exp(lw - shift);
  state.log_z += shift + std::log(mass) - std::log(static_cast<double>(big_n));

  RandomStream selection = stream.substream(n, 0, DrawPurpose::resample);
  multinomial_resample(ws.log_weights, big_n, selection, ws.ancestors);

  ws.next.resize(big_n * d);
  for (std::size_t i = 0; i < big_n; ++i) {
    RandomStream rng = stream.substream(n, i, DrawPurpose::mutate);
    substrate.mutate(n, state.particle(ws.ancestors[i]), rng, std::span<double>(ws.next.data() + i * d, d));
  }
  state.positions.swap(ws.next);
  state.time = n;
}

template <Substrate S>
ParticleState step(ParticleState state, const S& substrate, const RandomStream& stream) {
  StepWorkspace ws;
  advance(state, substrate, stream, ws);
  return state;
}

/// π_p^N(φ) for each φ and log Z_p^N, for p = 0..n.
struct FilterTrajectory {
  std::vector<std::vector<double>> estimates;
  std::vector<double> log_z;
};

inline std::vector<double> particle_means(const ParticleState& state, std::span<const TestFunction> phis) {
  std::vector<double> out(phis.size(), 0.0);
  for (std::size_t k = 0; k < phis.size(); ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < state.n_particles; ++i) s += phis[k](state.particle(i));
    out[k] = s / static_cast<double>(state.n_particles);
  }
  return out;
}

template <Substrate S>
FilterTrajectory run_filter(const S& substrate, std::size_t n_particles, std::size_t n, const RandomStream& stream,
                            std::span<const TestFunction> phis) {
  if (const auto limit = substrate.horizon_limit(); limit && n > *limit) {
    std::ostringstream os;
    os << "observation record covers " << *limit << " steps, but n = " << n;
    throw ValidationError(os.str());
  }
  FilterTrajectory out;
  out.estimates.reserve(n + 1);
  out.log_z.reserve(n + 1);
  ParticleState state = init_particles(substrate, n_particles, stream);
  StepWorkspace ws;
  for (std::size_t p = 0;; ++p) {
    out.estimates.push_back(particle_means(state, phis));
    out.log_z.push_back(state.log_z);
    if (p == n) break;
    advance(state, substrate, stream, ws);
  }
  return out;
}

}  // namespace fkstab
