#include "fkstab/hmm_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fkstab/error.hpp"
#include "fkstab/gaussian.hpp"

namespace fkstab {
namespace {

template <class... Parts>
[[noreturn]] void reject(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw ValidationError(os.str());
}

double euclidean_norm(std::span<const double> y) {
  double s = 0.0;
  for (double v : y) s += v * v;
  return std::sqrt(s);
}

// log p(x) with p the logistic function, stable in both tails.
double log_logistic(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double apply_map(const MapSpec& h, double x) {
  switch (h.kind) {
    case MapKind::zero: return 0.0;
    case MapKind::identity: return h.amplitude * x;
    case MapKind::sine: return h.amplitude * std::sin(x);
    case MapKind::tanh: return h.amplitude * std::tanh(x);
  }
  return 0.0;
}

double apply_drift(const DriftSpec& b, double x) {
  switch (b.kind) {
    case DriftKind::linear: return -b.kappa * x;
    case DriftKind::saturating: return -b.kappa * x * std::abs(x) / (1.0 + std::abs(x));
    case DriftKind::zero: return 0.0;
  }
  return 0.0;
}

double diffusion_at(const DiffusionSpec& s, std::span<const double> x) {
  return s.scale * (1.0 + s.amplitude * std::tanh(x[0]));
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) reject(what, " must be strictly positive, got ", v);
}

std::function<void(RandomStream&, std::span<double>)> gaussian_initial(double m0, double p0) {
  const double sd = std::sqrt(p0);
  return [m0, sd](RandomStream& rng, std::span<double> x) {
    for (double& xi : x) xi = m0 + sd * standard_normal(rng);
  };
}

double gaussian_obs_log_likelihood(std::span<const double> mean, std::span<const double> y, double var) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += log_normal_pdf(y[i], mean[i], var);
  return s;
}

}  // namespace

const char* to_string(ObservationConstraint::Kind kind) {
  switch (kind) {
    case ObservationConstraint::Kind::all: return "all";
    case ObservationConstraint::Kind::box: return "box";
    case ObservationConstraint::Kind::annulus: return "annulus";
    case ObservationConstraint::Kind::finite_set: return "finite-set";
  }
  return "?";
}

ObservationConstraint ObservationConstraint::all(std::string description) {
  ObservationConstraint c;
  c.kind_ = Kind::all;
  c.description_ = std::move(description);
  return c;
}

ObservationConstraint ObservationConstraint::box(std::vector<std::pair<double, double>> bounds,
                                                 std::string description) {
  if (bounds.empty()) reject("box constraint needs at least one dimension");
  for (std::size_t i = 0; i < bounds.size(); ++i)
    if (!(bounds[i].first <= bounds[i].second) || !std::isfinite(bounds[i].first) || !std::isfinite(bounds[i].second))
      reject("box bounds for dimension ", i, " are not a finite interval");
  ObservationConstraint c;
  c.kind_ = Kind::box;
  c.bounds_ = std::move(bounds);
  if (description.empty()) {
    std::ostringstream os;
    os << "box";
    for (const auto& [lo, hi] : c.bounds_) os << " [" << lo << ", " << hi << "]";
    description = os.str();
  }
  c.description_ = std::move(description);
  return c;
}

ObservationConstraint ObservationConstraint::centered_box(std::size_t dim, double half_width) {
  require_positive(half_width, "box half-width");
  return box(std::vector<std::pair<double, double>>(dim, {-half_width, half_width}));
}

ObservationConstraint ObservationConstraint::annulus(double lower, double upper, std::string description) {
  if (!(lower > 0.0 && lower < upper && std::isfinite(upper)))
    reject("annulus needs 0 < lower < upper, got [", lower, ", ", upper, "]");
  ObservationConstraint c;
  c.kind_ = Kind::annulus;
  c.lower_ = lower;
  c.upper_ = upper;
  if (description.empty()) {
    std::ostringstream os;
    os << "annulus " << lower << " <= |y| <= " << upper;
    description = os.str();
  }
  c.description_ = std::move(description);
  return c;
}

ObservationConstraint ObservationConstraint::finite_set(std::vector<std::vector<double>> points,
                                                        std::string description) {
  if (points.empty()) reject("finite observation set is empty");
  for (const auto& p : points)
    if (p.size() != points.front().size()) reject("finite observation set mixes dimensions");
  ObservationConstraint c;
  c.kind_ = Kind::finite_set;
  c.points_ = std::move(points);
  if (description.empty()) description = "finite set of " + std::to_string(c.points_.size()) + " points";
  c.description_ = std::move(description);
  return c;
}

bool ObservationConstraint::contains(std::span<const double> y) const {
  for (double v : y)
    if (!std::isfinite(v)) return false;
  switch (kind_) {
    case Kind::all: return true;
    case Kind::box:
      if (y.size() != bounds_.size()) return false;
      for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < bounds_[i].first || y[i] > bounds_[i].second) return false;
      return true;
    case Kind::annulus: {
      const double r = euclidean_norm(y);
      return r >= lower_ && r <= upper_;
    }
    case Kind::finite_set:
      for (const auto& p : points_)
        if (std::equal(p.begin(), p.end(), y.begin(), y.end())) return true;
      return false;
  }
  return false;
}

double LyapunovSpec::operator()(std::span<const double> x) const {
  if (kind == Kind::abs_linear) return 1.0 + c * euclidean_norm(x);
  double s = 0.0;
  for (double v : x) s += v * v;
  return 1.0 + quadratic_coefficient() * s;
}

HmmModel::HmmModel(Parts parts) : parts_(std::move(parts)) {
  if (parts_.state_dim == 0) reject("state dimension must be positive");
  if (parts_.obs_dim == 0) reject("observation dimension must be positive");
  if (!parts_.sample_initial || !parts_.obs_log_likelihood || !parts_.sample_obs)
    reject("model '", parts_.family, "' is missing a sampler or likelihood");
}

GaussianKernelMoments HmmModel::signal_moments(Point x) const {
  if (!parts_.signal_moments) throw ValidationError("model '" + parts_.family + "' has no signal density");
  return parts_.signal_moments(x);
}

void HmmModel::sample_signal(Point x, RandomStream& rng, Out next) const {
  const GaussianKernelMoments k = parts_.signal_moments(x);
  for (std::size_t i = 0; i < next.size(); ++i) next[i] = k.mean[i] + k.sd * standard_normal(rng);
}

double HmmModel::signal_log_density(Point x, Point next) const {
  const GaussianKernelMoments k = signal_moments(x);
  return gaussian_obs_log_likelihood(k.mean, next, k.sd * k.sd);
}

double logistic(double x) { return std::exp(log_logistic(x)); }

HmmModel build_linear_gaussian(const LinearGaussianParams& p) {
  require_positive(p.q, "signal noise variance q");
  require_positive(p.r, "observation noise variance r");
  require_positive(p.p0, "prior variance p0");
  if (!std::isfinite(p.a) || !std::isfinite(p.m0)) reject("linear-gaussian coefficients must be finite");
  HmmModel::Parts parts;
  parts.family = "linear-gaussian";
  parts.sample_initial = gaussian_initial(p.m0, p.p0);
  const double a = p.a;
  const double sd = std::sqrt(p.q);
  parts.signal_moments = [a, sd](HmmModel::Point x) { return GaussianKernelMoments{{a * x[0]}, sd}; };
  const double r = p.r;
  parts.obs_log_likelihood = [r](HmmModel::Point x, HmmModel::Point y) { return log_normal_pdf(y[0], x[0], r); };
  const double obs_sd = std::sqrt(p.r);
  parts.sample_obs = [obs_sd](HmmModel::Point x, RandomStream& rng, HmmModel::Out y) {
    y[0] = x[0] + obs_sd * standard_normal(rng);
  };
  parts.params = p;
  return HmmModel(std::move(parts));
}

ObservationConstraint default_y_star(const ErgodicDriftParams& p) {
  switch (p.obs) {
    case ObsVariant::binary: {
      if (p.dim > 16) reject("binary observations support at most 16 dimensions");
      std::vector<std::vector<double>> pts;
      for (std::size_t mask = 0; mask < (std::size_t{1} << p.dim); ++mask) {
        std::vector<double> y(p.dim);
        for (std::size_t i = 0; i < p.dim; ++i) y[i] = static_cast<double>((mask >> i) & 1U);
        pts.push_back(std::move(y));
      }
      return ObservationConstraint::finite_set(std::move(pts), "all binary observations {0,1}^d");
    }
    case ObsVariant::bounded_gaussian: return ObservationConstraint::centered_box(p.dim, 5.0);
    case ObsVariant::stoch_vol: return ObservationConstraint::annulus(0.5, 4.0);
  }
  return ObservationConstraint::all();
}

HmmModel build_ergodic_drift_model(const ErgodicDriftParams& p) {
  if (p.dim == 0) reject("state dimension must be positive");
  if (p.drift.kind != DriftKind::zero && !(p.drift.kappa > 0.0 && p.drift.kappa <= 1.0))
    reject("drift coefficient kappa must lie in (0, 1], got ", p.drift.kappa);
  require_positive(p.diffusion.scale, "diffusion scale");
  require_positive(p.diffusion.lower, "diffusion lower bound");
  require_positive(p.p0, "prior variance p0");
  require_positive(p.lyapunov_c, "lyapunov coefficient c");
  // Two-sided bound on σ probed on a grid; σ only depends on x_1.
  for (int i = -2000; i <= 2000; ++i) {
    const double x = 0.025 * i;
    const double s = diffusion_at(p.diffusion, std::span<const double>(&x, 1));
    if (s < p.diffusion.lower || s > p.diffusion.upper)
      reject("diffusion sigma(", x, ") = ", s, " violates the bound [", p.diffusion.lower, ", ",
             p.diffusion.upper, "]");
  }
  if (p.obs == ObsVariant::stoch_vol) require_positive(p.beta, "stochastic volatility beta");
  if (p.obs == ObsVariant::bounded_gaussian && p.obs_map.kind == MapKind::identity)
    reject("bounded-H gaussian observations need a bounded map H (zero, sine or tanh)");

  HmmModel::Parts parts;
  parts.family = "ergodic-drift";
  parts.state_dim = p.dim;
  parts.obs_dim = p.dim;
  parts.sample_initial = gaussian_initial(p.m0, p.p0);
  const DriftSpec drift = p.drift;
  const DiffusionSpec diffusion = p.diffusion;
  parts.signal_moments = [drift, diffusion](HmmModel::Point x) {
    GaussianKernelMoments k;
    k.mean.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) k.mean[i] = x[i] + apply_drift(drift, x[i]);
    k.sd = diffusion_at(diffusion, x);
    return k;
  };
  switch (p.obs) {
    case ObsVariant::binary:
      parts.obs_log_likelihood = [](HmmModel::Point x, HmmModel::Point y) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (y[i] == 1.0) s += log_logistic(x[i]);
          else if (y[i] == 0.0) s += log_logistic(-x[i]);
          else return -std::numeric_limits<double>::infinity();
        }
        return s;
      };
      parts.sample_obs = [](HmmModel::Point x, RandomStream& rng, HmmModel::Out y) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = rng.uniform() < logistic(x[i]) ? 1.0 : 0.0;
      };
      break;
    case ObsVariant::bounded_gaussian: {
      const MapSpec h = p.obs_map;
      parts.obs_log_likelihood = [h](HmmModel::Point x, HmmModel::Point y) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += log_normal_pdf(y[i], apply_map(h, x[i]), 1.0);
        return s;
      };
      parts.sample_obs = [h](HmmModel::Point x, RandomStream& rng, HmmModel::Out y) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply_map(h, x[i]) + standard_normal(rng);
      };
      break;
    }
    case ObsVariant::stoch_vol: {
      const double beta = p.beta;
      parts.obs_log_likelihood = [beta](HmmModel::Point x, HmmModel::Point y) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
          s += -kLogSqrt2Pi - std::log(beta) - 0.5 * x[i] - 0.5 * y[i] * y[i] * std::exp(-x[i]) / (beta * beta);
        return s;
      };
      parts.sample_obs = [beta](HmmModel::Point x, RandomStream& rng, HmmModel::Out y) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = beta * std::exp(0.5 * x[i]) * standard_normal(rng);
      };
      break;
    }
  }
  parts.y_star = p.y_star ? *p.y_star : default_y_star(p);
  parts.lyapunov = LyapunovSpec{LyapunovSpec::Kind::abs_linear, p.lyapunov_c, 2.0};
  parts.params = p;
  return HmmModel(std::move(parts));
}

HmmModel build_random_walk_model(const RandomWalkParams& p) {
  if (p.dim == 0) reject("state dimension must be positive");
  require_positive(p.sigma_y, "observation noise sigma_y");
  require_positive(p.p0, "prior variance p0");
  if (!(p.delta0 > 1.0)) reject("delta0 must exceed 1, got ", p.delta0);
  if (!p.y_star.compact()) reject("compact Y* required for the random-walk family");

  HmmModel::Parts parts;
  parts.family = "random-walk";
  parts.state_dim = p.dim;
  parts.obs_dim = p.dim;
  parts.sample_initial = gaussian_initial(p.m0, p.p0);
  parts.signal_moments = [](HmmModel::Point x) {
    return GaussianKernelMoments{std::vector<double>(x.begin(), x.end()), 1.0};
  };
  const MapSpec h = p.obs_map;
  const double var = p.sigma_y * p.sigma_y;
  parts.obs_log_likelihood = [h, var](HmmModel::Point x, HmmModel::Point y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += log_normal_pdf(y[i], apply_map(h, x[i]), var);
    return s;
  };
  const double sd = p.sigma_y;
  parts.sample_obs = [h, sd](HmmModel::Point x, RandomStream& rng, HmmModel::Out y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply_map(h, x[i]) + sd * standard_normal(rng);
  };
  parts.y_star = p.y_star;
  parts.lyapunov = LyapunovSpec{LyapunovSpec::Kind::quadratic, 1.0, p.delta0};
  parts.params = p;
  return HmmModel(std::move(parts));
}

HmmModel build_model(const ModelParams& params) {
  return std::visit(
      [](const auto& p) -> HmmModel {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearGaussianParams>) return build_linear_gaussian(p);
        else if constexpr (std::is_same_v<T, ErgodicDriftParams>) return build_ergodic_drift_model(p);
        else return build_random_walk_model(p);
      },
      params);
}

SimulatedPath simulate_hmm(const HmmModel& model, std::size_t n, std::uint64_t seed,
                           const SimulationOptions& options) {
  RandomStream rng = RandomStream(seed, 0).substream(0, 0, DrawPurpose::simulate);
  SimulatedPath path;
  path.x.assign(n + 1, std::vector<double>(model.state_dim()));
  path.y.assign(n + 1, std::vector<double>(model.obs_dim()));
  path.acceptance_rate.assign(n + 1, 1.0);
  for (std::size_t t = 0; t <= n; ++t) {
    if (t == 0) model.sample_initial(rng, path.x[0]);
    else model.sample_signal(path.x[t - 1], rng, path.x[t]);
    std::size_t attempts = 0;
    for (;;) {
      model.sample_obs(path.x[t], rng, path.y[t]);
      ++attempts;
      if (!options.constrain_to_y_star || model.y_star().contains(path.y[t])) break;
      if (attempts >= options.rejection_cap) {
        std::ostringstream os;
        os << "observation at step " << t << " stayed outside Y* (" << model.y_star().description()
           << ") for " << attempts << " draws; acceptance rate 0/" << attempts;
        throw Error(os.str());
      }
    }
    path.acceptance_rate[t] = 1.0 / static_cast<double>(attempts);
  }
  return path;
}

double log_potential(const HmmModel& model, std::size_t n, std::span<const double> x,
                     std::span<const double> y_n) {
  if (y_n.size() != model.obs_dim()) reject("observation ", n, " has dimension ", y_n.size());
  if (!model.y_star().contains(y_n)) reject("observation ", n, " lies outside Y* (", model.y_star().description(), ")");
  const double lg = model.obs_log_likelihood(x, y_n);
  if (!std::isfinite(lg)) {
    std::ostringstream os;
    os << "log-potential at step " << n << " is not finite";
    throw NumericalError(os.str());
  }
  return lg;
}

}  // namespace fkstab
