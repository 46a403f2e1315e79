#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fkstab/random.hpp"

namespace fkstab {

using ObservationRecord = std::vector<std::vector<double>>;

/// The observation set Y⋆ on which stability constants are required.
class ObservationConstraint {
 public:
  enum class Kind { all, box, annulus, finite_set };

  static ObservationConstraint all(std::string description = "all observations");
  static ObservationConstraint box(std::vector<std::pair<double, double>> bounds,
                                   std::string description = {});
  /// Symmetric box [-half_width, half_width]^dim.
  static ObservationConstraint centered_box(std::size_t dim, double half_width);
  /// {y : lower <= |y| <= upper} with 0 < lower < upper.
  static ObservationConstraint annulus(double lower, double upper, std::string description = {});
  static ObservationConstraint finite_set(std::vector<std::vector<double>> points,
                                          std::string description = {});

  Kind kind() const noexcept { return kind_; }
  bool contains(std::span<const double> y) const;
  bool compact() const noexcept { return kind_ != Kind::all; }
  const std::vector<std::pair<double, double>>& bounds() const noexcept { return bounds_; }
  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }
  const std::vector<std::vector<double>>& points() const noexcept { return points_; }
  const std::string& description() const noexcept { return description_; }

  bool operator==(const ObservationConstraint&) const = default;

 private:
  ObservationConstraint() = default;
  Kind kind_ = Kind::all;
  std::vector<std::pair<double, double>> bounds_;
  double lower_ = 0.0;
  double upper_ = 0.0;
  std::vector<std::vector<double>> points_;
  std::string description_;
};

const char* to_string(ObservationConstraint::Kind kind);

struct LinearGaussianParams {
  double a = 0.9;
  double q = 1.0;
  double r = 1.0;
  double m0 = 0.0;
  double p0 = 1.0;
  bool operator==(const LinearGaussianParams&) const = default;
};

enum class DriftKind { linear, saturating, zero };
enum class MapKind { zero, identity, sine, tanh };
enum class ObsVariant { binary, bounded_gaussian, stoch_vol };

/// B(x) = -κx (linear), -κx|x|/(1+|x|) (saturating), or 0.
struct DriftSpec {
  DriftKind kind = DriftKind::linear;
  double kappa = 0.5;
  bool operator==(const DriftSpec&) const = default;
};

/// σ(x) = scale (constant) or scale * (1 + amplitude * tanh(x_1)), checked
/// against the two-sided bound [lower, upper].
struct DiffusionSpec {
  double scale = 1.0;
  double amplitude = 0.0;
  double lower = 0.5;
  double upper = 2.0;
  bool operator==(const DiffusionSpec&) const = default;
};

/// Elementwise H(x) = amplitude * h(x_i).
struct MapSpec {
  MapKind kind = MapKind::tanh;
  double amplitude = 1.0;
  bool operator==(const MapSpec&) const = default;
};

struct ErgodicDriftParams {
  std::size_t dim = 1;
  DriftSpec drift;
  DiffusionSpec diffusion;
  ObsVariant obs = ObsVariant::binary;
  MapSpec obs_map;             // bounded-H gaussian only
  double beta = 1.0;           // stoch-vol only
  double m0 = 0.0;
  double p0 = 1.0;
  double lyapunov_c = 1.0;     // V(x) = 1 + c|x|
  std::optional<ObservationConstraint> y_star;  // family default when empty
  bool operator==(const ErgodicDriftParams&) const = default;
};

struct RandomWalkParams {
  std::size_t dim = 1;
  MapSpec obs_map{MapKind::identity, 1.0};
  double sigma_y = 1.0;
  double delta0 = 2.0;         // V(x) = |x|²/(2(1+δ0)) + 1
  double m0 = 0.0;
  double p0 = 1.0;
  ObservationConstraint y_star = ObservationConstraint::centered_box(1, 5.0);
  bool operator==(const RandomWalkParams&) const = default;
};

using ModelParams = std::variant<LinearGaussianParams, ErgodicDriftParams, RandomWalkParams>;

/// V(x) = 1 + c|x| (abs_linear) or 1 + |x|²/(2(1+δ0)) (quadratic).
struct LyapunovSpec {
  enum class Kind { abs_linear, quadratic };
  Kind kind = Kind::abs_linear;
  double c = 1.0;
  double delta0 = 2.0;

  double operator()(std::span<const double> x) const;
  /// Exponent coefficient of the quadratic form, 1/(2(1+δ0)).
  double quadratic_coefficient() const { return 0.5 / (1.0 + delta0); }
  bool operator==(const LyapunovSpec&) const = default;
};

/// Gaussian signal kernel f(x,·) = N(mean(x), sd(x)² I).
struct GaussianKernelMoments {
  std::vector<double> mean;
  double sd = 1.0;
};

/// Continuous-state HMM. Immutable after construction; every random draw
/// comes from the caller's stream.
class HmmModel {
 public:
  using Point = std::span<const double>;
  using Out = std::span<double>;

  struct Parts {
    std::string family;
    std::size_t state_dim = 1;
    std::size_t obs_dim = 1;
    std::function<void(RandomStream&, Out)> sample_initial;
    std::function<GaussianKernelMoments(Point)> signal_moments;
    std::function<double(Point, Point)> obs_log_likelihood;
    std::function<void(Point, RandomStream&, Out)> sample_obs;
    ObservationConstraint y_star = ObservationConstraint::all();
    LyapunovSpec lyapunov;
    ModelParams params;
  };

  explicit HmmModel(Parts parts);

  const std::string& family() const noexcept { return parts_.family; }
  std::size_t state_dim() const noexcept { return parts_.state_dim; }
  std::size_t obs_dim() const noexcept { return parts_.obs_dim; }
  const ObservationConstraint& y_star() const noexcept { return parts_.y_star; }
  const LyapunovSpec& default_lyapunov() const noexcept { return parts_.lyapunov; }
  const ModelParams& params() const noexcept { return parts_.params; }
  bool has_signal_density() const noexcept { return static_cast<bool>(parts_.signal_moments); }

  void sample_initial(RandomStream& rng, Out x) const { parts_.sample_initial(rng, x); }
  GaussianKernelMoments signal_moments(Point x) const;
  void sample_signal(Point x, RandomStream& rng, Out next) const;
  double signal_log_density(Point x, Point next) const;
  double obs_log_likelihood(Point x, Point y) const { return parts_.obs_log_likelihood(x, y); }
  void sample_obs(Point x, RandomStream& rng, Out y) const { parts_.sample_obs(x, rng, y); }

 private:
  Parts parts_;
};

HmmModel build_linear_gaussian(const LinearGaussianParams& params);
HmmModel build_ergodic_drift_model(const ErgodicDriftParams& params);
HmmModel build_random_walk_model(const RandomWalkParams& params);
HmmModel build_model(const ModelParams& params);

/// Default Y⋆ of the ergodic-drift family for the given variant.
ObservationConstraint default_y_star(const ErgodicDriftParams& params);

struct SimulatedPath {
  ObservationRecord x;
  ObservationRecord y;
  std::vector<double> acceptance_rate;  // per step; 1 when unconstrained
};

struct SimulationOptions {
  bool constrain_to_y_star = false;
  std::size_t rejection_cap = 10000;
};

/// Signal and observation paths of length n + 1, deterministic in seed.
SimulatedPath simulate_hmm(const HmmModel& model, std::size_t n, std::uint64_t seed,
                           const SimulationOptions& options = {});

/// log g(x, y_n); throws when y_n lies outside Y⋆.
double log_potential(const HmmModel& model, std::size_t n, std::span<const double> x,
                     std::span<const double> y_n);

double logistic(double x);

}  // namespace fkstab
