#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fkstab/finite_model.hpp"
#include "fkstab/finite_oracle.hpp"
#include "fkstab/hmm_model.hpp"

namespace fkstab {

enum class CertificateStatus { certified, violated, inconclusive };
const char* to_string(CertificateStatus status);

enum class QuadratureRule { simpson, trapezoid };

struct GridSpec {
  double radius = 12.0;
  std::size_t points = 512;
  QuadratureRule rule = QuadratureRule::simpson;
  bool operator==(const GridSpec&) const = default;
};

/// A state (and observation, step) at which a checked inequality fails.
struct Witness {
  std::string condition;
  std::vector<double> x;
  std::optional<std::vector<double>> y;
  std::size_t step = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct LevelResult {
  double level = 0.0;
  bool drift_ok = false;
  bool accessible = false;
  bool minorization_ok = false;
  bool majorization_ok = false;
  bool conclusive = true;
  bool certified = false;
  double b = 0.0;
  double log_eps_minus = 0.0;
  double log_eps_plus = 0.0;
  double set_size = 0.0;  // number of states (finite) or Lebesgue measure of C_d
  Vector nu;              // finite models only
  std::vector<std::string> failures;
  std::optional<Witness> witness;

  double eps_minus() const;
  double eps_plus() const;
};

struct DriftCertificate {
  std::string domain;  // "finite", "grid" or "signal"
  std::string lyapunov_description;
  std::optional<Vector> lyapunov;
  std::optional<LyapunovSpec> lyapunov_spec;
  double lyapunov_scale = 1.0;
  double delta = 0.0;
  std::optional<double> d_underline;
  std::vector<LevelResult> levels;
  ObservationConstraint y_star = ObservationConstraint::all();
  CertificateStatus status = CertificateStatus::inconclusive;
  std::vector<std::string> failed_conditions;
  std::optional<Witness> witness;
  double mu_v = 0.0;
  double g_bar = 0.0;
  std::string description;
  std::optional<GridSpec> grid;
  std::vector<std::vector<double>> probes;
  std::vector<double> delta_scan;
  std::optional<double> transfer_alpha;

  const LevelResult& level(double d) const;
};

inline constexpr double kDeltaScan[] = {0.5, 0.2, 0.1, 0.05, 0.02, 0.01};

struct FiniteDriftOptions {
  std::optional<Vector> nu;        // reference measure; uniform on C_d when empty
  std::optional<Vector> lyapunov;  // overrides the model's V; only V >= 0 is required
};

/// Exact (H1)-(H5) check on a finite model over every defined step.
DriftCertificate check_finite_drift(const FiniteModel& model, std::optional<double> delta,
                                    std::span<const double> levels, const FiniteDriftOptions& options = {});

/// Quadrature check of the front-end conditions on a one-dimensional
/// continuous model, sup over y taken on a finite probe set.
DriftCertificate check_grid_drift(const HmmModel& model, const LyapunovSpec& lyapunov, std::optional<double> delta,
                                  std::span<const double> levels, const GridSpec& grid = {},
                                  std::optional<std::vector<std::vector<double>>> probes = std::nullopt);

/// Signal-only drift ∫f(x,dx')v(x') <= v(x)^{1-δ} e^{b_d 1_C(x)} with v = exp(1 + c|x|).
DriftCertificate check_signal_drift(const HmmModel& model, double c, std::optional<double> delta,
                                    std::span<const double> levels, const GridSpec& grid = {});

/// Certificate for v^α with δ0 = δ/2 and levels αd; see README for the
/// reading of the level sets.
DriftCertificate transfer_drift(const DriftCertificate& certificate, double alpha, std::optional<double> g_bar);

/// (δ, d, b_d, ε_d^-, ν_d) of a certified finite level, for the S-kernel drift.
DriftConstants drift_constants(const DriftCertificate& certificate, double level);

/// Default probe set of Y⋆ (33 points per dimension; expanding radii for Y⋆ = all).
std::vector<std::vector<double>> default_probes(const ObservationConstraint& y_star, std::size_t obs_dim);

/// Log of the quadrature estimate of ∫N(x'; m, s²) e^{V(x')} dx' and the
/// closed-form mass outside the window, both in logs.
struct DriftIntegral {
  double log_value = 0.0;
  double log_tail = 0.0;
  double log_exact = 0.0;
};
DriftIntegral drift_integral(double mean, double sd, const LyapunovSpec& lyapunov, std::size_t points,
                             QuadratureRule rule);

nlohmann::json to_json(const DriftCertificate& certificate);
nlohmann::json to_json(const GridSpec& grid);
GridSpec grid_spec_from_json(const nlohmann::json& j);

}  // namespace fkstab
