#include "fkstab/model_io.hpp"

#include <algorithm>
#include <string>

#include "fkstab/error.hpp"

namespace fkstab {
namespace detail {

void require_object(const json& j, std::string_view context) {
  if (!j.is_object()) throw ValidationError(std::string(context) + " must be a JSON object");
}

void require_known_keys(const json& j, std::initializer_list<std::string_view> allowed,
                        std::string_view context) {
  require_object(j, context);
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ValidationError("unknown key '" + key + "' in " + std::string(context));
  }
}

const json& require_key(const json& j, std::string_view key, std::string_view context) {
  const auto it = j.find(std::string(key));
  if (it == j.end())
    throw ValidationError("missing key '" + std::string(key) + "' in " + std::string(context));
  return *it;
}

}  // namespace detail

using detail::require_key;
using detail::require_known_keys;
using detail::value_or;

namespace {

const char* drift_name(DriftKind k) {
  switch (k) {
    case DriftKind::linear: return "linear";
    case DriftKind::saturating: return "saturating";
    case DriftKind::zero: return "zero";
  }
  return "?";
}

DriftKind drift_from(const std::string& s) {
  if (s == "linear") return DriftKind::linear;
  if (s == "saturating") return DriftKind::saturating;
  if (s == "zero") return DriftKind::zero;
  throw ValidationError("unknown drift kind '" + s + "'");
}

const char* map_name(MapKind k) {
  switch (k) {
    case MapKind::zero: return "zero";
    case MapKind::identity: return "identity";
    case MapKind::sine: return "sine";
    case MapKind::tanh: return "tanh";
  }
  return "?";
}

MapKind map_from(const std::string& s) {
  if (s == "zero") return MapKind::zero;
  if (s == "identity") return MapKind::identity;
  if (s == "sine") return MapKind::sine;
  if (s == "tanh") return MapKind::tanh;
  throw ValidationError("unknown map kind '" + s + "'");
}

const char* variant_name(ObsVariant v) {
  switch (v) {
    case ObsVariant::binary: return "binary";
    case ObsVariant::bounded_gaussian: return "bounded-gaussian";
    case ObsVariant::stoch_vol: return "stoch-vol";
  }
  return "?";
}

ObsVariant variant_from(const std::string& s) {
  if (s == "binary") return ObsVariant::binary;
  if (s == "bounded-gaussian") return ObsVariant::bounded_gaussian;
  if (s == "stoch-vol") return ObsVariant::stoch_vol;
  throw ValidationError("unknown observation variant '" + s + "'");
}

json map_to_json(const MapSpec& m) { return {{"kind", map_name(m.kind)}, {"amplitude", m.amplitude}}; }

MapSpec map_from_json(const json& j, const MapSpec& fallback) {
  require_known_keys(j, {"kind", "amplitude"}, "map");
  MapSpec m = fallback;
  if (j.contains("kind")) m.kind = map_from(j.at("kind").get<std::string>());
  m.amplitude = value_or(j, "amplitude", m.amplitude);
  return m;
}

}  // namespace

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) data.push_back(m(i, k));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j, std::string_view context) {
  require_known_keys(j, {"rows", "cols", "data"}, context);
  const auto rows = require_key(j, "rows", context).get<Eigen::Index>();
  const auto cols = require_key(j, "cols", context).get<Eigen::Index>();
  const auto data = require_key(j, "data", context).get<std::vector<double>>();
  if (rows <= 0 || cols <= 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ValidationError(std::string(context) + ": data length does not match rows*cols");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return m;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j, std::string_view context) {
  if (!j.is_array()) throw ValidationError(std::string(context) + " must be an array of numbers");
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json to_json(const FiniteModel& model) {
  json j;
  j["family"] = "finite";
  j["transitions"] = json::array();
  for (const auto& m : model.transitions()) j["transitions"].push_back(matrix_to_json(m));
  j["log_potentials"] = json::array();
  for (const auto& g : model.log_potentials()) j["log_potentials"].push_back(vector_to_json(g));
  j["initial"] = vector_to_json(model.initial());
  if (model.lyapunov()) j["lyapunov"] = vector_to_json(*model.lyapunov());
  j["states"] = model.states();
  return j;
}

FiniteModel finite_model_from_json(const json& j) {
  require_known_keys(j, {"family", "transitions", "potentials", "log_potentials", "initial", "lyapunov", "states"},
                     "finite model");
  std::vector<Matrix> ms;
  const json& tj = require_key(j, "transitions", "finite model");
  if (!tj.is_array()) throw ValidationError("transitions must be a list of matrices");
  for (const auto& m : tj) ms.push_back(matrix_from_json(m, "transition matrix"));
  const bool has_g = j.contains("potentials");
  const bool has_lg = j.contains("log_potentials");
  if (has_g == has_lg) throw ValidationError("finite model needs exactly one of 'potentials' or 'log_potentials'");
  std::vector<Vector> gs;
  for (const auto& g : j.at(has_g ? "potentials" : "log_potentials")) gs.push_back(vector_from_json(g, "potential"));
  Vector mu = vector_from_json(require_key(j, "initial", "finite model"), "initial");
  std::optional<Vector> v;
  if (j.contains("lyapunov")) v = vector_from_json(j.at("lyapunov"), "lyapunov");
  std::vector<double> states = value_or(j, "states", std::vector<double>{});
  if (has_g) return build_finite_model(std::move(ms), std::move(gs), std::move(mu), std::move(v), std::move(states));
  return build_finite_model_log(std::move(ms), std::move(gs), std::move(mu), std::move(v), std::move(states));
}

json to_json(const ObservationConstraint& c) {
  json j{{"kind", to_string(c.kind())}, {"description", c.description()}};
  switch (c.kind()) {
    case ObservationConstraint::Kind::all: break;
    case ObservationConstraint::Kind::box: {
      json b = json::array();
      for (const auto& [lo, hi] : c.bounds()) b.push_back({lo, hi});
      j["bounds"] = b;
      break;
    }
    case ObservationConstraint::Kind::annulus:
      j["lower"] = c.lower();
      j["upper"] = c.upper();
      break;
    case ObservationConstraint::Kind::finite_set: j["points"] = c.points(); break;
  }
  return j;
}

ObservationConstraint constraint_from_json(const json& j) {
  require_known_keys(j, {"kind", "description", "bounds", "lower", "upper", "points", "half_width", "dim"}, "y_star");
  const auto kind = require_key(j, "kind", "y_star").get<std::string>();
  const auto description = value_or(j, "description", std::string{});
  if (kind == "all") return ObservationConstraint::all(description.empty() ? "all observations" : description);
  if (kind == "box") {
    if (j.contains("half_width")) {
      auto c = ObservationConstraint::centered_box(value_or<std::size_t>(j, "dim", 1), j.at("half_width").get<double>());
      return description.empty() ? c : ObservationConstraint::box(c.bounds(), description);
    }
    std::vector<std::pair<double, double>> bounds;
    for (const auto& b : require_key(j, "bounds", "box y_star")) {
      if (!b.is_array() || b.size() != 2) throw ValidationError("box bounds must be [lower, upper] pairs");
      bounds.emplace_back(b[0].get<double>(), b[1].get<double>());
    }
    return ObservationConstraint::box(std::move(bounds), description);
  }
  if (kind == "annulus")
    return ObservationConstraint::annulus(require_key(j, "lower", "annulus").get<double>(),
                                          require_key(j, "upper", "annulus").get<double>(), description);
  if (kind == "finite-set")
    return ObservationConstraint::finite_set(require_key(j, "points", "finite-set").get<std::vector<std::vector<double>>>(),
                                             description);
  throw ValidationError("unknown y_star kind '" + kind + "'");
}

json to_json(const LyapunovSpec& s) {
  if (s.kind == LyapunovSpec::Kind::abs_linear) return {{"kind", "abs-linear"}, {"c", s.c}};
  return {{"kind", "quadratic"}, {"delta0", s.delta0}};
}

LyapunovSpec lyapunov_spec_from_json(const json& j) {
  require_known_keys(j, {"kind", "c", "delta0"}, "lyapunov");
  LyapunovSpec s;
  const auto kind = require_key(j, "kind", "lyapunov").get<std::string>();
  if (kind == "abs-linear") s.kind = LyapunovSpec::Kind::abs_linear;
  else if (kind == "quadratic") s.kind = LyapunovSpec::Kind::quadratic;
  else throw ValidationError("unknown lyapunov kind '" + kind + "'");
  s.c = value_or(j, "c", s.c);
  s.delta0 = value_or(j, "delta0", s.delta0);
  return s;
}

json to_json(const ModelParams& params) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearGaussianParams>) {
          return {{"family", "linear-gaussian"}, {"a", p.a}, {"q", p.q}, {"r", p.r}, {"m0", p.m0}, {"p0", p.p0}};
        } else if constexpr (std::is_same_v<T, ErgodicDriftParams>) {
          json j{{"family", "ergodic-drift"},
                 {"dim", p.dim},
                 {"drift", {{"kind", drift_name(p.drift.kind)}, {"kappa", p.drift.kappa}}},
                 {"diffusion",
                  {{"scale", p.diffusion.scale},
                   {"amplitude", p.diffusion.amplitude},
                   {"lower", p.diffusion.lower},
                   {"upper", p.diffusion.upper}}},
                 {"obs", {{"variant", variant_name(p.obs)}, {"map", map_to_json(p.obs_map)}, {"beta", p.beta}}},
                 {"m0", p.m0},
                 {"p0", p.p0},
                 {"lyapunov_c", p.lyapunov_c}};
          j["y_star"] = to_json(p.y_star ? *p.y_star : default_y_star(p));
          return j;
        } else {
          return {{"family", "random-walk"}, {"dim", p.dim},   {"map", map_to_json(p.obs_map)},
                  {"sigma_y", p.sigma_y},    {"delta0", p.delta0}, {"m0", p.m0},
                  {"p0", p.p0},              {"y_star", to_json(p.y_star)}};
        }
      },
      params);
}

ModelParams model_params_from_json(const json& j) {
  const auto family = require_key(j, "family", "model").get<std::string>();
  if (family == "linear-gaussian") {
    require_known_keys(j, {"family", "a", "q", "r", "m0", "p0"}, "linear-gaussian model");
    LinearGaussianParams p;
    p.a = value_or(j, "a", p.a);
    p.q = value_or(j, "q", p.q);
    p.r = value_or(j, "r", p.r);
    p.m0 = value_or(j, "m0", p.m0);
    p.p0 = value_or(j, "p0", p.p0);
    build_linear_gaussian(p);
    return p;
  }
  if (family == "ergodic-drift") {
    require_known_keys(j, {"family", "dim", "drift", "diffusion", "obs", "m0", "p0", "lyapunov_c", "y_star"},
                       "ergodic-drift model");
    ErgodicDriftParams p;
    p.dim = value_or(j, "dim", p.dim);
    if (j.contains("drift")) {
      const json& d = j.at("drift");
      require_known_keys(d, {"kind", "kappa"}, "drift");
      if (d.contains("kind")) p.drift.kind = drift_from(d.at("kind").get<std::string>());
      p.drift.kappa = value_or(d, "kappa", p.drift.kappa);
    }
    if (j.contains("diffusion")) {
      const json& d = j.at("diffusion");
      require_known_keys(d, {"scale", "amplitude", "lower", "upper"}, "diffusion");
      p.diffusion.scale = value_or(d, "scale", p.diffusion.scale);
      p.diffusion.amplitude = value_or(d, "amplitude", p.diffusion.amplitude);
      p.diffusion.lower = value_or(d, "lower", p.diffusion.lower);
      p.diffusion.upper = value_or(d, "upper", p.diffusion.upper);
    }
    if (j.contains("obs")) {
      const json& o = j.at("obs");
      require_known_keys(o, {"variant", "map", "beta"}, "obs");
      if (o.contains("variant")) p.obs = variant_from(o.at("variant").get<std::string>());
      if (o.contains("map")) p.obs_map = map_from_json(o.at("map"), p.obs_map);
      p.beta = value_or(o, "beta", p.beta);
    }
    p.m0 = value_or(j, "m0", p.m0);
    p.p0 = value_or(j, "p0", p.p0);
    p.lyapunov_c = value_or(j, "lyapunov_c", p.lyapunov_c);
    p.y_star = j.contains("y_star") ? constraint_from_json(j.at("y_star")) : default_y_star(p);
    build_ergodic_drift_model(p);
    return p;
  }
  if (family == "random-walk") {
    require_known_keys(j, {"family", "dim", "map", "sigma_y", "delta0", "m0", "p0", "y_star"}, "random-walk model");
    RandomWalkParams p;
    p.dim = value_or(j, "dim", p.dim);
    if (j.contains("map")) p.obs_map = map_from_json(j.at("map"), p.obs_map);
    p.sigma_y = value_or(j, "sigma_y", p.sigma_y);
    p.delta0 = value_or(j, "delta0", p.delta0);
    p.m0 = value_or(j, "m0", p.m0);
    p.p0 = value_or(j, "p0", p.p0);
    p.y_star = j.contains("y_star") ? constraint_from_json(j.at("y_star")) : ObservationConstraint::centered_box(p.dim, 5.0);
    build_random_walk_model(p);
    return p;
  }
  throw ValidationError("unknown model family '" + family + "'");
}

ModelDefinition model_from_json(const json& j) {
  detail::require_object(j, "model");
  if (require_key(j, "family", "model").get<std::string>() == "finite") return finite_model_from_json(j);
  return model_params_from_json(j);
}

json model_to_json(const ModelDefinition& model) {
  return std::visit([](const auto& m) { return to_json(m); }, model);
}

}  // namespace fkstab
