#pragma once

#include <initializer_list>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "fkstab/finite_model.hpp"
#include "fkstab/hmm_model.hpp"

namespace fkstab {

using json = nlohmann::json;

/// A model block from a config: an enumerated finite model or the
/// parameters of one of the continuous families.
using ModelDefinition = std::variant<FiniteModel, ModelParams>;

json to_json(const FiniteModel& model);
json to_json(const ModelParams& params);
json to_json(const ObservationConstraint& constraint);
json to_json(const LyapunovSpec& spec);
json model_to_json(const ModelDefinition& model);

FiniteModel finite_model_from_json(const json& j);
ModelParams model_params_from_json(const json& j);
ObservationConstraint constraint_from_json(const json& j);
LyapunovSpec lyapunov_spec_from_json(const json& j);
ModelDefinition model_from_json(const json& j);

json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& j, std::string_view context);
json vector_to_json(const Vector& v);
Vector vector_from_json(const json& j, std::string_view context);

namespace detail {

/// Rejects any key of the object j outside the allowed list.
void require_known_keys(const json& j, std::initializer_list<std::string_view> allowed,
                        std::string_view context);
void require_object(const json& j, std::string_view context);
const json& require_key(const json& j, std::string_view key, std::string_view context);

template <class T>
T value_or(const json& j, std::string_view key, T fallback) {
  const auto it = j.find(std::string(key));
  return it == j.end() ? fallback : it->template get<T>();
}

}  // namespace detail
}  // namespace fkstab
