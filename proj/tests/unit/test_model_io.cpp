#include <doctest.h>

#include "fkstab/error.hpp"
#include "fkstab/model_io.hpp"
#include "support.hpp"

using namespace fkstab;
using namespace testing_support;

TEST_CASE("finite model JSON round trip") {
  ModelGen gen(4);
  const auto m = gen.model(3, 4);
  CHECK(finite_model_from_json(to_json(m)) == m);
  const json j = R"({"family": "finite",
                     "transitions": [{"rows": 2, "cols": 2, "data": [0.9, 0.1, 0.2, 0.8]}],
                     "potentials": [[2, 1]], "initial": [0.5, 0.5], "lyapunov": [1, 2]})"_json;
  CHECK(finite_model_from_json(j) == two_state_model());
}

TEST_CASE("continuous parameter round trips") {
  ErgodicDriftParams e;
  e.obs = ObsVariant::stoch_vol;
  e.beta = 0.7;
  e.y_star = ObservationConstraint::annulus(0.5, 4.0);
  RandomWalkParams rw;
  rw.obs_map = MapSpec{MapKind::sine, 2.0};
  for (const ModelParams& p : {ModelParams{LinearGaussianParams{0.5, 2, 3, 1, 4}}, ModelParams{e}, ModelParams{rw}})
    CHECK(model_params_from_json(to_json(p)) == p);
  const auto box = ObservationConstraint::box({{-1, 1}, {0, 2}}, "box");
  CHECK(constraint_from_json(to_json(box)) == box);
  const LyapunovSpec v{LyapunovSpec::Kind::quadratic, 1.0, 3.0};
  CHECK(lyapunov_spec_from_json(to_json(v)) == v);
}

TEST_CASE("strict parsing") {
  try {
    model_params_from_json(R"({"family": "linear-gaussian", "a": 0.9, "resample": "stratified"})"_json);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("resample") != std::string::npos);
  }
  CHECK_THROWS_AS(model_from_json(R"({"family": "lorenz"})"_json), ValidationError);
  CHECK_THROWS_AS(finite_model_from_json(R"({"family": "finite", "transitions": [{"rows": 2, "cols": 2, "data": [1]}],
                                              "potentials": [[1, 1]], "initial": [0.5, 0.5]})"_json),
                  ValidationError);
  CHECK_THROWS_AS(finite_model_from_json(R"({"family": "finite", "transitions": [{"rows": 1, "cols": 1, "data": [1]}],
                                              "potentials": [[1]], "log_potentials": [[0]], "initial": [1]})"_json),
                  ValidationError);
}
