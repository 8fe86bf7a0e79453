#include <doctest.h>

#include <nlohmann/json.hpp>

#include "hybridsim/scenario.hpp"
#include "support.hpp"

using namespace hybridsim;
using namespace hybridsim::testing;
using json = nlohmann::json;

namespace {

json bundled(const std::string& name) { return json::parse(serialize_scenario(parse_scenario_file(scenario_path(name)))); }

std::vector<std::string> errors_of(const std::string& text) {
  try {
    parse_scenario_text(text, "t.json");
  } catch (const ScenarioError& e) {
    return e.errors();
  }
  return {};
}

bool any_contains(const std::vector<std::string>& v, const std::string& s) {
  for (const auto& e : v)
    if (e.find(s) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("bundled scenarios parse and validate") {
  for (const char* name : {"macro_meso", "macro_micro", "meso_micro", "micro_macro"}) {
    CAPTURE(name);
    const Scenario s = parse_scenario_file(scenario_path(name));
    CHECK(s.network.links.size() == 6);
    CHECK(s.network.road_connections.size() == 5);
    CHECK(s.demands.size() == 1);
    CHECK(s.models.size() == 2);
    CHECK(s.run.duration_s == 4000.0);
    const auto errors = validate_scenario(s);
    CHECK_MESSAGE(errors.empty(), (errors.empty() ? "" : errors.front()));
  }
}

TEST_CASE("round trip through text is lossless") {
  for (const char* name : {"macro_meso", "macro_micro", "meso_micro", "micro_macro"}) {
    const Scenario a = parse_scenario_file(scenario_path(name));
    const Scenario b = parse_scenario_text(serialize_scenario(a));
    CHECK(a == b);
  }
  Scenario s = pair_scenario("ctm", "newell", 1000.0, 60.0);
  s.routes = {Route{0, {0, 1, 2, 3}}};
  s.vehicle_types.push_back(VehicleType{1, "truck", RoutingBehavior::routed});
  DemandProfile d = s.demands[0];
  d.id = 1;
  d.type = 1;
  d.route = 0;
  s.demands.push_back(d);
  s.network.links[1].partials.push_back(PartialLanes{PartialPosition::outer_downstream, 1, 150.0, {{0.0, 50.0}}});
  ControllerSpec c;
  c.id = 2;
  c.kind = "fixed_time";
  c.stages = {SignalStage{30.0, {}}};
  c.params = {{"gain", 0.5}};
  s.controllers = {c};
  CHECK(parse_scenario_text(serialize_scenario(s)) == s);
}

TEST_CASE("syntax errors carry the line") {
  const auto e = errors_of("{\n  \"schema_version\": 1,\n  oops\n}");
  REQUIRE(e.size() == 1);
  CHECK(e[0].find("t.json:3: syntax error") == 0);
  CHECK(any_contains(errors_of(""), "syntax error"));
}

TEST_CASE("schema errors name the path") {
  json j = bundled("macro_meso");
  j["links"][2].erase("length_m");
  CHECK(any_contains(errors_of(j.dump()), "links[2].length_m"));

  j = bundled("macro_meso");
  j["run"]["duration_s"] = "long";
  CHECK(any_contains(errors_of(j.dump()), "run.duration_s: wrong type"));

  j = bundled("macro_meso");
  j["models"][0]["colour"] = "red";
  CHECK(any_contains(errors_of(j.dump()), "models[0].colour: unknown key"));

  j = bundled("macro_meso");
  j["sensors"][0]["kind"] = "radar";
  CHECK(any_contains(errors_of(j.dump()), "unknown sensor kind 'radar'"));
}

TEST_CASE("missing files are reported") {
  CHECK_THROWS_WITH_AS(parse_scenario_file("/nonexistent/x.json"), doctest::Contains("cannot open"), ScenarioError);
}

TEST_CASE("validation finds cross-reference errors") {
  const Scenario base = parse_scenario_file(scenario_path("macro_meso"));
  auto check = [&](auto mutate, const std::string& needle) {
    Scenario s = base;
    mutate(s);
    const auto errors = validate_scenario(s);
    CHECK_MESSAGE(any_contains(errors, needle), needle);
  };
  check([](Scenario& s) { s.network.road_connections[4].downstream_link = 42; },
        "road connection 4: missing downstream link 42");
  check([](Scenario& s) { s.models[0].links.push_back(3); }, "link 3 is assigned to 2 models");
  check([](Scenario& s) { s.models[1].links.pop_back(); }, "link 5 is not assigned to a model");
  check([](Scenario& s) { s.models[0].kind = "gsom"; }, "unknown kind 'gsom'");
  check([](Scenario& s) { s.models[0].dt_s = 5.0; }, "link 0");
  check([](Scenario& s) { s.models[0].xi = 1.5; }, "xi must lie in [0, 1]");
  check([](Scenario& s) { s.demands[0].link = 9; }, "demand 0: link 9 does not exist");
  check([](Scenario& s) { s.demands[0].intensity_vph.values = {-1.0}; }, "must not be negative");
  check([](Scenario& s) { s.sensors[0].position_m = 900.0; }, "outside link 2");
  check([](Scenario& s) { s.sensors[3].source = 7; }, "demand 7 does not exist");
  check([](Scenario& s) { s.run.duration_s = 0.0; }, "duration");
  check([](Scenario& s) { s.schema_version = 2; }, "schema_version 2 is not supported");
  check(
      [](Scenario& s) {
        ActuatorSpec a;
        a.kind = ActuatorKind::rc_block;
        a.road_connection = 0;
        s.actuators = {a};
        ControllerSpec c;
        c.kind = "noop";
        c.actuators = {0};
        s.controllers = {c, c};
        s.controllers[1].id = 1;
      },
      "actuator 0 is assigned to controllers 0 and 1");
  check(
      [](Scenario& s) {
        ControllerSpec c;
        c.kind = "mystery";
        s.controllers = {c};
      },
      "unknown kind 'mystery'");
  CHECK(validate_scenario(base).empty());
}
