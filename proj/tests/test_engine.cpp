#include <doctest.h>

#include <cmath>

#include "hybridsim/engine.hpp"
#include "support.hpp"

using namespace hybridsim;
using namespace hybridsim::testing;

namespace {

// Commands every owned actuator from its parameters, from start_s on.
class Constant final : public Controller {
 public:
  explicit Constant(const ControllerSpec& s) : spec_(s) {}
  void update(double now, const std::map<ElementId, Measurement>&, std::map<ElementId, Command>& out) override {
    auto get = [&](const char* k) -> std::optional<double> {
      if (auto it = spec_.params.find(k); it != spec_.params.end()) return it->second;
      return std::nullopt;
    };
    if (now < get("start_s").value_or(0.0)) return;
    for (ElementId a : spec_.actuators) {
      Command& c = out[a];
      if (auto v = get("closed")) c.closed = *v != 0.0;
      if (auto v = get("speed_kph")) c.speed_kph = *v;
      if (auto v = get("intensity_vph")) c.intensity_vph = *v;
      if (auto v = get("split_to")) c.splits = std::map<LinkId, double>{{static_cast<LinkId>(*v), get("ratio").value_or(1.0)}};
    }
  }

 private:
  ControllerSpec spec_;
};

const bool registered = [] {
  ControllerRegistry::instance().add("constant", [](const ControllerSpec& s) { return std::make_unique<Constant>(s); });
  return true;
}();

ControllerSpec constant_controller(std::vector<ElementId> actuators, std::map<std::string, double> params) {
  ControllerSpec c;
  c.id = 0;
  c.kind = "constant";
  c.dt_s = 2.0;
  c.actuators = std::move(actuators);
  c.params = std::move(params);
  return c;
}

ActuatorSpec actuator(ActuatorKind k) {
  ActuatorSpec a;
  a.id = 0;
  a.kind = k;
  a.dt_s = 2.0;
  return a;
}

double first_exit_time(Engine& e) {
  double t = -1.0;
  e.on_step([&](const Engine& en, double now) {
    if (t < 0.0 && en.ledger().exited > 0.0) t = now;
  });
  e.run();
  return t;
}

// Link 0 diverges lane by lane to links 1 and 2.
Scenario diverge_scenario(const std::string& kind) {
  Scenario s = chain_scenario(1, 2, kind, 2.0, 1200.0, 600.0);
  s.network.links.push_back(make_link(1, 500, 1));
  s.network.links.push_back(make_link(2, 500, 1));
  s.network.road_connections = {make_rc(0, 0, {1, 1}, 1, {1, 1}), make_rc(1, 0, {2, 2}, 2, {1, 1})};
  s.models[0].links = {0, 1, 2};
  s.splits = {SplitProfile{0, 0, {{1, constant(0.5)}, {2, constant(0.5)}}}};
  return s;
}

}  // namespace

TEST_CASE("models step on their own clocks") {
  Scenario s = chain_scenario(2, 1, "ctm", 2.0, 0.0, 10.0);
  s.models = {model("A", "ctm", 2.0, {0}), model("B", "meso", 5.0, {1})};
  Engine e(s);
  e.run();
  using Entry = std::pair<double, std::string>;
  const std::vector<Entry> expected = {{0, "A"}, {0, "B"}, {2, "A"}, {4, "A"}, {5, "B"}, {6, "A"}, {8, "A"}};
  CHECK(e.step_log() == expected);
  CHECK(e.finished());
}

TEST_CASE("conservation holds at every step for every model pair") {
  for (const char* a : {"ctm", "meso", "newell"})
    for (const char* b : {"ctm", "meso", "newell"}) {
      CAPTURE(std::string(a));
      CAPTURE(std::string(b));
      Engine e(pair_scenario(a, b, 2400.0, 600.0));
      double worst_fluid = 0.0, worst_vehicle = 0.0;
      e.on_step([&](const Engine& en, double) {
        const auto r = en.check_conservation();
        worst_fluid = std::max(worst_fluid, r.max_fluid_error);
        worst_vehicle = std::max(worst_vehicle, r.max_vehicle_error);
      });
      e.run();
      CHECK(worst_fluid <= 1e-9);
      CHECK(worst_vehicle == 0.0);
      const auto& L = e.ledger();
      CHECK(std::abs(L.injected - L.exited - e.stored_total()) <= 1e-9);
      CHECK(L.exited > 0.0);
    }
}

TEST_CASE("a closed road connection stops all flow across it") {
  for (const char* kind : {"ctm", "meso", "newell"}) {
    CAPTURE(std::string(kind));
    Scenario s = chain_scenario(2, 1, kind, 2.0, 600.0, 300.0);
    ActuatorSpec a = actuator(ActuatorKind::rc_block);
    a.road_connection = 0;
    s.actuators = {a};
    s.controllers = {constant_controller({0}, {{"closed", 1.0}})};
    Engine e(s);
    e.run();
    CHECK(e.rc_closed(0));
    CHECK(e.ledger().boundary.contains(0) == false);
    CHECK(e.ledger().exited == 0.0);
    CHECK(e.ledger().injected > 0.0);
  }
}

TEST_CASE("halving the speed limit adds the longer trip to the occupancy") {
  const auto mean_stored = [](Scenario s) {
    Engine e(s);
    double sum = 0.0;
    int n = 0;
    e.on_step([&](const Engine& en, double now) {
      if (now < 200.0) return;
      for (LaneGroupId g : en.network().lane_groups_of(0)) sum += en.model_of(0).total_vehicles_in_lanegroup(g);
      ++n;
    });
    e.run();
    return sum / n;
  };
  for (const char* kind : {"ctm", "meso", "newell"}) {
    CAPTURE(std::string(kind));
    Scenario s = chain_scenario(2, 1, kind, 2.0, 600.0, 2000.0);
    const double free_flow = mean_stored(s);
    ActuatorSpec a = actuator(ActuatorKind::vsl);
    a.link = 0;
    s.actuators = {a};
    s.controllers = {constant_controller({0}, {{"speed_kph", 50.0}})};
    const double slow = mean_stored(s);
    // Flow times the extra travel time: 600 veh/h over 0.5 km at 50 instead of 100 km/h.
    CHECK(slow - free_flow == doctest::Approx(600.0 * (0.5 / 50 - 0.5 / 100)).epsilon(0.2));
  }
}

TEST_CASE("speed above the structural limit is clamped with a warning") {
  Scenario s = chain_scenario(1, 1, "meso", 2.0, 0.0, 10.0);
  ActuatorSpec a = actuator(ActuatorKind::vsl);
  s.actuators = {a};
  s.controllers = {constant_controller({0}, {{"speed_kph", 150.0}})};
  Engine e(s);
  e.run();
  CHECK(e.model_of(0).speed_limit(0) == 100.0);
  REQUIRE(e.warnings().size() == 1);
  CHECK(e.warnings()[0].find("clamped") != std::string::npos);
}

TEST_CASE("split modifier sends everything one way") {
  for (const char* kind : {"ctm", "meso", "newell"}) {
    CAPTURE(std::string(kind));
    Scenario s = diverge_scenario(kind);
    ActuatorSpec a = actuator(ActuatorKind::split_modifier);
    a.link = 0;
    a.type = 0;
    s.actuators = {a};
    s.controllers = {constant_controller({0}, {{"split_to", 1.0}})};
    Engine e(s);
    e.run();
    CHECK(e.ledger().boundary.at(0) > 50.0);
    CHECK(e.ledger().boundary.contains(1) == false);
    CHECK(e.warnings().empty());
  }
}

TEST_CASE("split command that does not sum to one is rejected") {
  Scenario s = diverge_scenario("ctm");
  ActuatorSpec a = actuator(ActuatorKind::split_modifier);
  s.actuators = {a};
  s.controllers = {constant_controller({0}, {{"split_to", 1.0}, {"ratio", 0.7}})};
  Engine e(s);
  e.run();
  CHECK(e.warnings().size() == 1);
  CHECK(e.ledger().boundary.at(1) > 50.0);  // the original ratios stay
}

TEST_CASE("demand modifier overwrites the future intensity") {
  for (const char* kind : {"ctm", "meso", "newell"}) {
    CAPTURE(std::string(kind));
    Scenario s = chain_scenario(1, 1, kind, 2.0, 900.0, 400.0);
    ActuatorSpec a = actuator(ActuatorKind::demand_modifier);
    a.demand = 0;
    s.actuators = {a};
    s.controllers = {constant_controller({0}, {{"intensity_vph", 0.0}, {"start_s", 200.0}})};
    Engine e(s);
    double at_switch = -1.0, waiting = 0.0;
    e.on_step([&](const Engine& en, double now) {
      if (now >= 200.0 && at_switch < 0.0) {
        at_switch = en.ledger().injected;
        waiting = en.buffered_total();
      }
    });
    e.run();
    CHECK(at_switch == doctest::Approx(50.0).epsilon(0.3));
    CHECK(e.ledger().injected <= at_switch + waiting + 1e-9);
    CHECK(e.buffered_total() == 0.0);
  }
}

TEST_CASE("probes report from vehicles and from fluid trackers") {
  for (const char* kind : {"ctm", "meso", "newell"}) {
    CAPTURE(std::string(kind));
    Scenario s = chain_scenario(3, 1, kind, 2.0, 900.0, 120.0);
    SensorSpec p;
    p.id = 5;
    p.kind = SensorKind::probe;
    p.dt_s = 2.0;
    p.source = 0;
    p.depart_after_s = 10.0;
    s.sensors = {p};
    Engine e(s);
    std::vector<double> positions;
    std::vector<LinkId> links;
    e.on_step([&](const Engine& en, double) {
      const Measurement& m = en.measurements().at(5);
      if (m.active) {
        positions.push_back(m.link * 500.0 + m.position_m);
        links.push_back(m.link);
        CHECK(m.virtual_vehicle == (std::string(kind) == "ctm"));
      }
    });
    e.run();
    REQUIRE(positions.size() > 10);
    for (std::size_t i = 1; i < positions.size(); ++i) CHECK(positions[i] >= positions[i - 1] - 1e-9);
    CHECK(links.back() >= 1);
  }
}

TEST_CASE("same seed gives the same run") {
  auto run = [](std::uint64_t seed) {
    Scenario s = pair_scenario("meso", "newell", 2400.0, 900.0);
    s.run.seed = seed;
    s.models[1].sigma_v = 5.0;
    Engine e(s);
    std::vector<double> trace;
    e.on_step([&](const Engine& en, double) { trace.push_back(en.stored_total()); });
    e.run();
    return trace;
  };
  CHECK(run(3) == run(3));
  CHECK(run(3) != run(4));
}

TEST_CASE("a run with no demand stays empty") {
  Engine e(pair_scenario("newell", "ctm", 0.0, 100.0));
  e.run();
  CHECK(e.stored_total() == 0.0);
  CHECK(e.ledger().injected == 0.0);
}

TEST_CASE("invalid scenarios are refused at construction") {
  Scenario s = chain_scenario(1, 1, "ctm", 2.0, 0.0, 10.0);
  s.models[0].dt_s = 10.0;  // violates the CFL condition for 100 m cells
  CHECK_THROWS_WITH_AS(Engine{s}, doctest::Contains("link 0"), ConfigError);
}
