#include <doctest.h>

#include "hybridsim/control.hpp"

using namespace hybridsim;

namespace {

ControllerSpec signal() {
  ControllerSpec s;
  s.id = 4;
  s.kind = "fixed_time";
  s.actuators = {10, 11};
  s.offset_s = 5.0;
  s.stages = {SignalStage{30.0, {10}}, SignalStage{20.0, {11}}, SignalStage{10.0, {}}};
  return s;
}

class Threshold final : public Controller {
 public:
  void update(double, const std::map<ElementId, Measurement>& sensors, std::map<ElementId, Command>& commands) override {
    commands[1].speed_kph = sensors.at(0).density_vpkm > 30.0 ? 60.0 : 100.0;
  }
};

}  // namespace

TEST_CASE("fixed-time stages follow the cycle and offset") {
  FixedTimeController c(signal());
  CHECK(c.cycle_s() == 60.0);
  CHECK(c.stage_at(5.0) == 0);
  CHECK(c.stage_at(34.9) == 0);
  CHECK(c.stage_at(35.0) == 1);
  CHECK(c.stage_at(55.0) == 2);
  CHECK(c.stage_at(65.0) == 0);
  CHECK(c.stage_at(0.0) == 2);  // before the offset wraps to the previous cycle

  std::map<ElementId, Command> cmd;
  c.update(40.0, {}, cmd);
  CHECK(cmd[10].closed == true);
  CHECK(cmd[11].closed == false);
  c.update(60.0, {}, cmd);
  CHECK(cmd[10].closed == true);
  CHECK(cmd[11].closed == true);
}

TEST_CASE("fixed-time configuration errors") {
  ControllerSpec s = signal();
  s.stages.clear();
  CHECK_THROWS_AS(FixedTimeController{s}, ConfigError);
  s = signal();
  s.stages[1].duration_s = 0.0;
  CHECK_THROWS_AS(FixedTimeController{s}, ConfigError);
  s = signal();
  s.stages[0].open = {99};
  CHECK_THROWS_WITH_AS(FixedTimeController{s}, doctest::Contains("99"), ConfigError);
}

TEST_CASE("registry") {
  auto& r = ControllerRegistry::instance();
  CHECK(r.has("noop"));
  CHECK(r.has("fixed_time"));
  ControllerSpec s;
  s.kind = "threshold";
  CHECK_THROWS_AS(r.make(s), ConfigError);
  r.add("threshold", [](const ControllerSpec&) { return std::make_unique<Threshold>(); });
  auto c = r.make(s);
  std::map<ElementId, Measurement> m;
  m[0].density_vpkm = 40.0;
  std::map<ElementId, Command> cmd;
  c->update(0.0, m, cmd);
  CHECK(cmd[1].speed_kph == 60.0);
}

TEST_CASE("noop emits nothing") {
  NoOpController c;
  std::map<ElementId, Command> cmd;
  c.update(0.0, {}, cmd);
  CHECK(cmd.empty());
}

TEST_CASE("detector speed") {
  CHECK(detector_speed_kph(1000.0, 20.0, 100.0) == 50.0);
  CHECK(detector_speed_kph(0.0, 0.0, 80.0) == 80.0);
  CHECK(detector_speed_kph(5000.0, 20.0, 100.0) == 100.0);
}

TEST_CASE("kind names round-trip") {
  for (SensorKind k : {SensorKind::fixed_local, SensorKind::fixed_lanegroup, SensorKind::probe})
    CHECK(sensor_kind_from_string(to_string(k)) == k);
  for (ActuatorKind k : {ActuatorKind::rc_block, ActuatorKind::vsl, ActuatorKind::router, ActuatorKind::demand_modifier,
                         ActuatorKind::split_modifier})
    CHECK(actuator_kind_from_string(to_string(k)) == k);
  CHECK_FALSE(sensor_kind_from_string("radar"));
  CHECK_FALSE(actuator_kind_from_string("ramp_meter"));
}
