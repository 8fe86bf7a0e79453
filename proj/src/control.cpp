#include "hybridsim/control.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace hybridsim {

std::string to_string(SensorKind k) {
  switch (k) {
    case SensorKind::fixed_local: return "fixed_local";
    case SensorKind::fixed_lanegroup: return "fixed_lanegroup";
    case SensorKind::probe: return "probe";
  }
  return "?";
}

std::string to_string(ActuatorKind k) {
  switch (k) {
    case ActuatorKind::rc_block: return "rc_block";
    case ActuatorKind::vsl: return "vsl";
    case ActuatorKind::router: return "router";
    case ActuatorKind::demand_modifier: return "demand_modifier";
    case ActuatorKind::split_modifier: return "split_modifier";
  }
  return "?";
}

std::optional<SensorKind> sensor_kind_from_string(const std::string& s) {
  for (SensorKind k : {SensorKind::fixed_local, SensorKind::fixed_lanegroup, SensorKind::probe})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<ActuatorKind> actuator_kind_from_string(const std::string& s) {
  for (ActuatorKind k : {ActuatorKind::rc_block, ActuatorKind::vsl, ActuatorKind::router,
                         ActuatorKind::demand_modifier, ActuatorKind::split_modifier})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

FixedTimeController::FixedTimeController(const ControllerSpec& spec)
    : actuators_(spec.actuators), stages_(spec.stages), offset_(spec.offset_s) {
  if (stages_.empty()) throw ConfigError(fmt::format("controller {}: fixed-time signal needs stages", spec.id));
  for (const SignalStage& s : stages_) {
    if (!(s.duration_s > 0.0))
      throw ConfigError(fmt::format("controller {}: stage durations must be positive", spec.id));
    for (ElementId a : s.open)
      if (std::find(actuators_.begin(), actuators_.end(), a) == actuators_.end())
        throw ConfigError(fmt::format("controller {}: stage opens actuator {} it does not own", spec.id, a));
    cycle_ += s.duration_s;
  }
}

std::size_t FixedTimeController::stage_at(double t) const {
  double phase = std::fmod(t - offset_, cycle_);
  if (phase < 0.0) phase += cycle_;
  double acc = 0.0;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    acc += stages_[i].duration_s;
    if (phase < acc - 1e-9) return i;
  }
  return 0;
}

void FixedTimeController::update(double now, const std::map<ElementId, Measurement>&,
                                 std::map<ElementId, Command>& commands) {
  const SignalStage& stage = stages_[stage_at(now)];
  for (ElementId a : actuators_) {
    const bool open = std::find(stage.open.begin(), stage.open.end(), a) != stage.open.end();
    commands[a].closed = !open;
  }
}

ControllerRegistry::ControllerRegistry() {
  factories_["noop"] = [](const ControllerSpec&) { return std::make_unique<NoOpController>(); };
  factories_["fixed_time"] = [](const ControllerSpec& s) { return std::make_unique<FixedTimeController>(s); };
}

ControllerRegistry& ControllerRegistry::instance() {
  static ControllerRegistry r;
  return r;
}

void ControllerRegistry::add(const std::string& kind, ControllerFactory f) { factories_[kind] = std::move(f); }

std::unique_ptr<Controller> ControllerRegistry::make(const ControllerSpec& spec) const {
  auto it = factories_.find(spec.kind);
  if (it == factories_.end()) throw ConfigError(fmt::format("controller {}: unknown kind '{}'", spec.id, spec.kind));
  return it->second(spec);
}

double detector_speed_kph(double flow_vph, double density_vpkm, double speed_limit_kph) {
  if (density_vpkm <= kVehEps) return speed_limit_kph;
  return std::min(speed_limit_kph, flow_vph / density_vpkm);
}

}  // namespace hybridsim
