#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hybridsim/common.hpp"

namespace hybridsim {

enum class SensorKind { fixed_local, fixed_lanegroup, probe };
enum class ActuatorKind { rc_block, vsl, router, demand_modifier, split_modifier };

std::string to_string(SensorKind k);
std::string to_string(ActuatorKind k);
std::optional<SensorKind> sensor_kind_from_string(const std::string& s);
std::optional<ActuatorKind> actuator_kind_from_string(const std::string& s);

struct SensorSpec {
  ElementId id = 0;
  SensorKind kind = SensorKind::fixed_lanegroup;
  double dt_s = 1.0;
  LinkId link = 0;           // fixed-local
  double position_m = 0.0;   // fixed-local
  LaneGroupId lane_group = 0;  // fixed-lanegroup
  ElementId source = 0;      // probe: demand whose first departure at or after depart_after_s is tracked
  double depart_after_s = 0.0;
  friend bool operator==(const SensorSpec&, const SensorSpec&) = default;
};

struct ActuatorSpec {
  ElementId id = 0;
  ActuatorKind kind = ActuatorKind::rc_block;
  double dt_s = 1.0;
  RcId road_connection = 0;  // rc-block
  LinkId link = 0;           // vsl, split-modifier
  TypeId type = 0;           // router, split-modifier
  RouteId route = 0;         // router: route being replaced
  ElementId demand = 0;      // demand-modifier
  friend bool operator==(const ActuatorSpec&, const ActuatorSpec&) = default;
};

struct SignalStage {
  double duration_s = 0.0;
  std::vector<ElementId> open;  // rc-block actuators open during the stage
  friend bool operator==(const SignalStage&, const SignalStage&) = default;
};

struct ControllerSpec {
  ElementId id = 0;
  std::string kind;  // "fixed_time", "noop", or a registered plugin
  double dt_s = 1.0;
  std::vector<ElementId> sensors;
  std::vector<ElementId> actuators;
  double offset_s = 0.0;
  std::vector<SignalStage> stages;
  std::map<std::string, double> params;
  friend bool operator==(const ControllerSpec&, const ControllerSpec&) = default;
};

struct Measurement {
  double time_s = 0.0;
  bool active = false;
  double count = 0.0;         // fixed-lanegroup
  double flow_vph = 0.0;      // fixed-local
  double density_vpkm = 0.0;  // fixed-local
  double speed_kph = 0.0;
  LinkId link = 0;            // probe
  double position_m = 0.0;    // probe
  bool virtual_vehicle = false;
};

/// Latest instruction held by an actuator. Only the field matching the
/// actuator kind is read.
struct Command {
  std::optional<bool> closed;
  std::optional<double> speed_kph;
  std::optional<RouteId> route_to;
  bool en_route = false;
  std::optional<double> intensity_vph;
  std::optional<std::map<LinkId, double>> splits;
  friend bool operator==(const Command&, const Command&) = default;
};

/// Plugin contract: read measurements, emit commands for owned actuators.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void update(double now, const std::map<ElementId, Measurement>& sensors,
                      std::map<ElementId, Command>& commands) = 0;
};

class NoOpController final : public Controller {
 public:
  void update(double, const std::map<ElementId, Measurement>&, std::map<ElementId, Command>&) override {}
};

/// Fixed-time signal: cycles through stages, opening the listed rc-block
/// actuators and closing the controller's other actuators.
class FixedTimeController final : public Controller {
 public:
  explicit FixedTimeController(const ControllerSpec& spec);
  void update(double now, const std::map<ElementId, Measurement>& sensors,
              std::map<ElementId, Command>& commands) override;
  double cycle_s() const { return cycle_; }
  std::size_t stage_at(double t) const;

 private:
  std::vector<ElementId> actuators_;
  std::vector<SignalStage> stages_;
  double offset_ = 0.0;
  double cycle_ = 0.0;
};

using ControllerFactory = std::function<std::unique_ptr<Controller>(const ControllerSpec&)>;

/// Registry of controller kinds; "fixed_time" and "noop" are built in.
class ControllerRegistry {
 public:
  static ControllerRegistry& instance();
  void add(const std::string& kind, ControllerFactory f);
  bool has(const std::string& kind) const { return factories_.contains(kind); }
  std::unique_ptr<Controller> make(const ControllerSpec& spec) const;

 private:
  ControllerRegistry();
  std::map<std::string, ControllerFactory> factories_;
};

/// Speed reported by a fixed-local detector: q/k, the speed limit for an
/// empty detector.
double detector_speed_kph(double flow_vph, double density_vpkm, double speed_limit_kph);

}  // namespace hybridsim
