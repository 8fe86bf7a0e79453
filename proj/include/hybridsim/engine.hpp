#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "hybridsim/control.hpp"
#include "hybridsim/demand.hpp"
#include "hybridsim/model.hpp"
#include "hybridsim/network.hpp"
#include "hybridsim/scenario.hpp"

namespace hybridsim {

/// Any failure while stepping, with the simulation time and element.
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::unique_ptr<Model> make_model(const ModelSpec& spec);

/// Position of a probe that is inside a fluid region.
struct VirtualVehicle {
  ElementId sensor = 0;
  StateIndex state;
  LinkId link = 0;
  double position_m = 0.0;
  double speed_kph = 0.0;
};

/// Cumulative flow bookkeeping used for conservation audits.
struct FlowLedger {
  std::map<std::pair<LinkId, StateIndex>, double> inflow;
  std::map<std::pair<LinkId, StateIndex>, double> outflow;
  std::map<RcId, double> boundary;            // per road connection
  std::map<LinkId, double> source_entry;      // injected per link
  std::map<LinkId, double> exits;             // left the network per terminal link
  std::set<LinkId> fluid_fed;                 // vehicle links that received fluid
  double injected = 0.0;
  double exited = 0.0;
};

struct ConservationResult {
  double max_fluid_error = 0.0;
  double max_vehicle_error = 0.0;
  std::string worst;  // "link:state" of the largest error
};

class Engine {
 public:
  explicit Engine(const Scenario& scenario);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Runs every event with time below the duration (outputs up to and
  /// including it).
  void run();
  /// Processes every event at the next event time; false when finished.
  bool step_time();
  double now() const { return now_; }
  double duration() const { return duration_; }
  bool finished() const;

  const Scenario& scenario() const { return scenario_; }
  const Network& network() const { return net_; }
  const Routing& routing() const { return routing_; }
  const std::vector<std::unique_ptr<Model>>& models() const { return models_; }
  Model& model_of(LinkId link) const;
  const Source& source(ElementId demand) const;
  const std::vector<Source>& sources() const { return sources_; }

  const FlowLedger& ledger() const { return ledger_; }
  double stored(LinkId link, const StateIndex& s) const;
  double stored_total() const;
  double buffered_total() const;
  ConservationResult check_conservation() const;

  const std::map<ElementId, Measurement>& measurements() const { return measurements_; }
  const std::vector<VirtualVehicle>& virtual_vehicles() const { return virtual_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  /// (time, model id) of every model step, in firing order.
  const std::vector<std::pair<double, std::string>>& step_log() const { return step_log_; }
  bool rc_closed(RcId r) const { return closed_.contains(r); }

  /// Called after all model advances at a time (argument: that time).
  void on_step(std::function<void(const Engine&, double)> fn) { step_hooks_.push_back(std::move(fn)); }
  /// Called at every output time, including the duration.
  void on_output(std::function<void(const Engine&, double)> fn) { output_hooks_.push_back(std::move(fn)); }

 private:
  class Context;
  struct Event {
    double time;
    int phase;
    std::size_t order;
    std::size_t element;
    std::uint64_t k;
    bool operator>(const Event& o) const;
  };
  struct SensorState {
    SensorSpec spec;
    double last_crossings = 0.0;
    double last_time = 0.0;
    bool probe_assigned = false;
    std::optional<VehicleId> probe_vehicle{};
  };
  struct ActuatorState {
    ActuatorSpec spec;
    std::optional<Command> command{};
    std::optional<Command> applied{};
  };
  struct ControllerState {
    ControllerSpec spec;
    std::unique_ptr<Controller> impl;
  };
  struct Junction {
    std::vector<RcId> rcs;
  };

  void schedule(int phase, std::size_t order, std::size_t element, double dt, std::uint64_t k);
  void fire(const Event& e);
  void model_demand_phase(std::size_t m);
  void model_advance_phase(std::size_t m);
  void read_sensor(SensorState& s);
  void run_controller(ControllerState& c);
  void apply_actuator(ActuatorState& a);
  void inject_sources(std::size_t m);
  void deliver(Model& sender, const FluxPacket& request, double scale);
  void receive(FluxPacket p, LinkId link, RcId r, bool from_source);
  void track_probes(const FluxPacket& p, LinkId link, bool receiver_fluid);
  void advance_virtual(std::size_t m);
  double distance_to_last_vehicle(RcId r) const;
  Model& receiver_of(RcId r) const;

  Scenario scenario_;
  Network net_;
  Routing routing_;
  std::vector<std::unique_ptr<Model>> models_;
  std::map<LinkId, std::size_t> model_index_;
  std::vector<Source> sources_;
  std::map<ElementId, std::size_t> source_index_;
  std::vector<SensorState> sensors_;
  std::vector<ActuatorState> actuators_;
  std::vector<ControllerState> controllers_;
  std::map<ElementId, std::size_t> actuator_index_;
  std::vector<Junction> junctions_;
  std::map<RcId, std::size_t> junction_of_;
  std::set<RcId> closed_;

  std::unique_ptr<Context> ctx_;
  Rng rng_;
  Rng probe_rng_;
  VehicleFactory factory_;
  FlowLedger ledger_;
  std::vector<VirtualVehicle> virtual_;
  std::map<VehicleId, ElementId> probe_vehicles_;  // vehicle -> sensor
  std::map<ElementId, Measurement> measurements_;
  std::vector<std::string> warnings_;
  std::vector<std::pair<double, std::string>> step_log_;
  std::vector<std::function<void(const Engine&, double)>> step_hooks_;
  std::vector<std::function<void(const Engine&, double)>> output_hooks_;

  std::vector<Event> queue_;  // min-heap
  double now_ = 0.0;
  double duration_ = 0.0;
  bool advanced_at_now_ = false;
};

}  // namespace hybridsim
