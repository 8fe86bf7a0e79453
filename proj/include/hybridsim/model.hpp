#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hybridsim/demand.hpp"
#include "hybridsim/network.hpp"
#include "hybridsim/packet.hpp"

namespace hybridsim {

/// Engine services available to models while they step.
class SimContext {
 public:
  virtual ~SimContext() = default;
  virtual double now() const = 0;
  virtual Rng& rng() = 0;
  virtual VehicleFactory& factory() = 0;
  virtual const Network& network() const = 0;
  virtual const Routing& routing() const = 0;
  /// η for road connection r, answered by the model owning r's downstream
  /// link. kExitConnection yields infinity.
  virtual double distance_to_last_vehicle(RcId r) const = 0;
};

struct VehicleSnapshot {
  VehicleId id = 0;
  LinkId link = 0;
  LaneGroupId lane_group = 0;
  double position_m = 0.0;
  double speed_kph = 0.0;
  StateIndex state;
};

/// Lane-group routing facts shared by all models: ρ^g and the target set.
class LaneRouting {
 public:
  LaneRouting(const Network& net, const Routing& routing) : net_(&net), routing_(&routing) {}

  /// Exiting road connection that lane group g must use for state s
  /// (kExitConnection in terminal links), or nullopt if g cannot serve s.
  std::optional<RcId> exit_for(LaneGroupId g, const StateIndex& s) const;
  /// Lane groups of `link` from which s can leave the link.
  std::vector<LaneGroupId> targets(LinkId link, const StateIndex& s) const;

 private:
  const Network* net_;
  const Routing* routing_;
  mutable std::map<std::pair<LaneGroupId, StateIndex>, std::optional<RcId>> cache_;
};

/// Behavioral contract every traffic model implements. A model owns the
/// state of a set of links; all interaction with other models goes through
/// these methods.
class Model {
 public:
  Model(std::string id, std::vector<LinkId> links, double dt);
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const std::string& id() const { return id_; }
  const std::vector<LinkId>& links() const { return links_; }
  bool manages(LinkId link) const;
  double dt() const { return dt_; }

  virtual std::string kind() const = 0;
  virtual bool is_fluid() const = 0;

  /// Builds lane-group structures once the network and routing are final.
  virtual void initialize(const Network& net, const Routing& routing) = 0;

  // --- protocol -----------------------------------------------------------
  /// |p| under this model's norm.
  virtual double packet_size(const FluxPacket& p, RcId r) const;
  /// s_h for a downstream lane group; `vehicle_packet` flags a vehicle-based sender.
  virtual double lane_group_supply(LaneGroupId h, bool vehicle_packet) const = 0;
  /// p̄ = Σ_{h ∈ D_r} λ^r_h s_h.
  double max_packet_size(const FluxPacket& p, const Network& net, LinkId link, RcId r) const;
  /// Receives packets that entered `link` through r (or kSourceEntry).
  virtual void send_packets(std::vector<FluxPacket> packets, LinkId link, RcId r, SimContext& ctx) = 0;
  virtual double distance_to_last_vehicle(LinkId link, RcId r) const = 0;

  // --- dynamics -----------------------------------------------------------
  /// Release requests for this step, one packet per (lane group, road
  /// connection) with origin and road_connection set.
  virtual std::vector<FluxPacket> compute_demands(SimContext& ctx) = 0;
  /// The portion of a request that was accepted downstream.
  virtual void on_released(const FluxPacket& sent) = 0;
  virtual void advance_state(SimContext& ctx) = 0;

  // --- queries ------------------------------------------------------------
  virtual double total_vehicles_in_lanegroup(LaneGroupId lg) const = 0;
  virtual std::map<StateIndex, double> vehicles_by_state(LaneGroupId lg) const = 0;
  virtual double lanegroup_speed_kph(LaneGroupId lg) const = 0;
  /// Cumulative vehicles that crossed the cross-section nearest `position_m`.
  virtual double cumulative_crossings(LinkId link, double position_m) const = 0;
  /// Density (veh/km, all lanes) around `position_m`.
  virtual double local_density_vpkm(LinkId link, double position_m) const = 0;
  /// Travel speed at `position_m`, used to advect virtual probes.
  virtual double local_speed_kph(LinkId link, double position_m) const = 0;
  /// Vehicle-based models only.
  virtual std::optional<VehicleSnapshot> find_vehicle(VehicleId) const { return std::nullopt; }
  virtual void for_each_vehicle(const std::function<void(const VehicleSnapshot&)>&) const {}
  /// Registers a cross-section whose crossings must be counted exactly.
  virtual void register_detector(LinkId, double) {}

  // --- actuation ----------------------------------------------------------
  virtual void set_speed_limit(LinkId link, double kph) = 0;
  virtual double speed_limit(LinkId link) const = 0;

 private:
  std::string id_;
  std::vector<LinkId> links_;
  double dt_;
};

}  // namespace hybridsim
