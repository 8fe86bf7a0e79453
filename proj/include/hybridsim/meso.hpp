#pragma once

#include <deque>
#include <map>
#include <memory>
#include <vector>

#include "hybridsim/model.hpp"

namespace hybridsim {

/// Two-queue model: a transit queue delays each vehicle by the free-flow
/// travel time, then a waiting queue is served by a Poisson process.
class MesoModel final : public Model {
 public:
  struct Options {
    /// Keep (entry, departure) times of every departed vehicle.
    bool record_dwell = false;
  };
  struct Dwell {
    VehicleId vehicle = 0;
    double entered_s = 0.0;
    double departed_s = 0.0;
  };

  MesoModel(std::string id, std::vector<LinkId> links, double dt, Options opts);
  MesoModel(std::string id, std::vector<LinkId> links, double dt)
      : MesoModel(std::move(id), std::move(links), dt, Options()) {}

  std::string kind() const override { return "meso"; }
  bool is_fluid() const override { return false; }
  void initialize(const Network& net, const Routing& routing) override;

  double lane_group_supply(LaneGroupId h, bool vehicle_packet) const override;
  void send_packets(std::vector<FluxPacket> packets, LinkId link, RcId r, SimContext& ctx) override;
  double distance_to_last_vehicle(LinkId link, RcId r) const override;

  std::vector<FluxPacket> compute_demands(SimContext& ctx) override;
  void on_released(const FluxPacket& sent) override;
  void advance_state(SimContext& ctx) override;

  double total_vehicles_in_lanegroup(LaneGroupId lg) const override;
  std::map<StateIndex, double> vehicles_by_state(LaneGroupId lg) const override;
  double lanegroup_speed_kph(LaneGroupId lg) const override;
  double cumulative_crossings(LinkId link, double position_m) const override;
  double local_density_vpkm(LinkId link, double position_m) const override;
  double local_speed_kph(LinkId link, double position_m) const override;
  std::optional<VehicleSnapshot> find_vehicle(VehicleId id) const override;
  void for_each_vehicle(const std::function<void(const VehicleSnapshot&)>& fn) const override;

  void set_speed_limit(LinkId link, double kph) override;
  double speed_limit(LinkId link) const override;

  double travel_time_s(LaneGroupId lg) const;
  std::size_t capacity(LaneGroupId lg) const;
  std::size_t transit_size(LaneGroupId lg) const;
  std::size_t waiting_size(LaneGroupId lg) const;
  std::size_t buffer_size(LaneGroupId lg) const;
  const std::vector<Dwell>& dwells() const { return dwells_; }

 private:
  struct Entry {
    Vehicle vehicle;
    double entered_s = 0.0;
  };
  struct Group {
    LaneGroupId id = 0;
    LinkId link = 0;
    double length_m = 0.0;
    int lanes = 1;
    std::size_t capacity = 0;
    double tau_s = 0.0;
    double service_per_step = 0.0;
    double service_vph = 0.0;
    std::deque<Entry> transit;
    std::deque<Entry> waiting;
    std::deque<Vehicle> buffer;
    std::vector<VehicleId> leaving;  // released this step, removed at advance
    double entries = 0.0;
    double exits = 0.0;
  };

  Group& group(LaneGroupId lg);
  const Group& group(LaneGroupId lg) const;
  std::size_t occupancy(const Group& g) const { return g.transit.size() + g.waiting.size(); }
  std::size_t space(const Group& g) const;
  double position(const Group& g, const Entry& e) const;
  void admit(Group& g, Vehicle v, double now);
  LaneGroupId choose_target(LinkId link, RcId r, const StateIndex& s) const;

  Options opts_;
  const Network* net_ = nullptr;
  std::unique_ptr<LaneRouting> lanes_;
  std::map<LaneGroupId, Group> groups_;
  std::map<LinkId, double> speed_limit_;
  FluidToVehicleTranslator translator_;
  std::vector<Dwell> dwells_;
  double time_ = 0.0;
};

}  // namespace hybridsim
