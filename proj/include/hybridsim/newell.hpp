#pragma once

#include <deque>
#include <map>
#include <memory>
#include <vector>

#include "hybridsim/model.hpp"

namespace hybridsim {

/// Per-step parameter means: metres per step for δv and δw, vehicles per
/// step for δf̄.
struct NewellMeans {
  double dv = 0.0;
  double dw = 0.0;
  double df = 0.0;
};

NewellMeans newell_means(const RoadParams& p, int lanes, double dt);

/// max(0, min(δv, h - δw, h δf̄)). An infinite headway leaves only δv.
double newell_advance(double dv, double dw, double df, double headway);

/// Discrete Newell car following, one FIFO queue per lane group. Vehicles
/// crossing into another Newell link keep their overshoot.
class NewellModel final : public Model {
 public:
  struct Options {
    double sigma_v = 0.0;  // m per step
    double sigma_w = 0.0;  // m per step
    double sigma_f = 0.0;  // veh per step
  };

  NewellModel(std::string id, std::vector<LinkId> links, double dt, Options opts);
  NewellModel(std::string id, std::vector<LinkId> links, double dt)
      : NewellModel(std::move(id), std::move(links), dt, Options()) {}

  std::string kind() const override { return "newell"; }
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
  void register_detector(LinkId link, double position_m) override;

  void set_speed_limit(LinkId link, double kph) override;
  double speed_limit(LinkId link) const override;

  /// Positions in lane-group coordinates, downstream-most first.
  std::vector<double> positions(LaneGroupId lg) const;
  std::size_t buffer_size(LaneGroupId lg) const;
  double jam_spacing_m(LaneGroupId lg) const;
  const NewellMeans& means(LaneGroupId lg) const;
  /// Places a vehicle directly; for tests and initial conditions.
  void place(LaneGroupId lg, Vehicle v, double position_m);

  static constexpr double kDetectorWindowM = 50.0;

 private:
  struct Car {
    Vehicle vehicle;
    double x = 0.0;
    double plan = 0.0;
    double last_advance = 0.0;
  };
  struct Arrival {
    Vehicle vehicle;
    double position_m = 0.0;
    /// No carried overshoot: the vehicle is at the entrance at the step start.
    bool at_entrance = false;
    double upstream_advance = 0.0;  // movement this step before the link end
  };
  struct Group {
    LaneGroupId id = 0;
    LinkId link = 0;
    double length_m = 0.0;
    double offset_m = 0.0;  // link coordinate of the group's upstream end
    double spacing_m = 0.0;
    NewellMeans means;
    std::deque<Car> cars;
    std::deque<Arrival> buffer;
    std::vector<VehicleId> released;
  };

  Group& group(LaneGroupId lg);
  const Group& group(LaneGroupId lg) const;
  double draw(double mean, double sigma, Rng& rng) const;
  LaneGroupId choose_target(LinkId link, RcId r, const StateIndex& s) const;
  void count_crossings(const Group& g, double from_m, double to_m);
  void set_means(LinkId link);

  Options opts_;
  const Network* net_ = nullptr;
  std::unique_ptr<LaneRouting> lanes_;
  std::map<LaneGroupId, Group> groups_;
  std::map<LinkId, double> speed_limit_;
  std::map<LinkId, std::map<double, double>> detectors_;
  FluidToVehicleTranslator translator_;
};

}  // namespace hybridsim
