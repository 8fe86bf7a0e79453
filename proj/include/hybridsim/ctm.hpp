#pragma once

#include <map>
#include <memory>
#include <vector>

#include "hybridsim/model.hpp"

namespace hybridsim {

/// Normalized cell parameters. Speeds are fractions of a cell per step,
/// capacity and occupancy are in vehicles.
struct CellParams {
  double length_m = 0.0;
  double v = 0.0;             // free-flow speed
  double w = 0.0;             // congestion wave speed
  double capacity = 0.0;      // veh per step
  double max_occupancy = 0.0; // veh
};

/// Common cell length for a link: the largest that divides the link into an
/// integer number of cells without exceeding max_cell_length_m.
double cell_length(double link_length_m, double max_cell_length_m);

/// Throws ConfigError naming the link when the step violates CFL.
CellParams cell_params(const RoadParams& params, int lanes, double cell_length_m, double dt,
                       LinkId link);

/// Cells of one lane group, all of the link's common length.
std::vector<CellParams> discretize(const Link& link, const LaneGroup& lg, double max_cell_length_m,
                                   double dt);

/// s = w (n̄ - n), never negative.
double cell_supply(const CellParams& c, double occupancy);
/// ℓ (ρ̄ - ρ) / ρ̄ clamped to [0, ℓ].
double cell_distance_to_last_vehicle(const CellParams& c, double occupancy);
/// Per-state demand min(v n_s, f̄ n_s / n) of a downstream-most cell.
FluidContent cell_demand(const CellParams& c, const FluidContent& occupancy);

enum class LaneChange { none, in, out };

/// CTM with one pipe of cells per lane group and lateral lane changes.
class CtmModel final : public Model {
 public:
  struct Options {
    double max_cell_length_m = 100.0;
    double xi = 1.0;
    /// Lets a vehicle-based sender use supply left unused in earlier steps,
    /// up to one vehicle, so whole vehicles can enter a partly full cell.
    bool accumulate_vehicle_supply = true;
  };

  struct Cell {
    CellParams params;
    FluidContent n;
    FluidContent nhat;
    double outflow = 0.0;  // total forward flux of the last step
    int in = -1;           // flat index of inner / outer lateral neighbour
    int out = -1;
    LaneGroupId lane_group = 0;
  };

  CtmModel(std::string id, std::vector<LinkId> links, double dt, Options opts);

  std::string kind() const override { return "ctm"; }
  bool is_fluid() const override { return true; }
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

  void set_speed_limit(LinkId link, double kph) override;
  double speed_limit(LinkId link) const override;

  // Introspection, used by tests and output.
  std::vector<const Cell*> cells(LaneGroupId lg) const;
  void set_occupancy(LaneGroupId lg, std::size_t cell, const StateIndex& s, double n);
  /// Lane-change step for one link: fills n̂ from n. Part of compute_demands.
  void lane_change_step(LinkId link);
  LaneChange lane_change_of(LaneGroupId lg, const StateIndex& s) const;
  /// β of a cell from the last lane-change step.
  double last_beta(LaneGroupId lg, std::size_t cell) const;

 private:
  struct Group {
    LaneGroupId id = 0;
    int grid_first = 0;
    std::vector<std::size_t> cells;  // flat indices, upstream to downstream
    FluidContent pending;            // received, applied at the next advance
    FluidContent released;           // accepted downstream this step
    std::vector<double> crossings;   // cumulative per local cell boundary
    double credit = 0.0;
    bool changed = false;            // n̂ computed for this step
    std::size_t first() const { return cells.front(); }
    std::size_t last() const { return cells.back(); }
  };
  struct LinkState {
    LinkId id = 0;
    RoadParams params;
    double structural_speed_kph = 0.0;
    double cell_length_m = 0.0;
    int grid_cells = 0;
    std::vector<Cell> cells;
    std::vector<double> beta;
    std::vector<Group> groups;  // inner to outer
  };

  Group& group(LaneGroupId lg);
  const Group& group(LaneGroupId lg) const;
  const LinkState& link_state(LinkId link) const;
  LinkState& link_state(LinkId link);
  double current_total(const LinkState& ls, const Group& g) const;
  double base_supply(const LinkState& ls, const Group& g) const;
  void rebuild_params(LinkState& ls);

  Options opts_;
  const Network* net_ = nullptr;
  const Routing* routing_ = nullptr;
  std::unique_ptr<LaneRouting> lanes_;
  std::map<LinkId, LinkState> links_state_;
  std::map<LaneGroupId, std::pair<LinkId, std::size_t>> group_index_;
};

}  // namespace hybridsim
