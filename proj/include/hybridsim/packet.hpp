#pragma once

#include <any>
#include <map>
#include <random>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "hybridsim/common.hpp"

namespace hybridsim {

using Rng = std::mt19937_64;

struct Vehicle {
  VehicleId id = 0;
  StateIndex state;
  double created_s = 0.0;
  bool probe = false;
  /// Free slot for model plugins that need to carry extra per-vehicle data.
  std::any extension;
};

class VehicleFactory {
 public:
  Vehicle make(StateIndex state, double now, bool probe = false) {
    Vehicle v;
    v.id = next_++;
    v.state = state;
    v.created_s = now;
    v.probe = probe;
    return v;
  }
  VehicleId peek_next_id() const { return next_; }

 private:
  VehicleId next_ = 1;
};

using FluidContent = std::map<StateIndex, double>;
using VehicleContent = std::map<StateIndex, std::vector<Vehicle>>;

/// Quantum of exchange between models: either real-valued amounts per state
/// (fluid) or whole vehicle objects per state. Empty entries are never stored.
class FluxPacket {
 public:
  FluxPacket() : content_(FluidContent{}) {}
  static FluxPacket fluid() { return FluxPacket(FluidContent{}); }
  static FluxPacket vehicles() { return FluxPacket(VehicleContent{}); }
  explicit FluxPacket(FluidContent c) : content_(std::move(c)) { prune(); }
  explicit FluxPacket(VehicleContent c) : content_(std::move(c)) { prune(); }

  bool is_fluid() const { return std::holds_alternative<FluidContent>(content_); }
  bool empty() const;
  /// Total vehicles (amount sum for fluid, object count otherwise).
  double total() const;
  double amount(const StateIndex& s) const;

  const FluidContent& fluid_content() const { return std::get<FluidContent>(content_); }
  const VehicleContent& vehicle_content() const { return std::get<VehicleContent>(content_); }
  FluidContent& fluid_content() { return std::get<FluidContent>(content_); }
  VehicleContent& vehicle_content() { return std::get<VehicleContent>(content_); }

  /// Adds to a fluid packet. Non-positive amounts are ignored.
  void add(const StateIndex& s, double amount);
  /// Adds to a vehicle packet, keyed by the vehicle's state.
  void add(Vehicle v);
  /// Merges another packet of the same representation.
  void merge(const FluxPacket& other);

  LaneGroupId origin = -1;
  RcId road_connection = kExitConnection;

 private:
  void prune();
  std::variant<FluidContent, VehicleContent> content_;
};

/// α = min(1, p̄/|p|); zero when p̄ is zero. Throws ProtocolError on negative sizes.
double compute_alpha(double packet_size, double max_packet_size);

struct PacketSplit {
  FluxPacket sent;
  FluxPacket remainder;
};

/// Uniform scaling of every amount by α; the remainder carries (1 - α).
PacketSplit scale_fluid_packet(const FluxPacket& p, double alpha);

/// Per state, the first floor(α n_s) vehicles (FIFO) are sent.
PacketSplit split_vehicle_packet(const FluxPacket& p, double alpha);

/// Dispatches on the packet representation.
PacketSplit split_packet(const FluxPacket& p, double alpha);

/// Each of n lane groups receives 1/n of every fluid amount; whole vehicles
/// are dealt round-robin in FIFO order starting at the first group.
std::vector<FluxPacket> distribute_uniform(const FluxPacket& p, std::size_t n);

/// Fluid amounts are apportioned in proportion to free space. Vehicles are
/// placed one at a time into the group with the largest remaining free space
/// (lowest index on ties). All-zero free space falls back to uniform.
std::vector<FluxPacket> distribute_equalizing(const FluxPacket& p, std::span<const double> free_space);

/// Vehicle packet to fluid: amount per state equals the vehicle count.
FluxPacket to_fluid(const FluxPacket& p);

/// Fluid to vehicle translation with a per-(lane group, state) residue that
/// emits a vehicle whenever it reaches one.
class FluidToVehicleTranslator {
 public:
  FluxPacket translate(const FluxPacket& p, LaneGroupId lg, double now, VehicleFactory& factory);
  double residue(LaneGroupId lg, const StateIndex& s) const;
  double total_residue(LaneGroupId lg) const;
  const std::map<StateIndex, double>* residues(LaneGroupId lg) const;

 private:
  std::map<LaneGroupId, std::map<StateIndex, double>> residue_;
};

}  // namespace hybridsim
