#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hybridsim/network.hpp"
#include "hybridsim/packet.hpp"

namespace hybridsim {

enum class RoutingBehavior { routed, probabilistic };

struct VehicleType {
  TypeId id = 0;
  std::string name;
  RoutingBehavior routing = RoutingBehavior::probabilistic;
  friend bool operator==(const VehicleType&, const VehicleType&) = default;
};

struct Route {
  RouteId id = 0;
  std::vector<LinkId> links;

  bool contains(LinkId link) const;
  /// Link following `link`, kExitLink for the last link. Throws RoutingError
  /// if the route does not contain `link`.
  LinkId successor(LinkId link) const;
  friend bool operator==(const Route&, const Route&) = default;
};

/// Piecewise-constant, left-continuous sample sequence. Times before the
/// start use the first sample, times after the end use the last.
struct Profile {
  double start_s = 0.0;
  double period_s = 1.0;
  std::vector<double> values;

  double at(double t) const;
  friend bool operator==(const Profile&, const Profile&) = default;
};

struct DemandProfile {
  ElementId id = 0;
  LinkId link = 0;
  TypeId type = 0;
  std::optional<RouteId> route;
  Profile intensity_vph;
  friend bool operator==(const DemandProfile&, const DemandProfile&) = default;
};

/// Next-link probabilities for vehicles of `type` entering `link`.
struct SplitProfile {
  LinkId link = 0;
  TypeId type = 0;
  std::map<LinkId, Profile> ratios;
  friend bool operator==(const SplitProfile&, const SplitProfile&) = default;
};

/// Static demand description plus the mutable overrides written by actuators.
class Routing {
 public:
  Routing() = default;
  Routing(const Network& net, std::vector<VehicleType> types, std::vector<Route> routes,
          std::vector<SplitProfile> splits);

  const VehicleType& type(TypeId id) const;
  const Route& route(RouteId id) const;
  bool has_type(TypeId id) const { return types_.contains(id); }
  bool has_route(RouteId id) const { return routes_.contains(id); }

  /// Non-zero next-link ratios for `type` entering `link` at time t.
  /// Terminal links yield {(kExitLink, 1)}. Throws ConfigError when a
  /// non-terminal link has no split row for the type.
  std::vector<std::pair<LinkId, double>> split_ratios(LinkId link, TypeId type, double t) const;

  /// Next link of a state that is travelling on `current`.
  LinkId next_link(const StateIndex& s, LinkId current) const;

  /// Route id a routed state carries after entering `link` (router redirects applied).
  RouteId route_on_entry(RouteId route, TypeId type, LinkId link) const;

  /// Constant ratios that replace the profile for t >= from_s. Throws
  /// ConfigError if ratios are negative or do not sum to one.
  void override_split(LinkId link, TypeId type, double from_s, std::map<LinkId, double> ratios);

  /// Router command: vehicles of `type` on `from` are switched to `to`
  /// (new departures always; vehicles already en route when `en_route`).
  void redirect(TypeId type, RouteId from, RouteId to, bool en_route);
  RouteId departure_route(TypeId type, RouteId route) const;

 private:
  const Network* net_ = nullptr;
  std::map<TypeId, VehicleType> types_;
  std::map<RouteId, Route> routes_;
  std::map<std::pair<LinkId, TypeId>, SplitProfile> splits_;
  std::map<std::pair<LinkId, TypeId>, std::vector<std::pair<double, std::map<LinkId, double>>>> split_overrides_;
  struct Redirect {
    RouteId to;
    bool en_route;
  };
  std::map<std::pair<TypeId, RouteId>, Redirect> redirects_;
};

/// Resolves state keys for a packet that has just entered `entered_link`.
/// Fluid content of probabilistic types is divided over the non-zero split
/// ratios; whole vehicles each draw one next link. Routed states keep their
/// (possibly redirected) route id after checking it contains the link.
FluxPacket assign_next_link(const FluxPacket& p, LinkId entered_link, double now,
                            const Routing& routing, Rng& rng);

/// A source with its limitless buffer of untransmitted demand.
class Source {
 public:
  explicit Source(DemandProfile profile) : profile_(std::move(profile)) {}

  const DemandProfile& profile() const { return profile_; }
  /// Demand-modifier: replaces the intensity for t >= from_s.
  void override_intensity(double from_s, Profile p);
  double intensity_at(double t) const;

  /// Offered packet for one step: buffered demand plus this step's
  /// intensity·Δt over (now, now + dt] (fluid target) or a Poisson draw of whole vehicles
  /// (vehicle target). The buffer is emptied into the packet; hand the
  /// rejected part back with retain().
  FluxPacket step(double now, double dt, bool fluid_target, const Routing& routing,
                  VehicleFactory& factory, Rng& rng);
  void retain(const FluxPacket& remainder);

  double buffered() const;
  double total_demanded() const { return demanded_; }

 private:
  StateIndex entry_state(const Routing& routing) const;

  DemandProfile profile_;
  std::vector<std::pair<double, Profile>> overrides_;
  double fluid_buffer_ = 0.0;
  std::deque<Vehicle> vehicle_buffer_;
  double demanded_ = 0.0;
};

}  // namespace hybridsim
