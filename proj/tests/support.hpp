#pragma once

#include <string>
#include <vector>

#include "hybridsim/model.hpp"
#include "hybridsim/scenario.hpp"

namespace hybridsim::testing {

inline RoadParams seven_params() { return RoadParams{1000.0, 100.0, 100.0}; }

inline Link make_link(LinkId id, double length, int lanes, RoadParams p = seven_params()) {
  Link l;
  l.id = id;
  l.length_m = length;
  l.full_lanes = lanes;
  l.params = p;
  return l;
}

inline RoadConnection make_rc(RcId id, LinkId up, LaneSet up_lanes, LinkId dn, LaneSet dn_lanes) {
  return RoadConnection{id, up, up_lanes, dn, dn_lanes};
}

/// Links 0..n-1 in series, all lanes connected.
inline NetworkSpec chain(int n, double length, int lanes, RoadParams p = seven_params()) {
  NetworkSpec s;
  for (int i = 0; i < n; ++i) s.links.push_back(make_link(i, length, lanes, p));
  for (int i = 0; i + 1 < n; ++i) s.road_connections.push_back(make_rc(i, i, {1, lanes}, i + 1, {1, lanes}));
  return s;
}

inline Profile constant(double v) { return Profile{0.0, 1.0, {v}}; }

inline ModelSpec model(std::string id, std::string kind, double dt, std::vector<LinkId> links) {
  ModelSpec m;
  m.id = std::move(id);
  m.kind = std::move(kind);
  m.dt_s = dt;
  m.links = std::move(links);
  return m;
}

/// One probabilistic type, a constant source on link 0 and a single model.
inline Scenario chain_scenario(int n, int lanes, const std::string& kind, double dt, double demand_vph,
                               double duration) {
  Scenario s;
  s.run.duration_s = duration;
  s.run.output_dt_s = 10.0;
  s.vehicle_types = {VehicleType{0, "car", RoutingBehavior::probabilistic}};
  s.network = chain(n, 500.0, lanes);
  std::vector<LinkId> ids;
  for (int i = 0; i < n; ++i) ids.push_back(i);
  s.models = {model("M", kind, dt, ids)};
  DemandProfile d;
  d.id = 0;
  d.link = 0;
  d.type = 0;
  d.intensity_vph = constant(demand_vph);
  s.demands = {d};
  return s;
}

/// Four 500 m links, the last a one-lane bottleneck. Links 0-1 run on
/// model "A", links 2-3 on model "B".
inline Scenario pair_scenario(const std::string& a, const std::string& b, double demand_vph, double duration) {
  Scenario s = chain_scenario(4, 2, a, 2.0, demand_vph, duration);
  s.network.links[3].full_lanes = 1;
  s.network.road_connections[2].downstream_lanes = {1, 1};
  s.models = {model("A", a, 2.0, {0, 1}), model("B", b, 2.0, {2, 3})};
  return s;
}

inline std::string scenario_path(const std::string& name) {
  return std::string(HYBRIDSIM_SCENARIO_DIR) + "/" + name + ".json";
}

/// Minimal engine services for driving one model by hand.
class TestContext : public SimContext {
 public:
  TestContext(const Network& net, const Routing& routing, std::uint64_t seed = 1)
      : net_(net), routing_(routing), rng_(seed) {}
  double now() const override { return now_; }
  Rng& rng() override { return rng_; }
  VehicleFactory& factory() override { return factory_; }
  const Network& network() const override { return net_; }
  const Routing& routing() const override { return routing_; }
  double distance_to_last_vehicle(RcId) const override { return eta_; }

  double now_ = 0.0;
  double eta_ = kInfinity;

 private:
  const Network& net_;
  const Routing& routing_;
  Rng rng_;
  VehicleFactory factory_;
};

/// A single terminal link with one probabilistic type.
struct OneLink {
  Network net;
  Routing routing;
  explicit OneLink(double length = 500.0, int lanes = 1, RoadParams p = seven_params()) {
    net = Network::build(NetworkSpec{{make_link(0, length, lanes, p)}, {}});
    routing = Routing(net, {VehicleType{0, "car", RoutingBehavior::probabilistic}}, {}, {});
  }
  LaneGroupId group() const { return net.lane_groups_of(0)[0]; }
};

inline const StateIndex kLeave{0, kExitLink};

}  // namespace hybridsim::testing
