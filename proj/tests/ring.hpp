#pragma once

#include <algorithm>
#include <cmath>

#include "hybridsim/engine.hpp"
#include "hybridsim/newell.hpp"
#include "support.hpp"

namespace hybridsim::testing {

struct RingPoint {
  double density_vpkm = 0.0;
  double flow_vph = 0.0;           // density times mean speed
  double detector_flow_vph = 0.0;  // crossings of a fixed cross-section
};

/// Single-lane ring: one link whose only exit leads back to itself,
/// started from uniform spacing.
inline RingPoint ring_flow(int vehicles, double dt, int steps, double length = 1000.0) {
  Scenario s;
  s.run.duration_s = dt * steps;
  s.run.output_dt_s = 0.0;
  s.vehicle_types = {VehicleType{0, "car", RoutingBehavior::probabilistic}};
  s.network.links = {make_link(0, length, 1)};
  s.network.road_connections = {make_rc(0, 0, {1, 1}, 0, {1, 1})};
  s.models = {model("R", "newell", dt, {0})};
  SensorSpec det;
  det.id = 0;
  det.kind = SensorKind::fixed_local;
  det.dt_s = dt * steps;
  det.link = 0;
  det.position_m = length / 2;
  s.sensors = {det};

  Engine engine(s);
  auto& m = dynamic_cast<NewellModel&>(engine.model_of(0));
  const LaneGroupId g = engine.network().lane_groups_of(0)[0];
  VehicleFactory f;
  const double h = length / vehicles;
  for (int i = 0; i < vehicles; ++i) m.place(g, f.make(StateIndex{0, 0}, 0.0), length - (i + 0.5) * h);

  double speed_sum = 0.0;
  int samples = 0;
  engine.on_step([&](const Engine&, double) {
    speed_sum += m.lanegroup_speed_kph(g);
    ++samples;
  });
  engine.run();
  RingPoint p;
  p.density_vpkm = vehicles / length * 1000.0;
  p.flow_vph = p.density_vpkm * speed_sum / samples;
  p.detector_flow_vph = m.cumulative_crossings(0, length / 2) / (dt * steps) * 3600.0;
  return p;
}

inline double triangular_flow(const RoadParams& p, double k) {
  return std::max(0.0, std::min({p.speed_limit_kph * k, p.capacity_vphpl,
                                 p.wave_speed_kph() * (p.jam_density_vpkpl - k)}));
}

/// Step length at which the discrete follower rule has the triangular
/// diagram as its own: Δt = 1 / (ρ̄ w).
inline double matched_step_s(const RoadParams& p) {
  return 3600.0 / (p.jam_density_vpkpl * p.wave_speed_kph());
}

/// Flow-density relation of the discrete rule at uniform spacing.
inline double newell_model_flow(const RoadParams& p, double dt, double k) {
  const NewellMeans m = newell_means(p, 1, dt);
  const double h = 1000.0 / k;
  return k * newell_advance(m.dv, m.dw, m.df, h) / dt * 3.6;
}

}  // namespace hybridsim::testing
