#include <doctest.h>

#include <cmath>

#include "hybridsim/meso.hpp"
#include "support.hpp"

using namespace hybridsim;
using namespace hybridsim::testing;

namespace {

FluxPacket cars(VehicleFactory& f, int n, double now = 0.0) {
  FluxPacket p = FluxPacket::vehicles();
  for (int i = 0; i < n; ++i) p.add(f.make(kLeave, now));
  return p;
}

std::vector<FluxPacket> one(FluxPacket p) {
  std::vector<FluxPacket> v;
  v.push_back(std::move(p));
  return v;
}

/// compute_demands, accept everything, advance.
std::size_t step(MesoModel& m, TestContext& ctx) {
  std::size_t n = 0;
  for (const auto& req : m.compute_demands(ctx)) {
    m.on_released(req);
    n += static_cast<std::size_t>(req.total());
  }
  m.advance_state(ctx);
  ctx.now_ += m.dt();
  return n;
}

}  // namespace

TEST_CASE("travel time, capacity and supply") {
  OneLink one_lane(500, 1);
  MesoModel m("B", {0}, 2.0);
  m.initialize(one_lane.net, one_lane.routing);
  const LaneGroupId g = one_lane.group();
  CHECK(m.travel_time_s(g) == doctest::Approx(18.0));
  CHECK(m.capacity(g) == 50);
  CHECK(m.lane_group_supply(g, true) == 50);
  CHECK(m.distance_to_last_vehicle(0, kSourceEntry) == 500);

  TestContext ctx(one_lane.net, one_lane.routing);
  m.send_packets(one(cars(ctx.factory(), 30)), 0, kSourceEntry, ctx);
  CHECK(m.transit_size(g) == 30);
  CHECK(m.lane_group_supply(g, true) == 20);
  m.send_packets(one(cars(ctx.factory(), 20)), 0, kSourceEntry, ctx);
  CHECK(m.lane_group_supply(g, true) == 0);
  CHECK(m.distance_to_last_vehicle(0, kSourceEntry) == 0);
}

TEST_CASE("distance to the last vehicle is linear in occupancy") {
  OneLink l(500, 2);
  MesoModel m("B", {0}, 2.0);
  m.initialize(l.net, l.routing);
  TestContext ctx(l.net, l.routing);
  m.send_packets(one(cars(ctx.factory(), 50)), 0, kSourceEntry, ctx);
  CHECK(m.distance_to_last_vehicle(0, kSourceEntry) == 250);
}

TEST_CASE("vehicles become eligible after the free-flow travel time") {
  OneLink l;
  MesoModel m("B", {0}, 2.0);
  m.initialize(l.net, l.routing);
  TestContext ctx(l.net, l.routing);
  const LaneGroupId g = l.group();
  m.send_packets(one(cars(ctx.factory(), 1)), 0, kSourceEntry, ctx);
  m.advance_state(ctx);  // admitted at t = 0
  for (ctx.now_ = 2.0; ctx.now_ < 18.0 - 1e-9; ctx.now_ += 2.0) {
    m.compute_demands(ctx);
    CHECK(m.waiting_size(g) == 0);
  }
  CHECK(ctx.now_ == 18.0);
  m.compute_demands(ctx);
  CHECK(m.waiting_size(g) == 1);
}

TEST_CASE("full target buffers arrivals until a departure") {
  OneLink l(50, 1);  // holds 5
  MesoModel m("B", {0}, 2.0);
  m.initialize(l.net, l.routing);
  TestContext ctx(l.net, l.routing);
  const LaneGroupId g = l.group();
  m.send_packets(one(cars(ctx.factory(), 6)), 0, kSourceEntry, ctx);
  m.advance_state(ctx);
  CHECK(m.transit_size(g) + m.waiting_size(g) == 5);
  CHECK(m.buffer_size(g) == 1);
  CHECK(m.total_vehicles_in_lanegroup(g) == 6);
  std::size_t departed = 0;
  while (departed == 0) departed = step(m, ctx);
  CHECK(m.buffer_size(g) == 0);
  CHECK(m.transit_size(g) + m.waiting_size(g) == 6 - departed);
}

TEST_CASE("fractional fluid materializes through the residue") {
  OneLink l;
  MesoModel m("B", {0}, 2.0);
  m.initialize(l.net, l.routing);
  TestContext ctx(l.net, l.routing);
  const LaneGroupId g = l.group();
  std::vector<std::size_t> sizes;
  for (int k = 0; k < 5; ++k) {
    FluxPacket p = FluxPacket::fluid();
    p.add(kLeave, 0.4);
    m.send_packets(one(p), 0, kSourceEntry, ctx);
    m.advance_state(ctx);
    sizes.push_back(m.transit_size(g));
    CHECK(m.total_vehicles_in_lanegroup(g) == doctest::Approx(0.4 * (k + 1)));
  }
  CHECK(sizes == std::vector<std::size_t>{0, 0, 1, 1, 2});
}

TEST_CASE("saturated service is Poisson at capacity, FIFO, with dwell at least the travel time") {
  OneLink l(500, 2);
  MesoModel m("B", {0}, 2.0, MesoModel::Options{true});
  m.initialize(l.net, l.routing);
  TestContext ctx(l.net, l.routing, 17);
  const LaneGroupId g = l.group();
  const int steps = 20000;
  const double mean = 2000.0 * 2.0 / 3600.0;
  double warm = 0.0, served = 0.0;
  for (int k = 0; k < steps + 50; ++k) {
    const auto space = static_cast<int>(m.lane_group_supply(g, true));
    if (space > 0) m.send_packets(one(cars(ctx.factory(), space, ctx.now_)), 0, kSourceEntry, ctx);
    const double n = static_cast<double>(step(m, ctx));
    (k < 50 ? warm : served) += n;
  }
  CHECK(warm >= 0.0);
  CHECK(std::abs(served / steps - mean) <= 3.0 * std::sqrt(mean / steps));
  VehicleId last = 0;
  for (const auto& d : m.dwells()) {
    CHECK(d.vehicle > last);
    last = d.vehicle;
    CHECK(d.departed_s - d.entered_s >= m.travel_time_s(g) - 1e-9);
  }
}

TEST_CASE("speed limit changes the travel time") {
  OneLink l;
  MesoModel m("B", {0}, 2.0);
  m.initialize(l.net, l.routing);
  m.set_speed_limit(0, 50.0);
  CHECK(m.travel_time_s(l.group()) == doctest::Approx(36.0));
  CHECK(m.speed_limit(0) == 50.0);
}
