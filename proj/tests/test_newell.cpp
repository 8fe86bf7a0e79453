#include <doctest.h>

#include <cmath>

#include "hybridsim/newell.hpp"
#include "ring.hpp"
#include "support.hpp"

using namespace hybridsim;
using namespace hybridsim::testing;

namespace {

FluxPacket one_car(VehicleFactory& f, double now = 0.0) {
  FluxPacket p = FluxPacket::vehicles();
  p.add(f.make(kLeave, now));
  return p;
}

std::vector<FluxPacket> one(FluxPacket p) {
  std::vector<FluxPacket> v;
  v.push_back(std::move(p));
  return v;
}

// Accept every release request, then advance.
void step(NewellModel& m, TestContext& ctx) {
  for (const auto& req : m.compute_demands(ctx)) m.on_released(req);
  m.advance_state(ctx);
  ctx.now_ += m.dt();
}

// Link 0 feeds link 1, which no model under test owns; the context's
// distance query stands in for it.
struct Feeder {
  Network net;
  Routing routing;
  explicit Feeder(int lanes = 1) {
    net = Network::build(chain(2, 500, lanes));
    routing = Routing(net, {VehicleType{0, "car", RoutingBehavior::probabilistic}}, {}, {});
  }
  LaneGroupId group() const { return net.lane_groups_of(0)[0]; }
};

const StateIndex kOn{0, 1};

}  // namespace

TEST_CASE("per-step means") {
  const NewellMeans m = newell_means(seven_params(), 2, 2.0);
  CHECK(m.dv == doctest::Approx(55.5556).epsilon(1e-5));
  CHECK(m.dw == doctest::Approx(1000.0 / 90.0 / 3.6 * 2.0).epsilon(1e-12));
  CHECK(m.df == doctest::Approx(2000.0 * 2.0 / 3600.0).epsilon(1e-12));
}

TEST_CASE("follower rule") {
  CHECK(newell_advance(100 / 3.6 * 2, 6.0, 1.0, kInfinity) == doctest::Approx(55.5556).epsilon(1e-5));
  CHECK(newell_advance(50, 20, 25.0 / 30.0, 20) == 0.0);
  CHECK(newell_advance(50, 20, 25.0 / 30.0, 30) == doctest::Approx(10.0));
  CHECK(newell_advance(50, 5, 0.1, 30) == doctest::Approx(3.0));  // capacity term binds
  CHECK(newell_advance(50, 5, 0.0, kInfinity) == 0.0);
}

TEST_CASE("supply counts jam spacings upstream of the last vehicle") {
  OneLink l(500, 1);
  NewellModel m("C", {0}, 2.0);
  m.initialize(l.net, l.routing);
  const LaneGroupId g = l.group();
  CHECK(m.jam_spacing_m(g) == doctest::Approx(10.0));
  CHECK(m.lane_group_supply(g, true) == 50);
  VehicleFactory f;
  m.place(g, f.make(kLeave, 0), 25.0);
  CHECK(m.lane_group_supply(g, true) == 2);
  m.place(g, f.make(kLeave, 0), 5.0);
  CHECK(m.lane_group_supply(g, true) == 0);
  CHECK_THROWS_AS(m.place(g, f.make(kLeave, 0), 5.0), ProtocolError);
}

TEST_CASE("distance to the last vehicle is the minimum over entered groups") {
  // Link 0 feeds both lanes of link 1; link 1 splits lane by lane to links 2 and 3.
  NetworkSpec s;
  s.links = {make_link(0, 500, 2), make_link(1, 500, 2), make_link(2, 500, 1), make_link(3, 500, 1)};
  s.road_connections = {make_rc(0, 0, {1, 2}, 1, {1, 2}), make_rc(1, 1, {1, 1}, 2, {1, 1}),
                        make_rc(2, 1, {2, 2}, 3, {1, 1})};
  Network net = Network::build(s);
  Routing routing(net, {VehicleType{0, "car", RoutingBehavior::probabilistic}}, {},
                  {SplitProfile{1, 0, {{2, constant(0.5)}, {3, constant(0.5)}}}});
  NewellModel m("C", {1}, 2.0);
  m.initialize(net, routing);
  const auto groups = net.lane_groups_of(1);
  REQUIRE(groups.size() == 2);
  CHECK(m.distance_to_last_vehicle(1, 0) == 500);
  VehicleFactory f;
  m.place(groups[0], f.make(StateIndex{0, 2}, 0), 120);
  CHECK(m.distance_to_last_vehicle(1, 0) == 120);
  m.place(groups[1], f.make(StateIndex{0, 3}, 0), 80);
  CHECK(m.distance_to_last_vehicle(1, 0) == 80);
}

TEST_CASE("arrivals enter at the upstream end") {
  OneLink l(500, 1);
  NewellModel m("C", {0}, 2.0);
  m.initialize(l.net, l.routing);
  TestContext ctx(l.net, l.routing);
  const LaneGroupId g = l.group();

  SUBCASE("an arrival from a non-car-following sender drives its first step") {
    m.send_packets(one(one_car(ctx.factory())), 0, kSourceEntry, ctx);
    m.advance_state(ctx);
    REQUIRE(m.positions(g).size() == 1);
    CHECK(m.positions(g)[0] == doctest::Approx(m.means(g).dv));
  }
}

TEST_CASE("a vehicle crossing between car-following links keeps its overshoot") {
  Feeder l;
  NewellModel m("C", {0, 1}, 2.0);
  m.initialize(l.net, l.routing);
  TestContext ctx(l.net, l.routing);
  m.place(l.group(), ctx.factory().make(kOn, 0), 490.0);
  auto requests = m.compute_demands(ctx);
  REQUIRE(requests.size() == 1);
  CHECK(requests[0].road_connection == 0);
  m.on_released(requests[0]);
  FluxPacket moved = requests[0];
  moved.vehicle_content().begin()->second.front().state = kLeave;
  m.send_packets(one(std::move(moved)), 1, 0, ctx);
  m.advance_state(ctx);
  const LaneGroupId g1 = l.net.lane_groups_of(1)[0];
  REQUIRE(m.positions(g1).size() == 1);
  CHECK(m.positions(g1)[0] == doctest::Approx(490.0 + m.means(g1).dv - 500.0));
  CHECK(m.lanegroup_speed_kph(g1) == doctest::Approx(100.0));
}

TEST_CASE("a full entrance buffers until a jam spacing opens") {
  Feeder l;
  NewellModel m("C", {0}, 2.0);
  m.initialize(l.net, l.routing);
  TestContext ctx(l.net, l.routing);
  ctx.eta_ = 0.0;
  const LaneGroupId g = l.group();
  {
    m.place(g, ctx.factory().make(kOn, 0), 4.0);
    FluxPacket p = FluxPacket::vehicles();
    p.add(ctx.factory().make(kOn, 0));
    m.send_packets(one(std::move(p)), 0, kSourceEntry, ctx);
    CHECK(m.buffer_size(g) == 1);
    CHECK(m.total_vehicles_in_lanegroup(g) == 2);
    int waited = 0;
    while (m.buffer_size(g) == 1 && waited < 100) {
      step(m, ctx);
      ++waited;
    }
    CHECK(m.buffer_size(g) == 0);
    CHECK(m.positions(g).size() == 2);
    CHECK(m.positions(g)[0] - m.positions(g)[1] >= m.jam_spacing_m(g) - 1e-9);
  }
}

TEST_CASE("platoon behind a stopped leader compresses to jam spacing") {
  // Two lanes: the 5 m jam spacing is below δw, so δw sets the gap.
  Feeder l(2);
  NewellModel m("C", {0}, 2.0);
  m.initialize(l.net, l.routing);
  TestContext ctx(l.net, l.routing);
  ctx.eta_ = 0.0;  // link 1 is full
  const LaneGroupId g = l.group();
  for (int i = 0; i < 30; ++i) m.place(g, ctx.factory().make(kOn, 0), 400.0 - 12.0 * i);
  for (int k = 0; k < 500; ++k) step(m, ctx);
  const auto x = m.positions(g);
  const double dw = m.means(g).dw;
  CHECK(x.front() == doctest::Approx(500.0 - dw));
  for (std::size_t i = 1; i < x.size(); ++i) CHECK(x[i - 1] - x[i] == doctest::Approx(dw).epsilon(1e-9));
  // 500 m of two lanes hold 500 / δw vehicles at this step length.
  CHECK(500.0 / dw == doctest::Approx(81.0).epsilon(1e-9));
}

TEST_CASE("stochastic motion never collides and never reverses") {
  OneLink l(500, 1);
  NewellModel m("C", {0}, 2.0, NewellModel::Options{10.0, 3.0, 0.3});
  m.initialize(l.net, l.routing);
  TestContext ctx(l.net, l.routing, 7);
  const LaneGroupId g = l.group();
  std::size_t injected = 0, exited = 0;
  for (int k = 0; k < 2000; ++k) {
    ctx.eta_ = (k / 100) % 2 == 0 ? kInfinity : 0.0;  // exit alternately open and blocked
    if (m.lane_group_supply(g, true) > 0 && k % 2 == 0) {
      m.send_packets(one(one_car(ctx.factory(), ctx.now_)), 0, kSourceEntry, ctx);
      ++injected;
    }
    const auto before = m.positions(g);
    std::size_t left = 0;
    for (const auto& req : m.compute_demands(ctx)) {
      m.on_released(req);
      left += static_cast<std::size_t>(req.total());
    }
    exited += left;
    m.advance_state(ctx);
    ctx.now_ += 2.0;
    const auto after = m.positions(g);
    for (std::size_t i = 1; i < after.size(); ++i) REQUIRE(after[i - 1] > after[i]);
    for (double x : after) REQUIRE((x >= 0.0 && x <= 500.0));
    for (std::size_t i = 0; i < std::min(before.size() - left, after.size()); ++i)
      REQUIRE(after[i] >= before[i + left]);
    CHECK(injected == exited + after.size() + m.buffer_size(g));
  }
  CHECK(exited > 0);
}

TEST_CASE("ring road reproduces the triangular diagram at the matched step") {
  const RoadParams p = seven_params();
  const double dt = matched_step_s(p);
  CHECK(dt == doctest::Approx(3.24));
  for (int n : {2, 5, 8, 10, 20, 40, 60, 80, 95}) {
    CAPTURE(n);
    const RingPoint r = ring_flow(n, dt, 400);
    const double q = triangular_flow(p, r.density_vpkm);
    CHECK(r.flow_vph == doctest::Approx(q).epsilon(0.02));
    CHECK(r.detector_flow_vph == doctest::Approx(q).epsilon(0.05));
  }
}

TEST_CASE("ring road in free flow at a shorter step") {
  const RoadParams p = seven_params();
  for (int n : {2, 5, 9}) {
    CAPTURE(n);
    const RingPoint r = ring_flow(n, 2.0, 500);
    CHECK(r.flow_vph == doctest::Approx(newell_model_flow(p, 2.0, r.density_vpkm)).epsilon(1e-9));
    CHECK(r.flow_vph == doctest::Approx(triangular_flow(p, r.density_vpkm)).epsilon(1e-9));
  }
}

TEST_CASE("speed limit scales the free-flow advance") {
  OneLink l;
  NewellModel m("C", {0}, 2.0);
  m.initialize(l.net, l.routing);
  const double dw = m.means(l.group()).dw;
  m.set_speed_limit(0, 50.0);
  CHECK(m.means(l.group()).dv == doctest::Approx(50 / 3.6 * 2));
  CHECK(m.means(l.group()).dw == dw);
  CHECK_THROWS_AS(m.set_speed_limit(0, 0.0), ConfigError);
}
