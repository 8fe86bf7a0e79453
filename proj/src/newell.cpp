#include "hybridsim/newell.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace hybridsim {

namespace {

// Motion carried across a link end between car-following groups.
struct Carry {
  double overshoot = 0.0;
  double advance = 0.0;  // the whole step's movement
};

}  // namespace

NewellMeans newell_means(const RoadParams& p, int lanes, double dt) {
  NewellMeans m;
  m.dv = p.speed_limit_kph / 3.6 * dt;
  m.dw = p.wave_speed_kph() / 3.6 * dt;
  m.df = p.capacity_vphpl * lanes * dt / 3600.0;
  return m;
}

double newell_advance(double dv, double dw, double df, double headway) {
  double limit = dv;
  if (std::isfinite(headway)) limit = std::min({limit, headway - dw, headway * df});
  else if (df <= 0.0) limit = 0.0;
  return std::max(0.0, limit);
}

NewellModel::NewellModel(std::string id, std::vector<LinkId> links, double dt, Options opts)
    : Model(std::move(id), std::move(links), dt), opts_(opts) {
  if (opts_.sigma_v < 0.0 || opts_.sigma_w < 0.0 || opts_.sigma_f < 0.0)
    throw ConfigError(fmt::format("model {}: standard deviations must be non-negative", this->id()));
}

void NewellModel::initialize(const Network& net, const Routing& routing) {
  net_ = &net;
  lanes_ = std::make_unique<LaneRouting>(net, routing);
  groups_.clear();
  for (LinkId id : links()) {
    const Link& link = net.link(id);
    speed_limit_[id] = link.params.speed_limit_kph;
    for (LaneGroupId gid : net.lane_groups_of(id)) {
      const LaneGroup& lg = net.lane_group(gid);
      Group g;
      g.id = gid;
      g.link = id;
      g.length_m = lg.length_m;
      g.offset_m = lg.reaches_upstream_end() ? 0.0 : link.length_m - lg.length_m;
      g.spacing_m = 1000.0 / (link.params.jam_density_vpkpl * lg.num_lanes);
      groups_.emplace(gid, std::move(g));
    }
    set_means(id);
  }
}

void NewellModel::set_means(LinkId link) {
  RoadParams p = net_->link(link).params;
  const double wave = p.wave_speed_kph();
  p.speed_limit_kph = speed_limit_.at(link);
  for (LaneGroupId gid : net_->lane_groups_of(link)) {
    Group& g = group(gid);
    g.means = newell_means(p, net_->lane_group(gid).num_lanes, dt());
    g.means.dw = wave / 3.6 * dt();
  }
}

NewellModel::Group& NewellModel::group(LaneGroupId lg) {
  auto it = groups_.find(lg);
  if (it == groups_.end()) throw ProtocolError(fmt::format("model {}: unknown lane group {}", id(), lg));
  return it->second;
}

const NewellModel::Group& NewellModel::group(LaneGroupId lg) const {
  return const_cast<NewellModel*>(this)->group(lg);
}

double NewellModel::draw(double mean, double sigma, Rng& rng) const {
  if (sigma <= 0.0) return mean;
  std::normal_distribution<double> d(mean, sigma);
  for (int i = 0; i < 1000; ++i) {
    const double x = d(rng);
    if (x >= 0.0) return x;
  }
  return 0.0;
}

double NewellModel::lane_group_supply(LaneGroupId h, bool) const {
  const Group& g = group(h);
  const double gap = g.cars.empty() ? g.length_m : g.cars.back().x;
  const double n = std::floor(gap / g.spacing_m + 1e-9) - static_cast<double>(g.buffer.size());
  return std::max(0.0, n);
}

LaneGroupId NewellModel::choose_target(LinkId link, RcId r, const StateIndex& s) const {
  const auto targets = lanes_->targets(link, s);
  if (targets.empty())
    throw RoutingError(fmt::format("link {}: no lane group leads on for state {}", link, to_string(s)));
  const auto entered = net_->downstream_lane_groups(link, r);
  auto pick = [&](bool within_entry) -> std::optional<LaneGroupId> {
    std::optional<LaneGroupId> best;
    double best_space = -1.0;
    for (LaneGroupId t : targets) {
      if (within_entry && std::find(entered.begin(), entered.end(), t) == entered.end()) continue;
      const double sp = lane_group_supply(t, true);
      if (!best || sp > best_space) {
        best = t;
        best_space = sp;
      }
    }
    return best;
  };
  if (auto t = pick(true)) return *t;
  return *pick(false);
}

void NewellModel::send_packets(std::vector<FluxPacket> packets, LinkId link, RcId r, SimContext& ctx) {
  const auto entered = net_->downstream_lane_groups(link, r);
  if (entered.empty()) throw ProtocolError(fmt::format("link {}: road connection {} enters no lane group", link, r));
  for (FluxPacket& p : packets) {
    if (p.empty()) continue;
    if (p.is_fluid()) p = translator_.translate(p, entered.front(), ctx.now(), ctx.factory());
    std::vector<Vehicle> vs;
    for (auto& [s, list] : p.vehicle_content())
      for (Vehicle& v : list) vs.push_back(std::move(v));
    std::sort(vs.begin(), vs.end(), [](const Vehicle& a, const Vehicle& b) { return a.id < b.id; });
    for (Vehicle& v : vs) {
      const Carry* c = std::any_cast<Carry>(&v.extension);
      Arrival a{v, 0.0, c == nullptr, 0.0};
      if (c) {
        a.position_m = std::max(0.0, c->overshoot);
        a.upstream_advance = c->advance - c->overshoot;
      }
      a.vehicle.extension.reset();
      group(choose_target(link, r, v.state)).buffer.push_back(std::move(a));
    }
  }
}

double NewellModel::distance_to_last_vehicle(LinkId link, RcId r) const {
  double best = kInfinity;
  for (LaneGroupId h : net_->downstream_lane_groups(link, r)) {
    const Group& g = group(h);
    double d = g.cars.empty() ? g.length_m : g.cars.back().x;
    if (!g.buffer.empty()) d = std::min(d, g.buffer.back().position_m);
    best = std::min(best, d);
  }
  return std::isfinite(best) ? best : 0.0;
}

std::vector<FluxPacket> NewellModel::compute_demands(SimContext& ctx) {
  std::vector<FluxPacket> out;
  for (auto& [gid, g] : groups_) {
    std::map<RcId, FluxPacket> by_rc;
    bool prefix = true;
    for (std::size_t i = 0; i < g.cars.size(); ++i) {
      Car& c = g.cars[i];
      double h;
      std::optional<RcId> rc;
      if (i == 0) {
        rc = lanes_->exit_for(gid, c.vehicle.state);
        if (!rc)
          throw RoutingError(fmt::format("lane group {}: cannot serve state {}", gid, to_string(c.vehicle.state)));
        const double eta = *rc == kExitConnection ? kInfinity : ctx.distance_to_last_vehicle(*rc);
        h = (g.length_m - c.x) + eta;
      } else {
        h = g.cars[i - 1].x - c.x;
      }
      const double dv = draw(g.means.dv, opts_.sigma_v, ctx.rng());
      const double dw = draw(g.means.dw, opts_.sigma_w, ctx.rng());
      const double df = draw(g.means.df, opts_.sigma_f, ctx.rng());
      c.plan = newell_advance(dv, dw, df, h);
      if (prefix && c.plan > 0.0 && c.x + c.plan >= g.length_m) {
        if (!rc) rc = lanes_->exit_for(gid, c.vehicle.state);
        if (!rc)
          throw RoutingError(fmt::format("lane group {}: cannot serve state {}", gid, to_string(c.vehicle.state)));
        Vehicle v = c.vehicle;
        v.extension = Carry{c.x + c.plan - g.length_m, c.plan};
        auto [it, fresh] = by_rc.try_emplace(*rc, FluxPacket::vehicles());
        it->second.add(std::move(v));
      } else {
        prefix = false;
      }
    }
    for (auto& [rc, p] : by_rc) {
      p.origin = gid;
      p.road_connection = rc;
      out.push_back(std::move(p));
    }
  }
  return out;
}

void NewellModel::on_released(const FluxPacket& sent) {
  if (sent.empty()) return;
  Group& g = group(sent.origin);
  for (const auto& [s, list] : sent.vehicle_content())
    for (const Vehicle& v : list) g.released.push_back(v.id);
}

void NewellModel::count_crossings(const Group& g, double from_m, double to_m) {
  auto it = detectors_.find(g.link);
  if (it == detectors_.end()) return;
  const double a = g.offset_m + from_m;
  const double b = g.offset_m + to_m;
  for (auto& [pos, n] : it->second)
    if (pos > a && pos <= b) n += 1.0;
}

void NewellModel::advance_state(SimContext&) {
  for (auto& [gid, g] : groups_) {
    std::sort(g.released.begin(), g.released.end());
    std::size_t gone = 0;
    while (!g.cars.empty() && std::binary_search(g.released.begin(), g.released.end(), g.cars.front().vehicle.id)) {
      count_crossings(g, g.cars.front().x, g.length_m);
      g.cars.pop_front();
      ++gone;
    }
    if (gone != g.released.size())
      throw InvariantError(fmt::format("lane group {}: released vehicles are not a queue head", gid));
    g.released.clear();

    for (std::size_t i = 0; i < g.cars.size(); ++i) {
      Car& c = g.cars[i];
      const double old = c.x;
      double x = std::min(c.x + c.plan, g.length_m);
      if (i > 0) x = std::min(x, g.cars[i - 1].x - 1e-9);
      c.x = std::max(old, x);
      c.last_advance = c.x - old;
      c.plan = 0.0;
      count_crossings(g, old, c.x);
    }

    while (!g.buffer.empty()) {
      Arrival& a = g.buffer.front();
      if (a.at_entrance) {
        const NewellMeans m = means(gid);
        a.position_m = newell_advance(m.dv, m.dw, m.df, g.cars.empty() ? kInfinity : g.cars.back().x);
      }
      double x;
      if (g.cars.empty()) {
        x = std::min(a.position_m, g.length_m);
      } else if (g.cars.back().x >= g.spacing_m) {
        x = std::min(a.position_m, g.cars.back().x - g.spacing_m);
      } else {
        break;
      }
      count_crossings(g, -1.0, x);
      g.cars.push_back({std::move(a.vehicle), x, 0.0, a.upstream_advance + x});
      g.buffer.pop_front();
    }
  }
}

double NewellModel::total_vehicles_in_lanegroup(LaneGroupId lg) const {
  double t = 0.0;
  for (const auto& [s, n] : vehicles_by_state(lg)) t += n;
  return t;
}

std::map<StateIndex, double> NewellModel::vehicles_by_state(LaneGroupId lg) const {
  const Group& g = group(lg);
  std::map<StateIndex, double> out;
  for (const Car& c : g.cars) out[c.vehicle.state] += 1.0;
  for (const Arrival& a : g.buffer) out[a.vehicle.state] += 1.0;
  if (const auto* res = translator_.residues(lg))
    for (const auto& [s, r] : *res)
      if (r != 0.0) out[s] += r;
  return out;
}

double NewellModel::lanegroup_speed_kph(LaneGroupId lg) const {
  const Group& g = group(lg);
  if (g.cars.empty()) return speed_limit(g.link);
  double sum = 0.0;
  for (const Car& c : g.cars) sum += c.last_advance;
  return sum / static_cast<double>(g.cars.size()) / dt() * 3.6;
}

void NewellModel::register_detector(LinkId link, double position_m) {
  if (!manages(link)) throw ProtocolError(fmt::format("model {}: does not manage link {}", id(), link));
  detectors_[link].try_emplace(position_m, 0.0);
}

double NewellModel::cumulative_crossings(LinkId link, double position_m) const {
  auto it = detectors_.find(link);
  if (it != detectors_.end())
    for (const auto& [pos, n] : it->second)
      if (std::abs(pos - position_m) < 1e-6) return n;
  throw ProtocolError(fmt::format("link {}: no detector registered at {} m", link, position_m));
}

double NewellModel::local_density_vpkm(LinkId link, double position_m) const {
  const double L = net_->link(link).length_m;
  const double a = std::max(0.0, position_m - kDetectorWindowM);
  const double b = std::min(L, position_m + kDetectorWindowM);
  double n = 0.0;
  for (LaneGroupId gid : net_->lane_groups_of(link)) {
    const Group& g = group(gid);
    for (const Car& c : g.cars) {
      const double x = g.offset_m + c.x;
      if (x > a && x <= b) n += 1.0;
    }
  }
  return b > a ? n / (b - a) * 1000.0 : 0.0;
}

double NewellModel::local_speed_kph(LinkId link, double position_m) const {
  const double L = net_->link(link).length_m;
  const double a = std::max(0.0, position_m - kDetectorWindowM);
  const double b = std::min(L, position_m + kDetectorWindowM);
  double n = 0.0, sum = 0.0;
  for (LaneGroupId gid : net_->lane_groups_of(link)) {
    const Group& g = group(gid);
    for (const Car& c : g.cars) {
      const double x = g.offset_m + c.x;
      if (x > a && x <= b) {
        n += 1.0;
        sum += c.last_advance;
      }
    }
  }
  return n > 0.0 ? sum / n / dt() * 3.6 : speed_limit(link);
}

std::optional<VehicleSnapshot> NewellModel::find_vehicle(VehicleId id) const {
  for (const auto& [gid, g] : groups_)
    for (const Car& c : g.cars)
      if (c.vehicle.id == id)
        return VehicleSnapshot{id, g.link, gid, g.offset_m + c.x, c.last_advance / dt() * 3.6, c.vehicle.state};
  return std::nullopt;
}

void NewellModel::for_each_vehicle(const std::function<void(const VehicleSnapshot&)>& fn) const {
  for (const auto& [gid, g] : groups_)
    for (const Car& c : g.cars)
      fn({c.vehicle.id, g.link, gid, g.offset_m + c.x, c.last_advance / dt() * 3.6, c.vehicle.state});
}

void NewellModel::set_speed_limit(LinkId link, double kph) {
  if (!(kph > 0.0)) throw ConfigError(fmt::format("link {}: speed limit must be positive", link));
  if (!speed_limit_.contains(link)) throw ProtocolError(fmt::format("model {}: does not manage link {}", id(), link));
  speed_limit_[link] = std::min(kph, net_->link(link).params.speed_limit_kph);
  set_means(link);
}

double NewellModel::speed_limit(LinkId link) const {
  auto it = speed_limit_.find(link);
  if (it == speed_limit_.end()) throw ProtocolError(fmt::format("model {}: does not manage link {}", id(), link));
  return it->second;
}

std::vector<double> NewellModel::positions(LaneGroupId lg) const {
  std::vector<double> out;
  for (const Car& c : group(lg).cars) out.push_back(c.x);
  return out;
}

std::size_t NewellModel::buffer_size(LaneGroupId lg) const { return group(lg).buffer.size(); }
double NewellModel::jam_spacing_m(LaneGroupId lg) const { return group(lg).spacing_m; }
const NewellMeans& NewellModel::means(LaneGroupId lg) const { return group(lg).means; }

void NewellModel::place(LaneGroupId lg, Vehicle v, double position_m) {
  Group& g = group(lg);
  if (!g.cars.empty() && position_m >= g.cars.back().x)
    throw ProtocolError(fmt::format("lane group {}: placement at {} m overtakes the last vehicle", lg, position_m));
  g.cars.push_back({std::move(v), position_m, 0.0, 0.0});
}

}  // namespace hybridsim
