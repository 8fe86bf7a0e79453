#include "hybridsim/meso.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace hybridsim {

MesoModel::MesoModel(std::string id, std::vector<LinkId> links, double dt, Options opts)
    : Model(std::move(id), std::move(links), dt), opts_(opts) {}

void MesoModel::initialize(const Network& net, const Routing& routing) {
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
      g.lanes = lg.num_lanes;
      g.capacity = static_cast<std::size_t>(
          std::floor(link.params.jam_density_vpkpl * lg.num_lanes * lg.length_m / 1000.0 + 1e-9));
      g.tau_s = lg.length_m / (link.params.speed_limit_kph / 3.6);
      g.service_vph = link.params.capacity_vphpl * lg.num_lanes;
      g.service_per_step = g.service_vph * dt() / 3600.0;
      groups_.emplace(gid, std::move(g));
    }
  }
}

MesoModel::Group& MesoModel::group(LaneGroupId lg) {
  auto it = groups_.find(lg);
  if (it == groups_.end()) throw ProtocolError(fmt::format("model {}: unknown lane group {}", id(), lg));
  return it->second;
}

const MesoModel::Group& MesoModel::group(LaneGroupId lg) const { return const_cast<MesoModel*>(this)->group(lg); }

std::size_t MesoModel::space(const Group& g) const {
  const std::size_t used = occupancy(g) + g.buffer.size();
  return used >= g.capacity ? 0 : g.capacity - used;
}

double MesoModel::lane_group_supply(LaneGroupId h, bool) const { return static_cast<double>(space(group(h))); }

LaneGroupId MesoModel::choose_target(LinkId link, RcId r, const StateIndex& s) const {
  const auto targets = lanes_->targets(link, s);
  if (targets.empty())
    throw RoutingError(fmt::format("link {}: no lane group leads on for state {}", link, to_string(s)));
  const auto entered = net_->downstream_lane_groups(link, r);
  auto pick = [&](bool within_entry) -> std::optional<LaneGroupId> {
    std::optional<LaneGroupId> best;
    std::size_t best_space = 0;
    for (LaneGroupId t : targets) {
      if (within_entry && std::find(entered.begin(), entered.end(), t) == entered.end()) continue;
      const std::size_t sp = space(group(t));
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

void MesoModel::admit(Group& g, Vehicle v, double now) {
  v.extension.reset();
  if (g.buffer.empty() && space(g) > 0) {
    g.transit.push_back({std::move(v), now});
    g.entries += 1.0;
  } else {
    g.buffer.push_back(std::move(v));
  }
}

void MesoModel::send_packets(std::vector<FluxPacket> packets, LinkId link, RcId r, SimContext& ctx) {
  const auto entered = net_->downstream_lane_groups(link, r);
  if (entered.empty()) throw ProtocolError(fmt::format("link {}: road connection {} enters no lane group", link, r));
  for (FluxPacket& p : packets) {
    if (p.empty()) continue;
    if (p.is_fluid()) p = translator_.translate(p, entered.front(), ctx.now(), ctx.factory());
    // Admit in id order so FIFO holds across states.
    std::vector<Vehicle> vs;
    for (auto& [s, list] : p.vehicle_content())
      for (Vehicle& v : list) vs.push_back(std::move(v));
    std::sort(vs.begin(), vs.end(), [](const Vehicle& a, const Vehicle& b) { return a.id < b.id; });
    for (Vehicle& v : vs) {
      Group& g = group(choose_target(link, r, v.state));
      admit(g, std::move(v), ctx.now());
    }
  }
}

double MesoModel::distance_to_last_vehicle(LinkId link, RcId r) const {
  double best = 0.0;
  for (LaneGroupId h : net_->downstream_lane_groups(link, r)) {
    const Group& g = group(h);
    if (g.capacity == 0) continue;
    const double n = static_cast<double>(occupancy(g) + g.buffer.size());
    const double cap = static_cast<double>(g.capacity);
    best = std::max(best, std::clamp(g.length_m * (cap - n) / cap, 0.0, g.length_m));
  }
  return best;
}

std::vector<FluxPacket> MesoModel::compute_demands(SimContext& ctx) {
  const double now = ctx.now();
  std::vector<FluxPacket> out;
  for (auto& [gid, g] : groups_) {
    while (!g.transit.empty() && g.transit.front().entered_s + g.tau_s <= now + 1e-9) {
      g.waiting.push_back(std::move(g.transit.front()));
      g.transit.pop_front();
    }
    if (!net_->lane_group(gid).reaches_downstream_end()) continue;
    std::size_t k = 0;
    if (g.service_per_step > 0.0) {
      std::poisson_distribution<long> pois(g.service_per_step);
      k = static_cast<std::size_t>(pois(ctx.rng()));
    }
    const std::size_t served = std::min(k, g.waiting.size());
    std::map<RcId, FluxPacket> by_rc;
    for (std::size_t i = 0; i < served; ++i) {
      const Vehicle& v = g.waiting[i].vehicle;
      const auto rc = lanes_->exit_for(gid, v.state);
      if (!rc)
        throw RoutingError(fmt::format("lane group {}: cannot serve state {}", gid, to_string(v.state)));
      auto [it, fresh] = by_rc.try_emplace(*rc, FluxPacket::vehicles());
      it->second.add(v);
    }
    for (auto& [rc, p] : by_rc) {
      p.origin = gid;
      p.road_connection = rc;
      out.push_back(std::move(p));
    }
  }
  return out;
}

void MesoModel::on_released(const FluxPacket& sent) {
  if (sent.empty()) return;
  Group& g = group(sent.origin);
  for (const auto& [s, list] : sent.vehicle_content())
    for (const Vehicle& v : list) g.leaving.push_back(v.id);
}

void MesoModel::advance_state(SimContext& ctx) {
  const double now = ctx.now();
  for (auto& [gid, g] : groups_) {
    if (!g.leaving.empty()) {
      std::sort(g.leaving.begin(), g.leaving.end());
      std::deque<Entry> kept;
      for (Entry& e : g.waiting) {
        if (std::binary_search(g.leaving.begin(), g.leaving.end(), e.vehicle.id)) {
          g.exits += 1.0;
          if (opts_.record_dwell) dwells_.push_back({e.vehicle.id, e.entered_s, now});
        } else {
          kept.push_back(std::move(e));
        }
      }
      if (kept.size() + g.leaving.size() != g.waiting.size())
        throw InvariantError(fmt::format("lane group {}: released vehicle not in waiting queue", gid));
      g.waiting = std::move(kept);
      g.leaving.clear();
    }
    while (!g.buffer.empty() && occupancy(g) < g.capacity) {
      g.transit.push_back({std::move(g.buffer.front()), now});
      g.buffer.pop_front();
      g.entries += 1.0;
    }
  }
  time_ = now + dt();
}

double MesoModel::total_vehicles_in_lanegroup(LaneGroupId lg) const {
  double t = 0.0;
  for (const auto& [s, n] : vehicles_by_state(lg)) t += n;
  return t;
}

std::map<StateIndex, double> MesoModel::vehicles_by_state(LaneGroupId lg) const {
  const Group& g = group(lg);
  std::map<StateIndex, double> out;
  for (const Entry& e : g.transit) out[e.vehicle.state] += 1.0;
  for (const Entry& e : g.waiting) out[e.vehicle.state] += 1.0;
  for (const Vehicle& v : g.buffer) out[v.state] += 1.0;
  if (const auto* res = translator_.residues(lg))
    for (const auto& [s, r] : *res)
      if (r != 0.0) out[s] += r;
  return out;
}

double MesoModel::lanegroup_speed_kph(LaneGroupId lg) const {
  const Group& g = group(lg);
  const double wait_s = g.waiting.empty() ? 0.0
                        : g.service_vph > 0.0 ? static_cast<double>(g.waiting.size()) / (g.service_vph / 3600.0)
                                              : kInfinity;
  const double total_s = g.tau_s + wait_s;
  if (!std::isfinite(total_s)) return 0.0;
  return g.length_m / total_s * 3.6;
}

double MesoModel::position(const Group& g, const Entry& e) const {
  if (g.tau_s <= 0.0) return g.length_m;
  return g.length_m * std::clamp((time_ - e.entered_s) / g.tau_s, 0.0, 1.0);
}

double MesoModel::cumulative_crossings(LinkId link, double position_m) const {
  double t = 0.0;
  for (LaneGroupId gid : net_->lane_groups_of(link)) {
    const Group& g = group(gid);
    if (position_m <= 1e-9) {
      t += g.entries;
      continue;
    }
    t += g.exits;
    if (position_m >= g.length_m - 1e-9) continue;
    for (const Entry& e : g.transit)
      if (position(g, e) >= position_m) t += 1.0;
    t += static_cast<double>(g.waiting.size());
  }
  return t;
}

double MesoModel::local_density_vpkm(LinkId link, double) const {
  // A vertical queue has no internal geometry; density is lumped over the link.
  double n = 0.0;
  for (LaneGroupId gid : net_->lane_groups_of(link)) n += static_cast<double>(occupancy(group(gid)));
  return n / net_->link(link).length_m * 1000.0;
}

double MesoModel::local_speed_kph(LinkId link, double) const {
  double num = 0.0, den = 0.0;
  for (LaneGroupId gid : net_->lane_groups_of(link)) {
    const Group& g = group(gid);
    const double w = static_cast<double>(occupancy(g));
    num += w * lanegroup_speed_kph(gid);
    den += w;
  }
  return den > 0.0 ? num / den : speed_limit(link);
}

std::optional<VehicleSnapshot> MesoModel::find_vehicle(VehicleId id) const {
  std::optional<VehicleSnapshot> out;
  for_each_vehicle([&](const VehicleSnapshot& s) {
    if (s.id == id) out = s;
  });
  return out;
}

void MesoModel::for_each_vehicle(const std::function<void(const VehicleSnapshot&)>& fn) const {
  for (const auto& [gid, g] : groups_) {
    const double v = speed_limit(g.link);
    for (const Entry& e : g.transit) {
      const double x = position(g, e);
      fn({e.vehicle.id, g.link, gid, x, x < g.length_m ? v : 0.0, e.vehicle.state});
    }
    for (const Entry& e : g.waiting) fn({e.vehicle.id, g.link, gid, g.length_m, 0.0, e.vehicle.state});
  }
}

void MesoModel::set_speed_limit(LinkId link, double kph) {
  if (!(kph > 0.0)) throw ConfigError(fmt::format("link {}: speed limit must be positive", link));
  const double v = std::min(kph, net_->link(link).params.speed_limit_kph);
  speed_limit_[link] = v;
  for (LaneGroupId gid : net_->lane_groups_of(link)) {
    Group& g = group(gid);
    g.tau_s = g.length_m / (v / 3.6);
  }
}

double MesoModel::speed_limit(LinkId link) const {
  auto it = speed_limit_.find(link);
  if (it == speed_limit_.end()) throw ProtocolError(fmt::format("model {}: does not manage link {}", id(), link));
  return it->second;
}

double MesoModel::travel_time_s(LaneGroupId lg) const { return group(lg).tau_s; }
std::size_t MesoModel::capacity(LaneGroupId lg) const { return group(lg).capacity; }
std::size_t MesoModel::transit_size(LaneGroupId lg) const { return group(lg).transit.size(); }
std::size_t MesoModel::waiting_size(LaneGroupId lg) const { return group(lg).waiting.size(); }
std::size_t MesoModel::buffer_size(LaneGroupId lg) const { return group(lg).buffer.size(); }

}  // namespace hybridsim
