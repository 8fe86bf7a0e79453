#include "hybridsim/ctm.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace hybridsim {

namespace {

double sum(const FluidContent& c) {
  double t = 0.0;
  for (const auto& [s, n] : c) t += n;
  return t;
}

CellParams make_params(double speed_kph, double wave_kph, double capacity_vphpl, double jam_vpkpl,
                       int lanes, double cell_length_m, double dt, LinkId link) {
  CellParams c;
  c.length_m = cell_length_m;
  c.v = speed_kph / 3.6 * dt / cell_length_m;
  c.w = wave_kph / 3.6 * dt / cell_length_m;
  c.capacity = capacity_vphpl * lanes * dt / 3600.0;
  c.max_occupancy = jam_vpkpl * lanes * cell_length_m / 1000.0;
  if (c.v > 1.0 + 1e-12 || c.w > 1.0 + 1e-12)
    throw ConfigError(fmt::format(
        "link {}: time step {} s violates CFL for {} m cells (v = {:.4f}, w = {:.4f})", link, dt,
        cell_length_m, c.v, c.w));
  return c;
}

}  // namespace

double cell_length(double link_length_m, double max_cell_length_m) {
  if (!(max_cell_length_m > 0.0)) throw ConfigError("max cell length must be positive");
  const double cells = std::ceil(link_length_m / max_cell_length_m - 1e-9);
  return link_length_m / std::max(1.0, cells);
}

CellParams cell_params(const RoadParams& p, int lanes, double cell_length_m, double dt, LinkId link) {
  return make_params(p.speed_limit_kph, p.wave_speed_kph(), p.capacity_vphpl, p.jam_density_vpkpl,
                     lanes, cell_length_m, dt, link);
}

namespace {

int grid_cells(const Link& link, double ell) { return static_cast<int>(std::lround(link.length_m / ell)); }

int partial_cells(const LaneGroup& lg, double ell, int grid) {
  if (lg.structure == LaneStructure::full) return grid;
  const int k = static_cast<int>(std::lround(lg.length_m / ell));
  return std::clamp(k, 1, grid);
}

bool upstream_aligned(LaneStructure s) {
  return s == LaneStructure::full || s == LaneStructure::inner_upstream || s == LaneStructure::outer_upstream;
}

}  // namespace

std::vector<CellParams> discretize(const Link& link, const LaneGroup& lg, double max_cell_length_m,
                                   double dt) {
  const double ell = cell_length(link.length_m, max_cell_length_m);
  const int k = partial_cells(lg, ell, grid_cells(link, ell));
  return std::vector<CellParams>(k, cell_params(link.params, lg.num_lanes, ell, dt, link.id));
}

double cell_supply(const CellParams& c, double occupancy) {
  return std::max(0.0, c.w * (c.max_occupancy - occupancy));
}

double cell_distance_to_last_vehicle(const CellParams& c, double occupancy) {
  if (c.max_occupancy <= 0.0) return 0.0;
  return std::clamp(c.length_m * (c.max_occupancy - occupancy) / c.max_occupancy, 0.0, c.length_m);
}

FluidContent cell_demand(const CellParams& c, const FluidContent& occupancy) {
  FluidContent out;
  const double n = sum(occupancy);
  if (n <= 0.0) return out;
  for (const auto& [s, ns] : occupancy) {
    if (ns <= 0.0) continue;
    out[s] = std::min(c.v * ns, c.capacity * ns / n);
  }
  return out;
}

CtmModel::CtmModel(std::string id, std::vector<LinkId> links, double dt, Options opts)
    : Model(std::move(id), std::move(links), dt), opts_(opts) {
  if (opts_.xi < 0.0 || opts_.xi > 1.0) throw ConfigError(fmt::format("model {}: xi must lie in [0, 1]", this->id()));
}

void CtmModel::initialize(const Network& net, const Routing& routing) {
  net_ = &net;
  routing_ = &routing;
  lanes_ = std::make_unique<LaneRouting>(net, routing);
  links_state_.clear();
  group_index_.clear();
  for (LinkId id : links()) {
    const Link& link = net.link(id);
    LinkState ls;
    ls.id = id;
    ls.params = link.params;
    ls.structural_speed_kph = link.params.speed_limit_kph;
    ls.cell_length_m = cell_length(link.length_m, opts_.max_cell_length_m);
    ls.grid_cells = grid_cells(link, ls.cell_length_m);
    for (LaneGroupId gid : net.lane_groups_of(id)) {
      const LaneGroup& lg = net.lane_group(gid);
      Group g;
      g.id = gid;
      const int k = partial_cells(lg, ls.cell_length_m, ls.grid_cells);
      g.grid_first = upstream_aligned(lg.structure) ? 0 : ls.grid_cells - k;
      for (int i = 0; i < k; ++i) {
        Cell c;
        c.lane_group = gid;
        g.cells.push_back(ls.cells.size());
        ls.cells.push_back(std::move(c));
      }
      g.crossings.assign(k + 1, 0.0);
      group_index_[gid] = {id, ls.groups.size()};
      ls.groups.push_back(std::move(g));
    }
    // Lateral neighbours share the grid index.
    for (const Group& g : ls.groups) {
      const LaneGroup& lg = net.lane_group(g.id);
      for (std::size_t i = 0; i < g.cells.size(); ++i) {
        const int x = g.grid_first + static_cast<int>(i);
        for (const Group& o : ls.groups) {
          const LaneGroup& olg = net.lane_group(o.id);
          const int ox = x - o.grid_first;
          if (ox < 0 || ox >= static_cast<int>(o.cells.size())) continue;
          Cell& c = ls.cells[g.cells[i]];
          if (olg.lateral_last() == lg.lateral_first - 1 && c.in < 0) c.in = static_cast<int>(o.cells[ox]);
          if (olg.lateral_first == lg.lateral_last() + 1 && c.out < 0) c.out = static_cast<int>(o.cells[ox]);
        }
      }
    }
    ls.beta.assign(ls.cells.size(), 1.0);
    rebuild_params(ls);
    links_state_.emplace(id, std::move(ls));
  }
}

void CtmModel::rebuild_params(LinkState& ls) {
  // The congestion branch is structural; a lower speed limit moves the
  // free-flow branch and the capacity to their intersection.
  const RoadParams& base = net_->link(ls.id).params;
  const double wave = base.wave_speed_kph();
  const double v = ls.params.speed_limit_kph;
  const double crit_w = wave * base.jam_density_vpkpl / (v + wave);  // density where branches meet
  const double cap = v >= base.speed_limit_kph ? base.capacity_vphpl : std::min(base.capacity_vphpl, v * crit_w);
  for (const Group& g : ls.groups) {
    const int lanes = net_->lane_group(g.id).num_lanes;
    const CellParams p = make_params(v, wave, cap, base.jam_density_vpkpl, lanes, ls.cell_length_m, dt(), ls.id);
    for (std::size_t c : g.cells) ls.cells[c].params = p;
  }
}

CtmModel::Group& CtmModel::group(LaneGroupId lg) {
  auto it = group_index_.find(lg);
  if (it == group_index_.end()) throw ProtocolError(fmt::format("model {}: unknown lane group {}", id(), lg));
  return links_state_.at(it->second.first).groups[it->second.second];
}

const CtmModel::Group& CtmModel::group(LaneGroupId lg) const {
  return const_cast<CtmModel*>(this)->group(lg);
}

const CtmModel::LinkState& CtmModel::link_state(LinkId link) const {
  auto it = links_state_.find(link);
  if (it == links_state_.end()) throw ProtocolError(fmt::format("model {}: does not manage link {}", id(), link));
  return it->second;
}

CtmModel::LinkState& CtmModel::link_state(LinkId link) {
  return const_cast<LinkState&>(static_cast<const CtmModel*>(this)->link_state(link));
}

double CtmModel::current_total(const LinkState& ls, const Group& g) const {
  const Cell& c = ls.cells[g.first()];
  return sum(g.changed ? c.nhat : c.n);
}

double CtmModel::base_supply(const LinkState& ls, const Group& g) const {
  return cell_supply(ls.cells[g.first()].params, current_total(ls, g));
}

double CtmModel::lane_group_supply(LaneGroupId h, bool vehicle_packet) const {
  const auto& [link, idx] = group_index_.at(h);
  const LinkState& ls = links_state_.at(link);
  const Group& g = ls.groups[idx];
  const double pending = sum(g.pending);
  const double fluid = std::max(0.0, base_supply(ls, g) - pending);
  if (!vehicle_packet || !opts_.accumulate_vehicle_supply) return fluid;
  const Cell& c = ls.cells[g.first()];
  const double room = std::max(0.0, c.params.max_occupancy - current_total(ls, g) - pending);
  return std::min(std::max(0.0, base_supply(ls, g) + g.credit - pending), room);
}

void CtmModel::send_packets(std::vector<FluxPacket> packets, LinkId link, RcId r, SimContext&) {
  const auto targets = net_->downstream_lane_groups(link, r);
  if (targets.empty()) throw ProtocolError(fmt::format("link {}: road connection {} enters no lane group", link, r));
  for (const FluxPacket& p : packets) {
    if (p.empty()) continue;
    std::vector<double> space;
    for (LaneGroupId h : targets) space.push_back(net_->access_fraction(r, h) * lane_group_supply(h, !p.is_fluid()));
    const auto shares = distribute_equalizing(to_fluid(p), space);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      Group& g = group(targets[i]);
      for (const auto& [s, a] : shares[i].fluid_content()) g.pending[s] += a;
    }
  }
}

double CtmModel::distance_to_last_vehicle(LinkId link, RcId r) const {
  const LinkState& ls = link_state(link);
  double best = 0.0;
  for (LaneGroupId h : net_->downstream_lane_groups(link, r)) {
    const Group& g = group(h);
    const Cell& c = ls.cells[g.first()];
    best = std::max(best, cell_distance_to_last_vehicle(c.params, current_total(ls, g) + sum(g.pending)));
  }
  return best;
}

LaneChange CtmModel::lane_change_of(LaneGroupId gid, const StateIndex& s) const {
  const LaneGroup& lg = net_->lane_group(gid);
  const auto targets = lanes_->targets(lg.link, s);
  if (targets.empty() || std::find(targets.begin(), targets.end(), gid) != targets.end()) return LaneChange::none;
  int in_dist = -1, out_dist = -1;
  for (LaneGroupId t : targets) {
    const LaneGroup& tg = net_->lane_group(t);
    if (tg.lateral_last() < lg.lateral_first) {
      const int d = lg.lateral_first - tg.lateral_last();
      if (in_dist < 0 || d < in_dist) in_dist = d;
    } else if (tg.lateral_first > lg.lateral_last()) {
      const int d = tg.lateral_first - lg.lateral_last();
      if (out_dist < 0 || d < out_dist) out_dist = d;
    }
  }
  if (in_dist < 0 && out_dist < 0) return LaneChange::none;
  if (out_dist < 0 || (in_dist >= 0 && in_dist <= out_dist)) return LaneChange::in;
  return LaneChange::out;
}

void CtmModel::lane_change_step(LinkId link) {
  LinkState& ls = link_state(link);
  const std::size_t C = ls.cells.size();
  std::vector<double> n_in(C, 0.0), n_out(C, 0.0);
  std::vector<std::map<StateIndex, LaneChange>> phi(C);
  for (std::size_t i = 0; i < C; ++i) {
    const Cell& c = ls.cells[i];
    for (const auto& [s, n] : c.n) {
      const LaneChange m = lane_change_of(c.lane_group, s);
      phi[i][s] = m;
      if (m == LaneChange::in) n_in[i] += n;
      if (m == LaneChange::out) n_out[i] += n;
    }
  }
  // Pending inflow already claims room in the upstream-most cell.
  std::vector<double> pending(C, 0.0);
  for (const Group& g : ls.groups) pending[g.first()] = sum(g.pending);
  for (std::size_t i = 0; i < C; ++i) {
    const Cell& c = ls.cells[i];
    double entering = 0.0;
    if (c.out >= 0) entering += n_in[c.out];
    if (c.in >= 0) entering += n_out[c.in];
    const double room = opts_.xi * std::max(0.0, c.params.max_occupancy - sum(c.n) - pending[i]);
    ls.beta[i] = entering > 0.0 ? std::min(1.0, room / entering) : 1.0;
  }
  for (std::size_t i = 0; i < C; ++i) {
    Cell& c = ls.cells[i];
    c.nhat.clear();
    for (const auto& [s, n] : c.n) {
      double keep = n;
      const LaneChange m = phi[i].at(s);
      if (m == LaneChange::in && c.in >= 0) keep = (1.0 - ls.beta[c.in]) * n;
      if (m == LaneChange::out && c.out >= 0) keep = (1.0 - ls.beta[c.out]) * n;
      c.nhat[s] += keep;
    }
    if (c.out >= 0)
      for (const auto& [s, n] : ls.cells[c.out].n)
        if (phi[c.out].at(s) == LaneChange::in) c.nhat[s] += ls.beta[i] * n;
    if (c.in >= 0)
      for (const auto& [s, n] : ls.cells[c.in].n)
        if (phi[c.in].at(s) == LaneChange::out) c.nhat[s] += ls.beta[i] * n;
  }
  for (Group& g : ls.groups) g.changed = true;
}

std::vector<FluxPacket> CtmModel::compute_demands(SimContext&) {
  std::vector<FluxPacket> out;
  for (auto& [link, ls] : links_state_) {
    lane_change_step(link);
    for (const Group& g : ls.groups) {
      if (!net_->lane_group(g.id).reaches_downstream_end()) continue;
      const Cell& last = ls.cells[g.last()];
      std::map<RcId, FluxPacket> by_rc;
      for (const auto& [s, d] : cell_demand(last.params, last.nhat)) {
        const auto rc = lanes_->exit_for(g.id, s);
        if (!rc || d <= 0.0) continue;
        auto [it, fresh] = by_rc.try_emplace(*rc, FluxPacket::fluid());
        it->second.add(s, d);
      }
      for (auto& [rc, p] : by_rc) {
        p.origin = g.id;
        p.road_connection = rc;
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

void CtmModel::on_released(const FluxPacket& sent) {
  if (sent.empty()) return;
  if (!sent.is_fluid()) throw ProtocolError("ctm: released packet must be fluid");
  Group& g = group(sent.origin);
  for (const auto& [s, a] : sent.fluid_content()) g.released[s] += a;
}

void CtmModel::advance_state(SimContext&) {
  for (auto& [link, ls] : links_state_) {
    if (!ls.groups.empty() && !ls.groups.front().changed) lane_change_step(link);
    for (Group& g : ls.groups) {
      const std::size_t k = g.cells.size();
      if (opts_.accumulate_vehicle_supply)
        g.credit = std::clamp(g.credit + base_supply(ls, g) - sum(g.pending), 0.0, 1.0);
      std::vector<double> flux(k, 0.0);
      std::vector<FluidContent> moved(k);
      for (std::size_t j = 0; j + 1 < k; ++j) {
        const Cell& a = ls.cells[g.cells[j]];
        const Cell& b = ls.cells[g.cells[j + 1]];
        const double na = sum(a.nhat);
        if (na <= 0.0) continue;
        const double f = std::max(0.0, std::min({a.params.v * na, a.params.capacity,
                                                 b.params.w * (b.params.max_occupancy - sum(b.nhat))}));
        flux[j] = f;
        for (const auto& [s, ns] : a.nhat) moved[j][s] = f * ns / na;
      }
      flux[k - 1] = sum(g.released);
      moved[k - 1] = g.released;
      for (std::size_t j = 0; j < k; ++j) {
        Cell& c = ls.cells[g.cells[j]];
        FluidContent next = c.nhat;
        for (const auto& [s, a] : moved[j]) next[s] -= a;
        const FluidContent& incoming = j == 0 ? g.pending : moved[j - 1];
        for (const auto& [s, a] : incoming) next[s] += a;
        for (const auto& [s, n] : next)
          if (n < -kVehEps)
            throw InvariantError(fmt::format("ctm link {}: negative occupancy {} for state {}", link, n, to_string(s)));
        c.n = std::move(next);
        c.nhat.clear();
        c.outflow = flux[j];
      }
      g.crossings[0] += sum(g.pending);
      for (std::size_t j = 0; j < k; ++j) g.crossings[j + 1] += flux[j];
      g.pending.clear();
      g.released.clear();
      g.changed = false;
    }
  }
}

double CtmModel::total_vehicles_in_lanegroup(LaneGroupId lg) const {
  double t = 0.0;
  for (const auto& [s, n] : vehicles_by_state(lg)) t += n;
  return t;
}

std::map<StateIndex, double> CtmModel::vehicles_by_state(LaneGroupId lg) const {
  const auto& [link, idx] = group_index_.at(lg);
  const LinkState& ls = links_state_.at(link);
  const Group& g = ls.groups[idx];
  std::map<StateIndex, double> out;
  for (std::size_t c : g.cells)
    for (const auto& [s, n] : ls.cells[c].n) out[s] += n;
  for (const auto& [s, n] : g.pending) out[s] += n;
  return out;
}

double CtmModel::lanegroup_speed_kph(LaneGroupId lg) const {
  const auto& [link, idx] = group_index_.at(lg);
  const LinkState& ls = links_state_.at(link);
  const Group& g = ls.groups[idx];
  double moved = 0.0, stored = 0.0;
  for (std::size_t c : g.cells) {
    moved += ls.cells[c].outflow * ls.cell_length_m;
    stored += sum(ls.cells[c].n);
  }
  if (stored <= kVehEps) return ls.params.speed_limit_kph;
  return std::min(ls.params.speed_limit_kph, moved / stored / dt() * 3.6);
}

double CtmModel::cumulative_crossings(LinkId link, double position_m) const {
  const LinkState& ls = link_state(link);
  const int b = std::clamp(static_cast<int>(std::lround(position_m / ls.cell_length_m)), 0, ls.grid_cells);
  double t = 0.0;
  for (const Group& g : ls.groups) {
    const int local = b - g.grid_first;
    if (local >= 0 && local <= static_cast<int>(g.cells.size())) t += g.crossings[local];
  }
  return t;
}

namespace {
int grid_index(double position_m, double ell, int grid) {
  return std::clamp(static_cast<int>(std::floor(position_m / ell)), 0, grid - 1);
}
}  // namespace

double CtmModel::local_density_vpkm(LinkId link, double position_m) const {
  const LinkState& ls = link_state(link);
  const int x = grid_index(position_m, ls.cell_length_m, ls.grid_cells);
  double n = 0.0;
  for (const Group& g : ls.groups) {
    const int local = x - g.grid_first;
    if (local >= 0 && local < static_cast<int>(g.cells.size())) n += sum(ls.cells[g.cells[local]].n);
  }
  return n / ls.cell_length_m * 1000.0;
}

double CtmModel::local_speed_kph(LinkId link, double position_m) const {
  const LinkState& ls = link_state(link);
  const int x = grid_index(position_m, ls.cell_length_m, ls.grid_cells);
  double n = 0.0, f = 0.0;
  for (const Group& g : ls.groups) {
    const int local = x - g.grid_first;
    if (local < 0 || local >= static_cast<int>(g.cells.size())) continue;
    const Cell& c = ls.cells[g.cells[local]];
    n += sum(c.n);
    f += c.outflow;
  }
  if (n <= kVehEps) return ls.params.speed_limit_kph;
  return std::min(ls.params.speed_limit_kph, f * ls.cell_length_m / n / dt() * 3.6);
}

void CtmModel::set_speed_limit(LinkId link, double kph) {
  LinkState& ls = link_state(link);
  if (!(kph > 0.0)) throw ConfigError(fmt::format("link {}: speed limit must be positive", link));
  ls.params.speed_limit_kph = std::min(kph, ls.structural_speed_kph);
  rebuild_params(ls);
}

double CtmModel::speed_limit(LinkId link) const { return link_state(link).params.speed_limit_kph; }

std::vector<const CtmModel::Cell*> CtmModel::cells(LaneGroupId lg) const {
  const auto& [link, idx] = group_index_.at(lg);
  const LinkState& ls = links_state_.at(link);
  std::vector<const Cell*> out;
  for (std::size_t c : ls.groups[idx].cells) out.push_back(&ls.cells[c]);
  return out;
}

void CtmModel::set_occupancy(LaneGroupId lg, std::size_t cell, const StateIndex& s, double n) {
  const auto& [link, idx] = group_index_.at(lg);
  LinkState& ls = links_state_.at(link);
  ls.cells[ls.groups[idx].cells.at(cell)].n[s] = n;
}

double CtmModel::last_beta(LaneGroupId lg, std::size_t cell) const {
  const auto& [link, idx] = group_index_.at(lg);
  const LinkState& ls = links_state_.at(link);
  return ls.beta[ls.groups[idx].cells.at(cell)];
}

}  // namespace hybridsim
