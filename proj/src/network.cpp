#include "hybridsim/network.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <set>
#include <stdexcept>

namespace hybridsim {

std::string to_string(const StateIndex& s) { return fmt::format("{}:{}", s.type, s.key); }

std::optional<std::string> RoadParams::problem() const {
  if (!(capacity_vphpl > 0.0)) return "capacity must be positive";
  if (!(speed_limit_kph > 0.0)) return "speed limit must be positive";
  if (!(jam_density_vpkpl > 0.0)) return "jam density must be positive";
  if (!(critical_density_vpkpl() < jam_density_vpkpl))
    return "critical density capacity/speed_limit must be below jam density";
  return std::nullopt;
}

std::string to_string(PartialPosition p) {
  switch (p) {
    case PartialPosition::inner_upstream: return "inner_upstream";
    case PartialPosition::inner_downstream: return "inner_downstream";
    case PartialPosition::outer_upstream: return "outer_upstream";
    case PartialPosition::outer_downstream: return "outer_downstream";
  }
  return "?";
}

std::optional<PartialPosition> partial_position_from_string(const std::string& s) {
  for (auto p : {PartialPosition::inner_upstream, PartialPosition::inner_downstream,
                 PartialPosition::outer_upstream, PartialPosition::outer_downstream})
    if (to_string(p) == s) return p;
  return std::nullopt;
}

const PartialLanes* Link::partial(PartialPosition p) const {
  for (const auto& pl : partials)
    if (pl.position == p) return &pl;
  return nullptr;
}

int Link::partial_lane_count(PartialPosition p) const {
  const auto* pl = partial(p);
  return pl ? pl->lanes : 0;
}

int Link::lanes_at_downstream_end() const {
  return partial_lane_count(PartialPosition::inner_downstream) + full_lanes +
         partial_lane_count(PartialPosition::outer_downstream);
}

int Link::lanes_at_upstream_end() const {
  return partial_lane_count(PartialPosition::inner_upstream) + full_lanes +
         partial_lane_count(PartialPosition::outer_upstream);
}

int LaneSet::overlap(const LaneSet& o) const {
  return std::max(0, std::min(last, o.last) - std::max(first, o.first) + 1);
}

namespace {

LaneStructure downstream_structure(const Link& link, int lane) {
  const int inner = link.partial_lane_count(PartialPosition::inner_downstream);
  if (lane <= inner) return LaneStructure::inner_downstream;
  if (lane <= inner + link.full_lanes) return LaneStructure::full;
  return LaneStructure::outer_downstream;
}

double structure_length(const Link& link, LaneStructure s) {
  auto pick = [&](PartialPosition p) {
    const auto* pl = link.partial(p);
    return pl ? std::min(pl->length_m, link.length_m) : link.length_m;
  };
  switch (s) {
    case LaneStructure::full: return link.length_m;
    case LaneStructure::inner_upstream: return pick(PartialPosition::inner_upstream);
    case LaneStructure::inner_downstream: return pick(PartialPosition::inner_downstream);
    case LaneStructure::outer_upstream: return pick(PartialPosition::outer_upstream);
    case LaneStructure::outer_downstream: return pick(PartialPosition::outer_downstream);
  }
  return link.length_m;
}

}  // namespace

std::vector<LaneGroup> derive_lane_groups(const Link& link,
                                          std::span<const RoadConnection> exiting) {
  const int dn_in = link.partial_lane_count(PartialPosition::inner_downstream);
  const int up_in = link.partial_lane_count(PartialPosition::inner_upstream);
  const int up_out = link.partial_lane_count(PartialPosition::outer_upstream);
  const int n_dn = link.lanes_at_downstream_end();

  auto exits_of = [&](int lane) {
    std::vector<RcId> ids;
    for (const auto& rc : exiting)
      if (rc.upstream_link == link.id && rc.upstream_lanes.contains(lane)) ids.push_back(rc.id);
    std::sort(ids.begin(), ids.end());
    return ids;
  };

  std::vector<LaneGroup> groups;
  int lane = 1;
  while (lane <= n_dn) {
    const auto structure = downstream_structure(link, lane);
    const auto exits = exits_of(lane);
    int last = lane;
    while (last + 1 <= n_dn && downstream_structure(link, last + 1) == structure &&
           exits_of(last + 1) == exits)
      ++last;

    LaneGroup g;
    g.link = link.id;
    g.structure = structure;
    g.downstream_lanes = LaneSet{lane, last};
    g.num_lanes = last - lane + 1;
    g.lateral_first = lane - dn_in - 1;
    g.length_m = structure_length(link, structure);
    g.exits = exits;
    if (structure == LaneStructure::full)
      g.upstream_lanes = LaneSet{g.lateral_first + up_in + 1, g.lateral_first + up_in + g.num_lanes};

    std::set<LinkId> targets;
    for (RcId id : exits) {
      auto it = std::find_if(exiting.begin(), exiting.end(),
                             [&](const RoadConnection& r) { return r.id == id; });
      if (!targets.insert(it->downstream_link).second)
        throw ConfigError(fmt::format(
            "link {}: ambiguous turning options, lanes {}-{} have two road connections to link {}",
            link.id, lane, last, it->downstream_link));
    }
    groups.push_back(std::move(g));
    lane = last + 1;
  }

  if (up_in > 0) {
    LaneGroup g;
    g.link = link.id;
    g.structure = LaneStructure::inner_upstream;
    g.upstream_lanes = LaneSet{1, up_in};
    g.num_lanes = up_in;
    g.lateral_first = -up_in;
    g.length_m = structure_length(link, g.structure);
    groups.push_back(std::move(g));
  }
  if (up_out > 0) {
    LaneGroup g;
    g.link = link.id;
    g.structure = LaneStructure::outer_upstream;
    g.upstream_lanes = LaneSet{up_in + link.full_lanes + 1, up_in + link.full_lanes + up_out};
    g.num_lanes = up_out;
    g.lateral_first = link.full_lanes;
    g.length_m = structure_length(link, g.structure);
    groups.push_back(std::move(g));
  }

  // Inner to outer; an upstream partial precedes a downstream one in the same slots.
  std::stable_sort(groups.begin(), groups.end(), [](const LaneGroup& a, const LaneGroup& b) {
    if (a.lateral_first != b.lateral_first) return a.lateral_first < b.lateral_first;
    return !a.reaches_downstream_end() && b.reaches_downstream_end();
  });
  for (std::size_t k = 0; k < groups.size(); ++k)
    groups[k].id = link.id * 100 + static_cast<LaneGroupId>(k);
  return groups;
}

std::vector<std::string> validate_network(const NetworkSpec& spec) {
  std::vector<std::string> diags;
  std::map<LinkId, const Link*> links;
  for (const auto& l : spec.links) {
    if (!links.emplace(l.id, &l).second) diags.push_back(fmt::format("link {}: duplicate id", l.id));
    if (!(l.length_m > 0.0)) diags.push_back(fmt::format("link {}: length must be positive", l.id));
    if (l.full_lanes <= 0) diags.push_back(fmt::format("link {}: full lanes must be positive", l.id));
    if (auto p = l.params.problem()) diags.push_back(fmt::format("link {}: {}", l.id, *p));
    std::set<PartialPosition> seen;
    for (const auto& pl : l.partials) {
      const auto name = to_string(pl.position);
      if (!seen.insert(pl.position).second)
        diags.push_back(fmt::format("link {}: more than one {} structure", l.id, name));
      if (pl.lanes <= 0) diags.push_back(fmt::format("link {}: {} lanes must be positive", l.id, name));
      if (!(pl.length_m > 0.0) || pl.length_m > l.length_m + 1e-9)
        diags.push_back(fmt::format("link {}: {} length must be in (0, link length]", l.id, name));
      for (const auto& g : pl.gates)
        if (g.start_m < 0.0 || g.end_m > pl.length_m + 1e-9 || g.start_m > g.end_m)
          diags.push_back(fmt::format("link {}: {} gate [{}, {}] outside structure", l.id, name,
                                      g.start_m, g.end_m));
    }
  }

  std::set<RcId> rc_ids;
  for (const auto& rc : spec.road_connections) {
    if (!rc_ids.insert(rc.id).second)
      diags.push_back(fmt::format("road connection {}: duplicate id", rc.id));
    auto up = links.find(rc.upstream_link);
    auto dn = links.find(rc.downstream_link);
    if (up == links.end())
      diags.push_back(fmt::format("road connection {}: missing upstream link {}", rc.id, rc.upstream_link));
    if (dn == links.end())
      diags.push_back(
          fmt::format("road connection {}: missing downstream link {}", rc.id, rc.downstream_link));
    auto check_lanes = [&](const LaneSet& s, int available, const char* side) {
      if (s.first < 1 || s.last < s.first)
        diags.push_back(fmt::format("road connection {}: {} lane set empty or malformed", rc.id, side));
      else if (s.last > available)
        diags.push_back(fmt::format("road connection {}: {} lane {} out of range (link has {})", rc.id,
                                    side, s.last, available));
    };
    if (up != links.end()) check_lanes(rc.upstream_lanes, up->second->lanes_at_downstream_end(), "upstream");
    if (dn != links.end()) check_lanes(rc.downstream_lanes, dn->second->lanes_at_upstream_end(), "downstream");
  }
  if (!diags.empty()) return diags;

  for (const auto& l : spec.links) {
    std::vector<RoadConnection> exiting;
    for (const auto& rc : spec.road_connections)
      if (rc.upstream_link == l.id) exiting.push_back(rc);
    // Per lane: options must lead to different links.
    for (int lane = 1; lane <= l.lanes_at_downstream_end(); ++lane) {
      std::map<LinkId, RcId> seen;
      for (const auto& rc : exiting) {
        if (!rc.upstream_lanes.contains(lane)) continue;
        auto [it, fresh] = seen.emplace(rc.downstream_link, rc.id);
        if (!fresh)
          diags.push_back(fmt::format(
              "link {}: ambiguous turning options, lane {} has road connections {} and {} to link {}",
              l.id, lane, it->second, rc.id, rc.downstream_link));
      }
      if (!exiting.empty() && seen.empty())
        diags.push_back(fmt::format(
            "link {}: lane {} reaches the downstream end but has no exiting road connection", l.id, lane));
    }
  }
  return diags;
}

double lane_access_fraction(const RoadConnection& r, const LaneGroup& h) {
  if (h.link != r.downstream_link || !h.upstream_lanes)
    throw std::domain_error(fmt::format("lane group {} is not reached by road connection {}", h.id, r.id));
  const int common = r.downstream_lanes.overlap(*h.upstream_lanes);
  if (common == 0)
    throw std::domain_error(fmt::format("lane group {} is not reached by road connection {}", h.id, r.id));
  return static_cast<double>(common) / h.num_lanes;
}

Network Network::build(NetworkSpec spec) {
  if (auto diags = validate_network(spec); !diags.empty()) {
    std::string msg = "invalid network:";
    for (const auto& d : diags) msg += "\n  " + d;
    throw ConfigError(msg);
  }
  Network net;
  net.spec_ = std::move(spec);
  for (std::size_t i = 0; i < net.spec_.links.size(); ++i) net.link_index_[net.spec_.links[i].id] = i;
  for (std::size_t i = 0; i < net.spec_.road_connections.size(); ++i) {
    const auto& rc = net.spec_.road_connections[i];
    net.rc_index_[rc.id] = i;
    net.exiting_[rc.upstream_link].push_back(rc.id);
    net.entering_[rc.downstream_link].push_back(rc.id);
  }
  for (auto& [_, v] : net.exiting_) std::sort(v.begin(), v.end());
  for (auto& [_, v] : net.entering_) std::sort(v.begin(), v.end());

  for (const auto& l : net.spec_.links) {
    std::vector<RoadConnection> exiting;
    for (const auto& rc : net.spec_.road_connections)
      if (rc.upstream_link == l.id) exiting.push_back(rc);
    auto groups = derive_lane_groups(l, exiting);
    auto& ids = net.groups_of_link_[l.id];
    auto& src = net.source_entry_groups_[l.id];
    for (auto& g : groups) {
      ids.push_back(g.id);
      if (g.structure == LaneStructure::full) src.push_back(g.id);
      net.groups_.emplace(g.id, std::move(g));
    }
  }
  for (const auto& rc : net.spec_.road_connections) {
    auto& dr = net.rc_downstream_groups_[rc.id];
    for (LaneGroupId h : net.groups_of_link_[rc.downstream_link]) {
      auto& g = net.groups_.at(h);
      if (g.upstream_lanes && rc.downstream_lanes.overlap(*g.upstream_lanes) > 0) {
        dr.push_back(h);
        g.entries.push_back(rc.id);
        net.lambda_[{rc.id, h}] = lane_access_fraction(rc, g);
      }
    }
  }
  return net;
}

const Link& Network::link(LinkId id) const {
  auto it = link_index_.find(id);
  if (it == link_index_.end()) throw std::out_of_range(fmt::format("unknown link {}", id));
  return spec_.links[it->second];
}

std::vector<LinkId> Network::link_ids() const {
  std::vector<LinkId> ids;
  for (const auto& [id, _] : link_index_) ids.push_back(id);
  return ids;
}

const RoadConnection& Network::road_connection(RcId id) const {
  auto it = rc_index_.find(id);
  if (it == rc_index_.end()) throw std::out_of_range(fmt::format("unknown road connection {}", id));
  return spec_.road_connections[it->second];
}

const LaneGroup& Network::lane_group(LaneGroupId id) const {
  auto it = groups_.find(id);
  if (it == groups_.end()) throw std::out_of_range(fmt::format("unknown lane group {}", id));
  return it->second;
}

std::span<const LaneGroupId> Network::lane_groups_of(LinkId link) const {
  auto it = groups_of_link_.find(link);
  if (it == groups_of_link_.end()) return {};
  return it->second;
}

std::span<const LaneGroupId> Network::downstream_lane_groups(LinkId link, RcId rc) const {
  if (rc == kSourceEntry) {
    auto it = source_entry_groups_.find(link);
    if (it == source_entry_groups_.end()) return {};
    return it->second;
  }
  auto it = rc_downstream_groups_.find(rc);
  if (it == rc_downstream_groups_.end()) return {};
  return it->second;
}

double Network::access_fraction(RcId rc, LaneGroupId h) const {
  if (rc == kSourceEntry) return 1.0;
  auto it = lambda_.find({rc, h});
  if (it == lambda_.end())
    throw std::domain_error(fmt::format("lane group {} is not reached by road connection {}", h, rc));
  return it->second;
}

std::span<const RcId> Network::exiting(LinkId link) const {
  auto it = exiting_.find(link);
  if (it == exiting_.end()) return {};
  return it->second;
}

std::span<const RcId> Network::entering(LinkId link) const {
  auto it = entering_.find(link);
  if (it == entering_.end()) return {};
  return it->second;
}

std::vector<LinkId> Network::next_links(LinkId link) const {
  std::set<LinkId> out;
  for (RcId rc : exiting(link)) out.insert(road_connection(rc).downstream_link);
  return {out.begin(), out.end()};
}

std::optional<RcId> Network::exit_to(LaneGroupId g, LinkId next_link) const {
  for (RcId rc : lane_group(g).exits)
    if (road_connection(rc).downstream_link == next_link) return rc;
  return std::nullopt;
}

}  // namespace hybridsim
