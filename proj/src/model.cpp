#include "hybridsim/model.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace hybridsim {

std::optional<RcId> LaneRouting::exit_for(LaneGroupId g, const StateIndex& s) const {
  const auto key = std::make_pair(g, s);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const auto& lg = net_->lane_group(g);
  std::optional<RcId> out;
  if (lg.reaches_downstream_end()) {
    if (net_->is_terminal(lg.link)) {
      out = kExitConnection;
    } else {
      const LinkId next = routing_->next_link(s, lg.link);
      if (next != kExitLink) out = net_->exit_to(g, next);
    }
  }
  cache_.emplace(key, out);
  return out;
}

std::vector<LaneGroupId> LaneRouting::targets(LinkId link, const StateIndex& s) const {
  std::vector<LaneGroupId> out;
  for (LaneGroupId g : net_->lane_groups_of(link))
    if (exit_for(g, s)) out.push_back(g);
  return out;
}

Model::Model(std::string id, std::vector<LinkId> links, double dt)
    : id_(std::move(id)), links_(std::move(links)), dt_(dt) {
  if (!(dt_ > 0.0)) throw ConfigError(fmt::format("model {}: time step must be positive", id_));
  std::sort(links_.begin(), links_.end());
}

bool Model::manages(LinkId link) const { return std::binary_search(links_.begin(), links_.end(), link); }

double Model::packet_size(const FluxPacket& p, RcId) const { return p.total(); }

double Model::max_packet_size(const FluxPacket& p, const Network& net, LinkId link, RcId r) const {
  double total = 0.0;
  for (LaneGroupId h : net.downstream_lane_groups(link, r))
    total += net.access_fraction(r, h) * lane_group_supply(h, !p.is_fluid());
  return total;
}

}  // namespace hybridsim
