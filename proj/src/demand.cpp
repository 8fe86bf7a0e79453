#include "hybridsim/demand.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace hybridsim {

bool Route::contains(LinkId link) const { return std::find(links.begin(), links.end(), link) != links.end(); }

LinkId Route::successor(LinkId link) const {
  auto it = std::find(links.begin(), links.end(), link);
  if (it == links.end()) throw RoutingError(fmt::format("route {} does not contain link {}", id, link));
  ++it;
  return it == links.end() ? kExitLink : *it;
}

double Profile::at(double t) const {
  if (values.empty()) return 0.0;
  const double u = (t - start_s) / period_s;
  const auto k = static_cast<long long>(std::ceil(u - 1e-12)) - 1;
  const auto idx = std::clamp<long long>(k, 0, static_cast<long long>(values.size()) - 1);
  return values[static_cast<std::size_t>(idx)];
}

Routing::Routing(const Network& net, std::vector<VehicleType> types, std::vector<Route> routes,
                 std::vector<SplitProfile> splits)
    : net_(&net) {
  for (auto& t : types) {
    const auto id = t.id;
    if (!types_.emplace(id, std::move(t)).second)
      throw ConfigError(fmt::format("vehicle type {}: duplicate id", id));
  }
  for (auto& r : routes) {
    if (r.links.empty()) throw ConfigError(fmt::format("route {}: empty", r.id));
    for (std::size_t k = 0; k < r.links.size(); ++k) {
      if (!net.has_link(r.links[k]))
        throw ConfigError(fmt::format("route {}: unknown link {}", r.id, r.links[k]));
      if (k + 1 < r.links.size()) {
        auto next = net.next_links(r.links[k]);
        if (std::find(next.begin(), next.end(), r.links[k + 1]) == next.end())
          throw ConfigError(fmt::format("route {}: no road connection from link {} to link {}", r.id,
                                        r.links[k], r.links[k + 1]));
      }
    }
    const auto id = r.id;
    if (!routes_.emplace(id, std::move(r)).second)
      throw ConfigError(fmt::format("route {}: duplicate id", id));
  }
  for (auto& sp : splits) {
    if (!net.has_link(sp.link)) throw ConfigError(fmt::format("split on unknown link {}", sp.link));
    if (!types_.contains(sp.type))
      throw ConfigError(fmt::format("split on link {}: unknown vehicle type {}", sp.link, sp.type));
    auto next = net.next_links(sp.link);
    std::vector<double> breaks;
    for (const auto& [to, prof] : sp.ratios) {
      if (std::find(next.begin(), next.end(), to) == next.end())
        throw ConfigError(fmt::format("split on link {}: link {} is not reachable", sp.link, to));
      if (prof.values.empty() || !(prof.period_s > 0.0))
        throw ConfigError(fmt::format("split on link {}: ratio profile to {} is empty", sp.link, to));
      for (double v : prof.values)
        if (v < 0.0) throw ConfigError(fmt::format("split on link {}: negative ratio", sp.link));
      for (std::size_t k = 0; k <= prof.values.size(); ++k) breaks.push_back(prof.start_s + k * prof.period_s);
    }
    // Ratios must sum to one on every piece of the merged breakpoint grid.
    std::sort(breaks.begin(), breaks.end());
    std::vector<double> probes{breaks.front() - 1.0, breaks.back() + 1.0};
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k)
      if (breaks[k + 1] > breaks[k]) probes.push_back(0.5 * (breaks[k] + breaks[k + 1]));
    for (double t : probes) {
      double sum = 0.0;
      for (const auto& [_, prof] : sp.ratios) sum += prof.at(t);
      if (std::abs(sum - 1.0) > 1e-6)
        throw ConfigError(fmt::format("split on link {} for type {}: ratios sum to {} at t = {}", sp.link,
                                      sp.type, sum, t));
    }
    const auto key = std::make_pair(sp.link, sp.type);
    if (!splits_.emplace(key, std::move(sp)).second)
      throw ConfigError(fmt::format("split on link {}: duplicate row for type {}", key.first, key.second));
  }
}

const VehicleType& Routing::type(TypeId id) const {
  auto it = types_.find(id);
  if (it == types_.end()) throw ConfigError(fmt::format("unknown vehicle type {}", id));
  return it->second;
}

const Route& Routing::route(RouteId id) const {
  auto it = routes_.find(id);
  if (it == routes_.end()) throw RoutingError(fmt::format("unknown route {}", id));
  return it->second;
}

std::vector<std::pair<LinkId, double>> Routing::split_ratios(LinkId link, TypeId type, double t) const {
  std::vector<std::pair<LinkId, double>> out;
  const auto next = net_->next_links(link);
  if (next.empty()) {
    out.emplace_back(kExitLink, 1.0);
    return out;
  }
  const auto key = std::make_pair(link, type);
  if (auto ov = split_overrides_.find(key); ov != split_overrides_.end()) {
    const std::map<LinkId, double>* active = nullptr;
    for (const auto& [from, ratios] : ov->second)
      if (from <= t) active = &ratios;
    if (active) {
      for (const auto& [to, r] : *active)
        if (r > 0.0) out.emplace_back(to, r);
      return out;
    }
  }
  auto it = splits_.find(key);
  if (it == splits_.end()) {
    if (next.size() == 1) {
      out.emplace_back(next.front(), 1.0);
      return out;
    }
    throw ConfigError(fmt::format("no split ratios for vehicle type {} at diverge link {}", type, link));
  }
  for (const auto& [to, prof] : it->second.ratios) {
    const double r = prof.at(t);
    if (r > 0.0) out.emplace_back(to, r);
  }
  return out;
}

LinkId Routing::next_link(const StateIndex& s, LinkId current) const {
  if (type(s.type).routing == RoutingBehavior::routed) return route(s.key).successor(current);
  return s.key;
}

RouteId Routing::route_on_entry(RouteId r, TypeId type, LinkId link) const {
  auto it = redirects_.find({type, r});
  if (it == redirects_.end() || !it->second.en_route) return r;
  const auto& target = route(it->second.to);
  return target.contains(link) ? it->second.to : r;
}

RouteId Routing::departure_route(TypeId type, RouteId r) const {
  auto it = redirects_.find({type, r});
  return it == redirects_.end() ? r : it->second.to;
}

void Routing::override_split(LinkId link, TypeId type, double from_s, std::map<LinkId, double> ratios) {
  double sum = 0.0;
  const auto next = net_->next_links(link);
  for (const auto& [to, r] : ratios) {
    if (r < 0.0) throw ConfigError(fmt::format("split command on link {}: negative ratio", link));
    if (std::find(next.begin(), next.end(), to) == next.end())
      throw ConfigError(fmt::format("split command on link {}: link {} is not reachable", link, to));
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw ConfigError(fmt::format("split command on link {}: ratios sum to {}", link, sum));
  auto& list = split_overrides_[{link, type}];
  if (!list.empty() && list.back().first == from_s) {
    list.back().second = std::move(ratios);
  } else {
    list.emplace_back(from_s, std::move(ratios));
  }
}

void Routing::redirect(TypeId type, RouteId from, RouteId to, bool en_route) {
  if (this->type(type).routing != RoutingBehavior::routed)
    throw ConfigError(fmt::format("router command for non-routed type {}", type));
  route(from);
  route(to);
  redirects_[{type, from}] = Redirect{to, en_route};
}

FluxPacket assign_next_link(const FluxPacket& p, LinkId entered_link, double now, const Routing& routing,
                            Rng& rng) {
  FluxPacket out = p.is_fluid() ? FluxPacket::fluid() : FluxPacket::vehicles();
  out.origin = p.origin;
  out.road_connection = p.road_connection;

  auto routed_key = [&](const StateIndex& s) {
    const RouteId r = routing.route_on_entry(s.key, s.type, entered_link);
    if (!routing.route(r).contains(entered_link))
      throw RoutingError(fmt::format("route {} does not contain link {}", r, entered_link));
    return StateIndex{s.type, r};
  };

  if (p.is_fluid()) {
    for (const auto& [s, a] : p.fluid_content()) {
      if (routing.type(s.type).routing == RoutingBehavior::routed) {
        out.add(routed_key(s), a);
        continue;
      }
      const auto ratios = routing.split_ratios(entered_link, s.type, now);
      double given = 0.0;
      for (std::size_t k = 0; k < ratios.size(); ++k) {
        const double share = k + 1 == ratios.size() ? a - given : a * ratios[k].second;
        out.add(StateIndex{s.type, ratios[k].first}, share);
        given += share;
      }
    }
    return out;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& [s, vs] : p.vehicle_content()) {
    const bool routed = routing.type(s.type).routing == RoutingBehavior::routed;
    std::vector<std::pair<LinkId, double>> ratios;
    if (!routed) ratios = routing.split_ratios(entered_link, s.type, now);
    for (Vehicle v : vs) {
      if (routed) {
        v.state = routed_key(s);
      } else if (ratios.size() == 1) {
        v.state = StateIndex{s.type, ratios.front().first};
      } else {
        double u = unit(rng);
        LinkId pick = ratios.back().first;
        for (const auto& [to, r] : ratios) {
          if (u < r) {
            pick = to;
            break;
          }
          u -= r;
        }
        v.state = StateIndex{s.type, pick};
      }
      out.add(std::move(v));
    }
  }
  return out;
}

void Source::override_intensity(double from_s, Profile p) {
  if (!overrides_.empty() && overrides_.back().first == from_s) {
    overrides_.back().second = std::move(p);
  } else {
    overrides_.emplace_back(from_s, std::move(p));
  }
}

double Source::intensity_at(double t) const {
  const Profile* active = &profile_.intensity_vph;
  for (const auto& [from, p] : overrides_)
    if (from <= t) active = &p;
  return std::max(0.0, active->at(t));
}

StateIndex Source::entry_state(const Routing& routing) const {
  if (routing.type(profile_.type).routing == RoutingBehavior::routed)
    return StateIndex{profile_.type, routing.departure_route(profile_.type, profile_.route.value_or(0))};
  return StateIndex{profile_.type, profile_.link};
}

FluxPacket Source::step(double now, double dt, bool fluid_target, const Routing& routing,
                        VehicleFactory& factory, Rng& rng) {
  const double mean = intensity_at(now + dt) * dt / 3600.0;
  const auto state = entry_state(routing);
  if (fluid_target) {
    FluxPacket p = FluxPacket::fluid();
    p.origin = -1;
    p.road_connection = kSourceEntry;
    p.add(state, fluid_buffer_ + mean);
    demanded_ += mean;
    fluid_buffer_ = 0.0;
    return p;
  }
  if (mean > 0.0) {
    std::poisson_distribution<long> draw(mean);
    const long n = draw(rng);
    for (long k = 0; k < n; ++k) vehicle_buffer_.push_back(factory.make(state, now));
    demanded_ += static_cast<double>(n);
  }
  FluxPacket p = FluxPacket::vehicles();
  p.origin = -1;
  p.road_connection = kSourceEntry;
  for (auto& v : vehicle_buffer_) p.add(std::move(v));
  vehicle_buffer_.clear();
  return p;
}

void Source::retain(const FluxPacket& remainder) {
  if (remainder.is_fluid()) {
    fluid_buffer_ += remainder.total();
    return;
  }
  // Rejected vehicles keep their place at the head of the buffer, in id order.
  std::vector<Vehicle> back;
  for (const auto& [_, vs] : remainder.vehicle_content())
    for (const auto& v : vs) back.push_back(v);
  std::sort(back.begin(), back.end(), [](const Vehicle& a, const Vehicle& b) { return a.id < b.id; });
  vehicle_buffer_.insert(vehicle_buffer_.begin(), back.begin(), back.end());
}

double Source::buffered() const { return fluid_buffer_ + static_cast<double>(vehicle_buffer_.size()); }

}  // namespace hybridsim
