#include "hybridsim/packet.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace hybridsim {

bool FluxPacket::empty() const {
  if (is_fluid()) return fluid_content().empty();
  return vehicle_content().empty();
}

double FluxPacket::total() const {
  double t = 0.0;
  if (is_fluid()) {
    for (const auto& [_, a] : fluid_content()) t += a;
  } else {
    for (const auto& [_, v] : vehicle_content()) t += static_cast<double>(v.size());
  }
  return t;
}

double FluxPacket::amount(const StateIndex& s) const {
  if (is_fluid()) {
    auto it = fluid_content().find(s);
    return it == fluid_content().end() ? 0.0 : it->second;
  }
  auto it = vehicle_content().find(s);
  return it == vehicle_content().end() ? 0.0 : static_cast<double>(it->second.size());
}

void FluxPacket::add(const StateIndex& s, double amount) {
  if (amount > 0.0) fluid_content()[s] += amount;
}

void FluxPacket::add(Vehicle v) {
  auto key = v.state;
  vehicle_content()[key].push_back(std::move(v));
}

void FluxPacket::merge(const FluxPacket& other) {
  if (other.empty()) return;
  if (other.is_fluid()) {
    for (const auto& [s, a] : other.fluid_content()) add(s, a);
  } else {
    for (const auto& [s, vs] : other.vehicle_content())
      for (const auto& v : vs) add(v);
  }
}

void FluxPacket::prune() {
  if (is_fluid()) {
    std::erase_if(fluid_content(), [](const auto& kv) { return !(kv.second > 0.0); });
  } else {
    std::erase_if(vehicle_content(), [](const auto& kv) { return kv.second.empty(); });
  }
}

double compute_alpha(double packet_size, double max_packet_size) {
  if (packet_size < 0.0 || max_packet_size < 0.0 || std::isnan(packet_size) || std::isnan(max_packet_size))
    throw ProtocolError(fmt::format("negative packet size (|p| = {}, p̄ = {})", packet_size, max_packet_size));
  if (max_packet_size <= 0.0) return 0.0;
  if (packet_size <= 0.0) return 1.0;
  return std::min(1.0, max_packet_size / packet_size);
}

PacketSplit scale_fluid_packet(const FluxPacket& p, double alpha) {
  PacketSplit out{FluxPacket::fluid(), FluxPacket::fluid()};
  for (const auto& [s, a] : p.fluid_content()) {
    if (alpha >= 1.0) {
      out.sent.add(s, a);
    } else if (alpha <= 0.0) {
      out.remainder.add(s, a);
    } else {
      const double sent = a * alpha;
      out.sent.add(s, sent);
      out.remainder.add(s, a - sent);
    }
  }
  out.sent.origin = out.remainder.origin = p.origin;
  out.sent.road_connection = out.remainder.road_connection = p.road_connection;
  return out;
}

PacketSplit split_vehicle_packet(const FluxPacket& p, double alpha) {
  PacketSplit out{FluxPacket::vehicles(), FluxPacket::vehicles()};
  for (const auto& [s, vs] : p.vehicle_content()) {
    // Guard against α·n landing a hair below an integer.
    const auto keep = static_cast<std::size_t>(
        std::floor(std::clamp(alpha, 0.0, 1.0) * static_cast<double>(vs.size()) + 1e-9));
    for (std::size_t k = 0; k < vs.size(); ++k) (k < keep ? out.sent : out.remainder).add(vs[k]);
  }
  out.sent.origin = out.remainder.origin = p.origin;
  out.sent.road_connection = out.remainder.road_connection = p.road_connection;
  return out;
}

PacketSplit split_packet(const FluxPacket& p, double alpha) {
  return p.is_fluid() ? scale_fluid_packet(p, alpha) : split_vehicle_packet(p, alpha);
}

namespace {

std::vector<FluxPacket> blank_like(const FluxPacket& p, std::size_t n) {
  std::vector<FluxPacket> out(n, p.is_fluid() ? FluxPacket::fluid() : FluxPacket::vehicles());
  for (auto& q : out) {
    q.origin = p.origin;
    q.road_connection = p.road_connection;
  }
  return out;
}

}  // namespace

std::vector<FluxPacket> distribute_uniform(const FluxPacket& p, std::size_t n) {
  auto out = blank_like(p, n);
  if (n == 0) return out;
  if (p.is_fluid()) {
    for (const auto& [s, a] : p.fluid_content()) {
      // Last share absorbs rounding so the total is exact.
      double given = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        out[k].add(s, a / static_cast<double>(n));
        given += a / static_cast<double>(n);
      }
      out[n - 1].add(s, a - given);
    }
  } else {
    std::size_t next = 0;
    for (const auto& [s, vs] : p.vehicle_content())
      for (const auto& v : vs) out[next++ % n].add(v);
  }
  return out;
}

std::vector<FluxPacket> distribute_equalizing(const FluxPacket& p, std::span<const double> free_space) {
  const std::size_t n = free_space.size();
  double space = 0.0;
  for (double f : free_space) space += std::max(0.0, f);
  if (n == 0 || space <= 0.0) return distribute_uniform(p, n);
  auto out = blank_like(p, n);
  if (p.is_fluid()) {
    for (const auto& [s, a] : p.fluid_content()) {
      double given = 0.0;
      std::size_t last_positive = 0;
      for (std::size_t k = 0; k < n; ++k)
        if (free_space[k] > 0.0) last_positive = k;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == last_positive || !(free_space[k] > 0.0)) continue;
        const double share = a * free_space[k] / space;
        out[k].add(s, share);
        given += share;
      }
      out[last_positive].add(s, a - given);
    }
  } else {
    std::vector<double> remaining(free_space.begin(), free_space.end());
    for (const auto& [s, vs] : p.vehicle_content()) {
      for (const auto& v : vs) {
        const auto k = static_cast<std::size_t>(
            std::distance(remaining.begin(), std::max_element(remaining.begin(), remaining.end())));
        out[k].add(v);
        remaining[k] -= 1.0;
      }
    }
  }
  return out;
}

FluxPacket to_fluid(const FluxPacket& p) {
  if (p.is_fluid()) return p;
  FluxPacket out = FluxPacket::fluid();
  for (const auto& [s, vs] : p.vehicle_content()) out.add(s, static_cast<double>(vs.size()));
  out.origin = p.origin;
  out.road_connection = p.road_connection;
  return out;
}

FluxPacket FluidToVehicleTranslator::translate(const FluxPacket& p, LaneGroupId lg, double now,
                                               VehicleFactory& factory) {
  if (!p.is_fluid()) return p;
  FluxPacket out = FluxPacket::vehicles();
  out.origin = p.origin;
  out.road_connection = p.road_connection;
  auto& res = residue_[lg];
  for (const auto& [s, a] : p.fluid_content()) {
    double total = res[s] + a;
    const double whole = std::floor(total + 1e-12);
    for (int k = 0; k < static_cast<int>(whole); ++k) out.add(factory.make(s, now));
    total -= whole;
    res[s] = std::max(0.0, total);
  }
  std::erase_if(res, [](const auto& kv) { return kv.second <= 0.0; });
  return out;
}

double FluidToVehicleTranslator::residue(LaneGroupId lg, const StateIndex& s) const {
  auto it = residue_.find(lg);
  if (it == residue_.end()) return 0.0;
  auto jt = it->second.find(s);
  return jt == it->second.end() ? 0.0 : jt->second;
}

double FluidToVehicleTranslator::total_residue(LaneGroupId lg) const {
  auto it = residue_.find(lg);
  if (it == residue_.end()) return 0.0;
  double t = 0.0;
  for (const auto& [_, r] : it->second) t += r;
  return t;
}

const std::map<StateIndex, double>* FluidToVehicleTranslator::residues(LaneGroupId lg) const {
  auto it = residue_.find(lg);
  return it == residue_.end() ? nullptr : &it->second;
}

}  // namespace hybridsim
