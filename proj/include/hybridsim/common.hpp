#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace hybridsim {

using LinkId = std::int64_t;
using RcId = std::int64_t;
using LaneGroupId = std::int64_t;
using TypeId = std::int64_t;
using RouteId = std::int64_t;
using VehicleId = std::int64_t;
using ElementId = std::int64_t;

/// Next-link key of a state whose vehicles leave the network at the end of
/// the current link.
inline constexpr LinkId kExitLink = -1;

/// Pseudo road connection through which a source injects into its link.
inline constexpr RcId kSourceEntry = -2;

/// Pseudo road connection used by lane groups of terminal links.
inline constexpr RcId kExitConnection = -3;

inline constexpr double kVehEps = 1e-9;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct StateIndex {
  TypeId type = 0;
  /// Route id for routed types, next link id (or kExitLink) for probabilistic.
  std::int64_t key = 0;

  friend auto operator<=>(const StateIndex&, const StateIndex&) = default;
};

std::string to_string(const StateIndex& s);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RoutingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace hybridsim
