#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hybridsim/common.hpp"

namespace hybridsim {

/// Per-lane triangular fundamental diagram of a road segment.
struct RoadParams {
  double capacity_vphpl = 0.0;      // veh/hr/lane
  double speed_limit_kph = 0.0;     // km/hr
  double jam_density_vpkpl = 0.0;   // veh/km/lane

  double critical_density_vpkpl() const { return capacity_vphpl / speed_limit_kph; }
  /// Congestion wave speed of the triangular diagram, km/hr.
  double wave_speed_kph() const {
    return capacity_vphpl / (jam_density_vpkpl - critical_density_vpkpl());
  }
  /// Empty when well formed, otherwise a description of the violation.
  std::optional<std::string> problem() const;

  friend bool operator==(const RoadParams&, const RoadParams&) = default;
};

enum class PartialPosition { inner_upstream, inner_downstream, outer_upstream, outer_downstream };

std::string to_string(PartialPosition p);
std::optional<PartialPosition> partial_position_from_string(const std::string& s);

struct Gate {
  double start_m = 0.0;
  double end_m = 0.0;
  friend bool operator==(const Gate&, const Gate&) = default;
};

struct PartialLanes {
  PartialPosition position = PartialPosition::inner_downstream;
  int lanes = 1;
  double length_m = 0.0;
  std::vector<Gate> gates;  // stored only; no effect on dynamics
  friend bool operator==(const PartialLanes&, const PartialLanes&) = default;
};

struct Link {
  LinkId id = 0;
  double length_m = 0.0;
  int full_lanes = 1;
  std::vector<PartialLanes> partials;
  RoadParams params;

  const PartialLanes* partial(PartialPosition p) const;
  int partial_lane_count(PartialPosition p) const;
  /// Lanes addressable at the downstream end: inner-downstream, full, outer-downstream.
  int lanes_at_downstream_end() const;
  /// Lanes addressable at the upstream end: inner-upstream, full, outer-upstream.
  int lanes_at_upstream_end() const;

  friend bool operator==(const Link&, const Link&) = default;
};

/// Contiguous, 1-based, inclusive lane range.
struct LaneSet {
  int first = 1;
  int last = 1;

  int size() const { return last - first + 1; }
  bool contains(int lane) const { return lane >= first && lane <= last; }
  int overlap(const LaneSet& o) const;

  friend bool operator==(const LaneSet&, const LaneSet&) = default;
};

struct RoadConnection {
  RcId id = 0;
  LinkId upstream_link = 0;
  LaneSet upstream_lanes;    // numbering at the upstream link's downstream end
  LinkId downstream_link = 0;
  LaneSet downstream_lanes;  // numbering at the downstream link's upstream end
  friend bool operator==(const RoadConnection&, const RoadConnection&) = default;
};

enum class LaneStructure { full, inner_upstream, inner_downstream, outer_upstream, outer_downstream };

struct LaneGroup {
  LaneGroupId id = 0;
  LinkId link = 0;
  LaneStructure structure = LaneStructure::full;
  /// Lanes in downstream-end numbering; absent for upstream partial groups.
  std::optional<LaneSet> downstream_lanes;
  /// Lanes in upstream-end numbering; absent for downstream partial groups.
  std::optional<LaneSet> upstream_lanes;
  int num_lanes = 1;
  double length_m = 0.0;
  /// Lateral slot of the innermost lane; full lanes occupy slots [0, full_lanes).
  int lateral_first = 0;
  std::vector<RcId> exits;
  std::vector<RcId> entries;

  int lateral_last() const { return lateral_first + num_lanes - 1; }
  bool reaches_downstream_end() const { return downstream_lanes.has_value(); }
  bool reaches_upstream_end() const { return upstream_lanes.has_value(); }
};

struct NetworkSpec {
  std::vector<Link> links;
  std::vector<RoadConnection> road_connections;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Partitions the lanes of a link into lane groups. Lanes at the downstream
/// end are grouped into maximal contiguous runs sharing the same exiting
/// road-connection set (runs never span two lane structures); each upstream
/// partial structure forms one additional group. Groups are ordered inner to
/// outer with ids link_id * 100 + ordinal.
/// Throws ConfigError when two road connections leaving one group reach the
/// same downstream link.
std::vector<LaneGroup> derive_lane_groups(const Link& link,
                                          std::span<const RoadConnection> exiting);

/// Structural checks over the whole network; empty result means valid.
std::vector<std::string> validate_network(const NetworkSpec& spec);

/// Portion of lane group h accessible to road connection r, i.e.
/// |downstream lanes of r ∩ lanes of h| / |lanes of h|.
/// Throws std::domain_error when h is not reached by r.
double lane_access_fraction(const RoadConnection& r, const LaneGroup& h);

class Network {
 public:
  Network() = default;
  /// Validates and derives lane groups. Throws ConfigError listing every diagnostic.
  static Network build(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const Link& link(LinkId id) const;
  bool has_link(LinkId id) const { return link_index_.contains(id); }
  std::vector<LinkId> link_ids() const;
  const RoadConnection& road_connection(RcId id) const;
  bool has_road_connection(RcId id) const { return rc_index_.contains(id); }

  const LaneGroup& lane_group(LaneGroupId id) const;
  std::span<const LaneGroupId> lane_groups_of(LinkId link) const;
  /// D_r: lane groups entered by r. kSourceEntry yields every upstream-end
  /// full-lane group of `link`.
  std::span<const LaneGroupId> downstream_lane_groups(LinkId link, RcId rc) const;
  /// λ^r_h; 1 for source entries.
  double access_fraction(RcId rc, LaneGroupId h) const;

  std::span<const RcId> exiting(LinkId link) const;
  std::span<const RcId> entering(LinkId link) const;
  std::vector<LinkId> next_links(LinkId link) const;
  bool is_terminal(LinkId link) const { return exiting(link).empty(); }
  /// Road connection out of lane group g leading to next_link, if any.
  std::optional<RcId> exit_to(LaneGroupId g, LinkId next_link) const;

 private:
  NetworkSpec spec_;
  std::map<LinkId, std::size_t> link_index_;
  std::map<RcId, std::size_t> rc_index_;
  std::map<LaneGroupId, LaneGroup> groups_;
  std::map<LinkId, std::vector<LaneGroupId>> groups_of_link_;
  std::map<LinkId, std::vector<LaneGroupId>> source_entry_groups_;
  std::map<RcId, std::vector<LaneGroupId>> rc_downstream_groups_;
  std::map<std::pair<RcId, LaneGroupId>, double> lambda_;
  std::map<LinkId, std::vector<RcId>> exiting_;
  std::map<LinkId, std::vector<RcId>> entering_;
};

}  // namespace hybridsim
