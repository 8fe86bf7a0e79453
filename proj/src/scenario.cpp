#include "hybridsim/scenario.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "hybridsim/ctm.hpp"

namespace hybridsim {

using json = nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : "\n") + s;
  return out;
}

/// Reads a JSON object and reports missing, mistyped, and unknown keys
/// with their path.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) fail("", "expected an object");
  }
  ~Reader() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) errors_.push_back(fmt::format("{}.{}: unknown key", path_, k));
  }

  template <class T>
  T get(const std::string& key, T fallback = T{}, bool required = true) {
    seen_.insert(key);
    if (!j_.is_object()) return fallback;
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) {
      if (required) fail(key, "missing");
      return fallback;
    }
    try {
      return it->template get<T>();
    } catch (const json::exception&) {
      fail(key, fmt::format("wrong type ({})", it->type_name()));
      return fallback;
    }
  }
  template <class T>
  T opt(const std::string& key, T fallback) {
    return get<T>(key, fallback, false);
  }
  const json* child(const std::string& key, bool required, json::value_t type) {
    seen_.insert(key);
    if (!j_.is_object()) return nullptr;
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) {
      if (required) fail(key, "missing");
      return nullptr;
    }
    if (it->type() != type) {
      fail(key, fmt::format("wrong type ({})", it->type_name()));
      return nullptr;
    }
    return &*it;
  }
  const json* array(const std::string& key, bool required = false) {
    return child(key, required, json::value_t::array);
  }
  const json* object(const std::string& key, bool required = true) {
    return child(key, required, json::value_t::object);
  }
  std::string at(const std::string& key) const { return path_ + "." + key; }
  void fail(const std::string& key, const std::string& what) {
    errors_.push_back(fmt::format("{}{}{}: {}", path_, key.empty() ? "" : ".", key, what));
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

template <class F>
void each(const json* arr, const std::string& path, F&& f) {
  if (!arr) return;
  for (std::size_t i = 0; i < arr->size(); ++i) f((*arr)[i], fmt::format("{}[{}]", path, i));
}

std::optional<LaneSet> lanes_from(Reader& r, const std::string& key, std::vector<std::string>& errors) {
  auto lanes = r.get<std::vector<int>>(key);
  if (lanes.empty()) {
    errors.push_back(r.at(key) + ": lane set must not be empty");
    return std::nullopt;
  }
  std::sort(lanes.begin(), lanes.end());
  for (std::size_t i = 1; i < lanes.size(); ++i)
    if (lanes[i] != lanes[i - 1] + 1) {
      errors.push_back(r.at(key) + ": lanes must be contiguous");
      return std::nullopt;
    }
  return LaneSet{lanes.front(), lanes.back()};
}

json lanes_to(const LaneSet& s) {
  json a = json::array();
  for (int l = s.first; l <= s.last; ++l) a.push_back(l);
  return a;
}

Profile profile_from(const json& j, const std::string& path, std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  Profile p;
  p.start_s = r.opt<double>("start_s", 0.0);
  p.period_s = r.opt<double>("period_s", 1.0);
  p.values = r.get<std::vector<double>>("values");
  return p;
}

json profile_to(const Profile& p) { return {{"start_s", p.start_s}, {"period_s", p.period_s}, {"values", p.values}}; }

std::string routing_name(RoutingBehavior b) { return b == RoutingBehavior::routed ? "routed" : "probabilistic"; }

Scenario from_json(const json& root, std::vector<std::string>& errors) {
  Scenario s;
  Reader top(root, "scenario", errors);
  s.schema_version = top.get<int>("schema_version");
  if (const json* run = top.object("run")) {
    Reader r(*run, "run", errors);
    s.run.duration_s = r.get<double>("duration_s");
    s.run.output_dt_s = r.opt<double>("output_dt_s", 10.0);
    s.run.seed = r.opt<std::uint64_t>("seed", 1);
  }
  each(top.array("vehicle_types", true), "vehicle_types", [&](const json& j, const std::string& path) {
    Reader r(j, path, errors);
    VehicleType t;
    t.id = r.get<TypeId>("id");
    t.name = r.opt<std::string>("name", "");
    const auto mode = r.opt<std::string>("routing", "probabilistic");
    if (mode == "routed") t.routing = RoutingBehavior::routed;
    else if (mode != "probabilistic") r.fail("routing", "must be 'routed' or 'probabilistic'");
    s.vehicle_types.push_back(t);
  });
  each(top.array("links", true), "links", [&](const json& j, const std::string& path) {
    Reader r(j, path, errors);
    Link l;
    l.id = r.get<LinkId>("id");
    l.length_m = r.get<double>("length_m");
    l.full_lanes = r.get<int>("full_lanes");
    if (const json* p = r.object("params")) {
      Reader pr(*p, path + ".params", errors);
      l.params.capacity_vphpl = pr.get<double>("capacity_vphpl");
      l.params.speed_limit_kph = pr.get<double>("speed_limit_kph");
      l.params.jam_density_vpkpl = pr.get<double>("jam_density_vpkpl");
    }
    each(r.array("partial_lanes"), path + ".partial_lanes", [&](const json& pj, const std::string& pp) {
      Reader pr(pj, pp, errors);
      PartialLanes pl;
      const auto pos = pr.get<std::string>("position");
      if (auto v = partial_position_from_string(pos)) pl.position = *v;
      else pr.fail("position", fmt::format("unknown position '{}'", pos));
      pl.lanes = pr.get<int>("lanes");
      pl.length_m = pr.get<double>("length_m");
      each(pr.array("gates"), pp + ".gates", [&](const json& gj, const std::string& gp) {
        Reader gr(gj, gp, errors);
        pl.gates.push_back({gr.get<double>("start_m"), gr.get<double>("end_m")});
      });
      l.partials.push_back(pl);
    });
    s.network.links.push_back(l);
  });
  each(top.array("road_connections"), "road_connections", [&](const json& j, const std::string& path) {
    Reader r(j, path, errors);
    RoadConnection rc;
    rc.id = r.get<RcId>("id");
    rc.upstream_link = r.get<LinkId>("upstream_link");
    rc.downstream_link = r.get<LinkId>("downstream_link");
    if (auto ls = lanes_from(r, "upstream_lanes", errors)) rc.upstream_lanes = *ls;
    if (auto ls = lanes_from(r, "downstream_lanes", errors)) rc.downstream_lanes = *ls;
    s.network.road_connections.push_back(rc);
  });
  each(top.array("models", true), "models", [&](const json& j, const std::string& path) {
    Reader r(j, path, errors);
    ModelSpec m;
    m.id = r.get<std::string>("id");
    m.kind = r.get<std::string>("kind");
    m.dt_s = r.get<double>("dt_s");
    m.links = r.get<std::vector<LinkId>>("links");
    m.max_cell_length_m = r.opt<double>("max_cell_length_m", 100.0);
    m.xi = r.opt<double>("xi", 1.0);
    m.sigma_v = r.opt<double>("sigma_v", 0.0);
    m.sigma_w = r.opt<double>("sigma_w", 0.0);
    m.sigma_f = r.opt<double>("sigma_f", 0.0);
    s.models.push_back(m);
  });
  each(top.array("routes"), "routes", [&](const json& j, const std::string& path) {
    Reader r(j, path, errors);
    s.routes.push_back({r.get<RouteId>("id"), r.get<std::vector<LinkId>>("links")});
  });
  each(top.array("demands"), "demands", [&](const json& j, const std::string& path) {
    Reader r(j, path, errors);
    DemandProfile d;
    d.id = r.get<ElementId>("id");
    d.link = r.get<LinkId>("link");
    d.type = r.get<TypeId>("vehicle_type");
    if (const RouteId route = r.opt<RouteId>("route", -1); route >= 0) d.route = route;
    if (const json* p = r.object("intensity_vph")) d.intensity_vph = profile_from(*p, path + ".intensity_vph", errors);
    s.demands.push_back(d);
  });
  each(top.array("splits"), "splits", [&](const json& j, const std::string& path) {
    Reader r(j, path, errors);
    SplitProfile sp;
    sp.link = r.get<LinkId>("link");
    sp.type = r.get<TypeId>("vehicle_type");
    each(r.array("ratios", true), path + ".ratios", [&](const json& rj, const std::string& rp) {
      Reader rr(rj, rp, errors);
      const LinkId to = rr.get<LinkId>("to_link");
      if (const json* p = rr.object("profile")) sp.ratios[to] = profile_from(*p, rp + ".profile", errors);
    });
    s.splits.push_back(sp);
  });
  each(top.array("sensors"), "sensors", [&](const json& j, const std::string& path) {
    Reader r(j, path, errors);
    SensorSpec x;
    x.id = r.get<ElementId>("id");
    const auto kind = r.get<std::string>("kind");
    if (auto k = sensor_kind_from_string(kind)) x.kind = *k;
    else r.fail("kind", fmt::format("unknown sensor kind '{}'", kind));
    x.dt_s = r.get<double>("dt_s");
    x.link = r.opt<LinkId>("link", 0);
    x.position_m = r.opt<double>("position_m", 0.0);
    x.lane_group = r.opt<LaneGroupId>("lane_group", 0);
    x.source = r.opt<ElementId>("source", 0);
    x.depart_after_s = r.opt<double>("depart_after_s", 0.0);
    s.sensors.push_back(x);
  });
  each(top.array("actuators"), "actuators", [&](const json& j, const std::string& path) {
    Reader r(j, path, errors);
    ActuatorSpec a;
    a.id = r.get<ElementId>("id");
    const auto kind = r.get<std::string>("kind");
    if (auto k = actuator_kind_from_string(kind)) a.kind = *k;
    else r.fail("kind", fmt::format("unknown actuator kind '{}'", kind));
    a.dt_s = r.get<double>("dt_s");
    a.road_connection = r.opt<RcId>("road_connection", 0);
    a.link = r.opt<LinkId>("link", 0);
    a.type = r.opt<TypeId>("vehicle_type", 0);
    a.route = r.opt<RouteId>("route", 0);
    a.demand = r.opt<ElementId>("demand", 0);
    s.actuators.push_back(a);
  });
  each(top.array("controllers"), "controllers", [&](const json& j, const std::string& path) {
    Reader r(j, path, errors);
    ControllerSpec c;
    c.id = r.get<ElementId>("id");
    c.kind = r.get<std::string>("kind");
    c.dt_s = r.get<double>("dt_s");
    c.sensors = r.opt<std::vector<ElementId>>("sensors", {});
    c.actuators = r.opt<std::vector<ElementId>>("actuators", {});
    c.offset_s = r.opt<double>("offset_s", 0.0);
    each(r.array("stages"), path + ".stages", [&](const json& sj, const std::string& sp) {
      Reader sr(sj, sp, errors);
      c.stages.push_back({sr.get<double>("duration_s"), sr.opt<std::vector<ElementId>>("open", {})});
    });
    c.params = r.opt<std::map<std::string, double>>("params", {});
    s.controllers.push_back(c);
  });
  return s;
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

template <class T, class F>
void check_unique(const std::vector<T>& v, F id, const std::string& what, std::vector<std::string>& errors) {
  std::set<decltype(id(v.front()))> seen;
  for (const T& x : v)
    if (!seen.insert(id(x)).second) errors.push_back(fmt::format("{} {}: duplicate id", what, id(x)));
}

}  // namespace

ScenarioError::ScenarioError(std::vector<std::string> errors)
    : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

Scenario parse_scenario_text(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError({fmt::format("{}:{}: syntax error: {}", source, line_of(text, e.byte), e.what())});
  }
  std::vector<std::string> errors;
  Scenario s = from_json(root, errors);
  if (!errors.empty()) {
    for (auto& e : errors) e = source + ": " + e;
    throw ScenarioError(errors);
  }
  return s;
}

Scenario parse_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError({fmt::format("{}: cannot open file", path.string())});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str(), path.string());
}

std::string serialize_scenario(const Scenario& s) {
  json root;
  root["schema_version"] = s.schema_version;
  root["run"] = {{"duration_s", s.run.duration_s}, {"output_dt_s", s.run.output_dt_s}, {"seed", s.run.seed}};
  root["vehicle_types"] = json::array();
  for (const auto& t : s.vehicle_types)
    root["vehicle_types"].push_back({{"id", t.id}, {"name", t.name}, {"routing", routing_name(t.routing)}});
  root["links"] = json::array();
  for (const Link& l : s.network.links) {
    json j = {{"id", l.id},
              {"length_m", l.length_m},
              {"full_lanes", l.full_lanes},
              {"params",
               {{"capacity_vphpl", l.params.capacity_vphpl},
                {"speed_limit_kph", l.params.speed_limit_kph},
                {"jam_density_vpkpl", l.params.jam_density_vpkpl}}}};
    if (!l.partials.empty()) {
      j["partial_lanes"] = json::array();
      for (const auto& p : l.partials) {
        json pj = {{"position", to_string(p.position)}, {"lanes", p.lanes}, {"length_m", p.length_m}};
        if (!p.gates.empty()) {
          pj["gates"] = json::array();
          for (const Gate& g : p.gates) pj["gates"].push_back({{"start_m", g.start_m}, {"end_m", g.end_m}});
        }
        j["partial_lanes"].push_back(pj);
      }
    }
    root["links"].push_back(j);
  }
  root["road_connections"] = json::array();
  for (const auto& rc : s.network.road_connections)
    root["road_connections"].push_back({{"id", rc.id},
                                        {"upstream_link", rc.upstream_link},
                                        {"upstream_lanes", lanes_to(rc.upstream_lanes)},
                                        {"downstream_link", rc.downstream_link},
                                        {"downstream_lanes", lanes_to(rc.downstream_lanes)}});
  root["models"] = json::array();
  for (const auto& m : s.models) {
    json j = {{"id", m.id}, {"kind", m.kind}, {"dt_s", m.dt_s}, {"links", m.links}};
    if (m.kind == "ctm") {
      j["max_cell_length_m"] = m.max_cell_length_m;
      j["xi"] = m.xi;
    }
    if (m.kind == "newell") {
      j["sigma_v"] = m.sigma_v;
      j["sigma_w"] = m.sigma_w;
      j["sigma_f"] = m.sigma_f;
    }
    root["models"].push_back(j);
  }
  root["routes"] = json::array();
  for (const auto& r : s.routes) root["routes"].push_back({{"id", r.id}, {"links", r.links}});
  root["demands"] = json::array();
  for (const auto& d : s.demands) {
    json j = {{"id", d.id}, {"link", d.link}, {"vehicle_type", d.type}, {"intensity_vph", profile_to(d.intensity_vph)}};
    if (d.route) j["route"] = *d.route;
    root["demands"].push_back(j);
  }
  root["splits"] = json::array();
  for (const auto& sp : s.splits) {
    json ratios = json::array();
    for (const auto& [to, p] : sp.ratios) ratios.push_back({{"to_link", to}, {"profile", profile_to(p)}});
    root["splits"].push_back({{"link", sp.link}, {"vehicle_type", sp.type}, {"ratios", ratios}});
  }
  root["sensors"] = json::array();
  for (const auto& x : s.sensors) {
    json j = {{"id", x.id}, {"kind", to_string(x.kind)}, {"dt_s", x.dt_s}};
    switch (x.kind) {
      case SensorKind::fixed_local:
        j["link"] = x.link;
        j["position_m"] = x.position_m;
        break;
      case SensorKind::fixed_lanegroup: j["lane_group"] = x.lane_group; break;
      case SensorKind::probe:
        j["source"] = x.source;
        j["depart_after_s"] = x.depart_after_s;
        break;
    }
    root["sensors"].push_back(j);
  }
  root["actuators"] = json::array();
  for (const auto& a : s.actuators) {
    json j = {{"id", a.id}, {"kind", to_string(a.kind)}, {"dt_s", a.dt_s}};
    switch (a.kind) {
      case ActuatorKind::rc_block: j["road_connection"] = a.road_connection; break;
      case ActuatorKind::vsl: j["link"] = a.link; break;
      case ActuatorKind::router:
        j["vehicle_type"] = a.type;
        j["route"] = a.route;
        break;
      case ActuatorKind::demand_modifier: j["demand"] = a.demand; break;
      case ActuatorKind::split_modifier:
        j["link"] = a.link;
        j["vehicle_type"] = a.type;
        break;
    }
    root["actuators"].push_back(j);
  }
  root["controllers"] = json::array();
  for (const auto& c : s.controllers) {
    json j = {{"id", c.id}, {"kind", c.kind}, {"dt_s", c.dt_s}, {"sensors", c.sensors}, {"actuators", c.actuators}};
    if (c.offset_s != 0.0) j["offset_s"] = c.offset_s;
    if (!c.stages.empty()) {
      j["stages"] = json::array();
      for (const auto& st : c.stages) j["stages"].push_back({{"duration_s", st.duration_s}, {"open", st.open}});
    }
    if (!c.params.empty()) j["params"] = c.params;
    root["controllers"].push_back(j);
  }
  return root.dump(2) + "\n";
}

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> errors;
  auto err = [&](std::string m) { errors.push_back(std::move(m)); };

  if (s.schema_version != kScenarioSchemaVersion)
    err(fmt::format("schema_version {} is not supported (expected {})", s.schema_version, kScenarioSchemaVersion));
  if (!(s.run.duration_s > 0.0)) err("run.duration_s must be positive");
  if (s.run.output_dt_s < 0.0) err("run.output_dt_s must not be negative");

  if (!s.vehicle_types.empty()) check_unique(s.vehicle_types, [](const auto& t) { return t.id; }, "vehicle type", errors);
  if (s.vehicle_types.empty() && !s.demands.empty()) err("demands require at least one vehicle type");

  const auto net_errors = validate_network(s.network);
  errors.insert(errors.end(), net_errors.begin(), net_errors.end());
  std::set<LinkId> links;
  for (const Link& l : s.network.links) links.insert(l.id);

  // Model assignment.
  std::map<LinkId, int> assigned;
  if (!s.models.empty()) check_unique(s.models, [](const auto& m) { return m.id; }, "model", errors);
  for (const ModelSpec& m : s.models) {
    if (m.id.empty()) err("model with empty id");
    if (m.kind != "ctm" && m.kind != "meso" && m.kind != "newell")
      err(fmt::format("model {}: unknown kind '{}'", m.id, m.kind));
    if (!(m.dt_s > 0.0)) err(fmt::format("model {}: dt_s must be positive", m.id));
    if (m.kind == "ctm") {
      if (!(m.max_cell_length_m > 0.0)) err(fmt::format("model {}: max_cell_length_m must be positive", m.id));
      if (m.xi < 0.0 || m.xi > 1.0) err(fmt::format("model {}: xi must lie in [0, 1]", m.id));
    }
    if (m.sigma_v < 0.0 || m.sigma_w < 0.0 || m.sigma_f < 0.0)
      err(fmt::format("model {}: standard deviations must not be negative", m.id));
    for (LinkId l : m.links) {
      if (!links.contains(l)) err(fmt::format("model {}: link {} does not exist", m.id, l));
      ++assigned[l];
    }
  }
  for (LinkId l : links) {
    if (assigned[l] == 0) err(fmt::format("link {} is not assigned to a model", l));
    if (assigned[l] > 1) err(fmt::format("link {} is assigned to {} models", l, assigned[l]));
  }
  if (!errors.empty()) return errors;

  // CFL for cell-based links.
  for (const ModelSpec& m : s.models) {
    if (m.kind != "ctm") continue;
    for (const Link& l : s.network.links) {
      if (std::find(m.links.begin(), m.links.end(), l.id) == m.links.end()) continue;
      try {
        cell_params(l.params, 1, cell_length(l.length_m, m.max_cell_length_m), m.dt_s, l.id);
      } catch (const ConfigError& e) {
        err(fmt::format("model {}: {}", m.id, e.what()));
      }
    }
  }

  Network net;
  try {
    net = Network::build(s.network);
    Routing routing(net, s.vehicle_types, s.routes, s.splits);
  } catch (const std::exception& e) {
    err(e.what());
    return errors;
  }

  std::set<TypeId> types;
  std::map<TypeId, RoutingBehavior> behavior;
  for (const auto& t : s.vehicle_types) {
    types.insert(t.id);
    behavior[t.id] = t.routing;
  }
  std::map<RouteId, const Route*> routes;
  for (const auto& r : s.routes) routes[r.id] = &r;

  std::set<ElementId> demand_ids;
  for (const DemandProfile& d : s.demands) {
    if (!demand_ids.insert(d.id).second) err(fmt::format("demand {}: duplicate id", d.id));
    if (!links.contains(d.link)) err(fmt::format("demand {}: link {} does not exist", d.id, d.link));
    if (!types.contains(d.type)) {
      err(fmt::format("demand {}: vehicle type {} does not exist", d.id, d.type));
      continue;
    }
    if (behavior[d.type] == RoutingBehavior::routed && !d.route)
      err(fmt::format("demand {}: routed vehicle type {} needs a route", d.id, d.type));
    if (d.route) {
      auto it = routes.find(*d.route);
      if (it == routes.end()) err(fmt::format("demand {}: route {} does not exist", d.id, *d.route));
      else if (it->second->links.empty() || it->second->links.front() != d.link)
        err(fmt::format("demand {}: route {} does not start at link {}", d.id, *d.route, d.link));
    }
    const Profile& p = d.intensity_vph;
    if (p.values.empty()) err(fmt::format("demand {}: intensity profile has no values", d.id));
    if (!(p.period_s > 0.0)) err(fmt::format("demand {}: profile period must be positive", d.id));
    for (double v : p.values)
      if (!(v >= 0.0)) err(fmt::format("demand {}: intensities must not be negative", d.id));
  }

  std::set<ElementId> sensor_ids;
  for (const SensorSpec& x : s.sensors) {
    if (!sensor_ids.insert(x.id).second) err(fmt::format("sensor {}: duplicate id", x.id));
    if (!(x.dt_s > 0.0)) err(fmt::format("sensor {}: dt_s must be positive", x.id));
    switch (x.kind) {
      case SensorKind::fixed_local:
        if (!links.contains(x.link)) err(fmt::format("sensor {}: link {} does not exist", x.id, x.link));
        else if (x.position_m < 0.0 || x.position_m > net.link(x.link).length_m)
          err(fmt::format("sensor {}: position {} m outside link {}", x.id, x.position_m, x.link));
        break;
      case SensorKind::fixed_lanegroup: {
        bool found = false;
        for (LinkId l : links)
          for (LaneGroupId g : net.lane_groups_of(l)) found = found || g == x.lane_group;
        if (!found) err(fmt::format("sensor {}: lane group {} does not exist", x.id, x.lane_group));
        break;
      }
      case SensorKind::probe:
        if (!demand_ids.contains(x.source)) err(fmt::format("sensor {}: demand {} does not exist", x.id, x.source));
        break;
    }
  }

  std::set<ElementId> actuator_ids;
  for (const ActuatorSpec& a : s.actuators) {
    if (!actuator_ids.insert(a.id).second) err(fmt::format("actuator {}: duplicate id", a.id));
    if (!(a.dt_s > 0.0)) err(fmt::format("actuator {}: dt_s must be positive", a.id));
    switch (a.kind) {
      case ActuatorKind::rc_block:
        if (!net.has_road_connection(a.road_connection))
          err(fmt::format("actuator {}: road connection {} does not exist", a.id, a.road_connection));
        break;
      case ActuatorKind::vsl:
        if (!links.contains(a.link)) err(fmt::format("actuator {}: link {} does not exist", a.id, a.link));
        break;
      case ActuatorKind::router:
        if (!types.contains(a.type)) err(fmt::format("actuator {}: vehicle type {} does not exist", a.id, a.type));
        if (!routes.contains(a.route)) err(fmt::format("actuator {}: route {} does not exist", a.id, a.route));
        break;
      case ActuatorKind::demand_modifier:
        if (!demand_ids.contains(a.demand)) err(fmt::format("actuator {}: demand {} does not exist", a.id, a.demand));
        break;
      case ActuatorKind::split_modifier:
        if (!links.contains(a.link)) err(fmt::format("actuator {}: link {} does not exist", a.id, a.link));
        if (!types.contains(a.type)) err(fmt::format("actuator {}: vehicle type {} does not exist", a.id, a.type));
        break;
    }
  }

  std::set<ElementId> controller_ids;
  std::map<ElementId, ElementId> owner;
  for (const ControllerSpec& c : s.controllers) {
    if (!controller_ids.insert(c.id).second) err(fmt::format("controller {}: duplicate id", c.id));
    if (!(c.dt_s > 0.0)) err(fmt::format("controller {}: dt_s must be positive", c.id));
    for (ElementId x : c.sensors)
      if (!sensor_ids.contains(x)) err(fmt::format("controller {}: sensor {} does not exist", c.id, x));
    for (ElementId a : c.actuators) {
      if (!actuator_ids.contains(a)) err(fmt::format("controller {}: actuator {} does not exist", c.id, a));
      auto [it, fresh] = owner.emplace(a, c.id);
      if (!fresh)
        err(fmt::format("actuator {} is assigned to controllers {} and {}", a, it->second, c.id));
    }
    if (!ControllerRegistry::instance().has(c.kind)) {
      err(fmt::format("controller {}: unknown kind '{}'", c.id, c.kind));
      continue;
    }
    try {
      ControllerRegistry::instance().make(c);
    } catch (const std::exception& e) {
      err(e.what());
    }
  }
  return errors;
}

}  // namespace hybridsim
