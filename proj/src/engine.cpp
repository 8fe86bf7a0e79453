#include "hybridsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "hybridsim/ctm.hpp"
#include "hybridsim/meso.hpp"
#include "hybridsim/newell.hpp"
#include "hybridsim/node_model.hpp"

namespace hybridsim {

namespace {

constexpr int kPhaseSensor = 0;
constexpr int kPhaseController = 1;
constexpr int kPhaseActuator = 2;
constexpr int kPhaseDemand = 3;
constexpr int kPhaseAdvance = 4;
constexpr int kPhaseOutput = 5;

constexpr std::uint64_t kProbeStreamSalt = 0x9E3779B97F4A7C15ULL;

void add_amounts(std::map<std::pair<LinkId, StateIndex>, double>& into, LinkId link, const FluxPacket& p) {
  if (p.is_fluid()) {
    for (const auto& [s, a] : p.fluid_content()) into[{link, s}] += a;
  } else {
    for (const auto& [s, vs] : p.vehicle_content()) into[{link, s}] += static_cast<double>(vs.size());
  }
}

}  // namespace

std::unique_ptr<Model> make_model(const ModelSpec& spec) {
  if (spec.kind == "ctm") {
    CtmModel::Options o;
    o.max_cell_length_m = spec.max_cell_length_m;
    o.xi = spec.xi;
    return std::make_unique<CtmModel>(spec.id, spec.links, spec.dt_s, o);
  }
  if (spec.kind == "meso") return std::make_unique<MesoModel>(spec.id, spec.links, spec.dt_s);
  if (spec.kind == "newell") {
    NewellModel::Options o;
    o.sigma_v = spec.sigma_v;
    o.sigma_w = spec.sigma_w;
    o.sigma_f = spec.sigma_f;
    return std::make_unique<NewellModel>(spec.id, spec.links, spec.dt_s, o);
  }
  throw ConfigError(fmt::format("model {}: unknown kind '{}'", spec.id, spec.kind));
}

class Engine::Context final : public SimContext {
 public:
  explicit Context(Engine& e) : e_(e) {}
  double now() const override { return e_.now_; }
  Rng& rng() override { return e_.rng_; }
  VehicleFactory& factory() override { return e_.factory_; }
  const Network& network() const override { return e_.net_; }
  const Routing& routing() const override { return e_.routing_; }
  double distance_to_last_vehicle(RcId r) const override { return e_.distance_to_last_vehicle(r); }

 private:
  Engine& e_;
};

bool Engine::Event::operator>(const Event& o) const {
  if (time != o.time) return time > o.time;
  if (phase != o.phase) return phase > o.phase;
  return order > o.order;
}

Engine::Engine(const Scenario& scenario) : scenario_(scenario) {
  if (auto errors = validate_scenario(scenario_); !errors.empty()) {
    std::string msg = "invalid scenario:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  net_ = Network::build(scenario_.network);
  routing_ = Routing(net_, scenario_.vehicle_types, scenario_.routes, scenario_.splits);
  duration_ = scenario_.run.duration_s;
  rng_.seed(scenario_.run.seed);
  probe_rng_.seed(scenario_.run.seed ^ kProbeStreamSalt);
  ctx_ = std::make_unique<Context>(*this);

  auto specs = scenario_.models;
  std::sort(specs.begin(), specs.end(), [](const ModelSpec& a, const ModelSpec& b) { return a.id < b.id; });
  for (const ModelSpec& s : specs) {
    models_.push_back(make_model(s));
    models_.back()->initialize(net_, routing_);
    for (LinkId l : s.links) model_index_[l] = models_.size() - 1;
  }

  auto demands = scenario_.demands;
  std::sort(demands.begin(), demands.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const DemandProfile& d : demands) {
    source_index_[d.id] = sources_.size();
    sources_.emplace_back(d);
  }

  // Junctions: road connections sharing an upstream or a downstream link.
  const auto& rcs = net_.spec().road_connections;
  std::vector<std::size_t> parent(rcs.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
    return parent[i] == i ? i : parent[i] = find(parent[i]);
  };
  for (std::size_t i = 0; i < rcs.size(); ++i)
    for (std::size_t j = i + 1; j < rcs.size(); ++j)
      if (rcs[i].upstream_link == rcs[j].upstream_link || rcs[i].downstream_link == rcs[j].downstream_link)
        parent[find(i)] = find(j);
  std::map<std::size_t, std::vector<RcId>> comps;
  for (std::size_t i = 0; i < rcs.size(); ++i) comps[find(i)].push_back(rcs[i].id);
  std::vector<std::vector<RcId>> ordered;
  for (auto& [root, ids] : comps) {
    std::sort(ids.begin(), ids.end());
    ordered.push_back(ids);
  }
  std::sort(ordered.begin(), ordered.end());
  for (auto& ids : ordered) {
    for (RcId r : ids) junction_of_[r] = junctions_.size();
    junctions_.push_back({ids});
  }

  auto sensors = scenario_.sensors;
  std::sort(sensors.begin(), sensors.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const SensorSpec& s : sensors) {
    if (s.kind == SensorKind::fixed_local) model_of(s.link).register_detector(s.link, s.position_m);
    sensors_.push_back(SensorState{.spec = s});
  }
  auto actuators = scenario_.actuators;
  std::sort(actuators.begin(), actuators.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const ActuatorSpec& a : actuators) {
    actuator_index_[a.id] = actuators_.size();
    actuators_.push_back(ActuatorState{.spec = a});
  }
  auto controllers = scenario_.controllers;
  std::sort(controllers.begin(), controllers.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const ControllerSpec& c : controllers) controllers_.push_back({c, ControllerRegistry::instance().make(c)});

  for (std::size_t i = 0; i < sensors_.size(); ++i) schedule(kPhaseSensor, i, i, sensors_[i].spec.dt_s, 0);
  for (std::size_t i = 0; i < controllers_.size(); ++i)
    schedule(kPhaseController, i, i, controllers_[i].spec.dt_s, 0);
  for (std::size_t i = 0; i < actuators_.size(); ++i) schedule(kPhaseActuator, i, i, actuators_[i].spec.dt_s, 0);
  for (std::size_t i = 0; i < models_.size(); ++i) schedule(kPhaseDemand, i, i, models_[i]->dt(), 0);
  if (scenario_.run.output_dt_s > 0.0) schedule(kPhaseOutput, 0, 0, scenario_.run.output_dt_s, 0);
}

Engine::~Engine() = default;

void Engine::schedule(int phase, std::size_t order, std::size_t element, double dt, std::uint64_t k) {
  double t = static_cast<double>(k) * dt;
  if (phase == kPhaseOutput) {
    if (t > duration_ + 1e-9) return;
    // The last row is always the end state, even off the output grid.
    if (t > duration_ - 1e-9) t = duration_;
  } else if (phase != kPhaseAdvance && t >= duration_ - 1e-9) {
    return;
  }
  queue_.push_back({t, phase, order, element, k});
  std::push_heap(queue_.begin(), queue_.end(), std::greater<>{});
}

bool Engine::finished() const { return queue_.empty(); }

void Engine::run() {
  while (step_time()) {
  }
}

bool Engine::step_time() {
  if (queue_.empty()) return false;
  const double t = queue_.front().time;
  now_ = t;
  advanced_at_now_ = false;
  bool hooks_done = false;
  auto run_hooks = [&] {
    if (advanced_at_now_ && !hooks_done) {
      hooks_done = true;
      for (auto& h : step_hooks_) h(*this, t);
    }
  };
  while (!queue_.empty() && queue_.front().time == t) {
    std::pop_heap(queue_.begin(), queue_.end(), std::greater<>{});
    const Event e = queue_.back();
    queue_.pop_back();
    if (e.phase == kPhaseOutput) run_hooks();
    fire(e);
  }
  run_hooks();
  return true;
}

void Engine::fire(const Event& e) {
  std::string element;
  try {
    switch (e.phase) {
      case kPhaseSensor: {
        SensorState& s = sensors_[e.element];
        element = fmt::format("sensor {}", s.spec.id);
        read_sensor(s);
        schedule(e.phase, e.order, e.element, s.spec.dt_s, e.k + 1);
        break;
      }
      case kPhaseController: {
        ControllerState& c = controllers_[e.element];
        element = fmt::format("controller {}", c.spec.id);
        run_controller(c);
        schedule(e.phase, e.order, e.element, c.spec.dt_s, e.k + 1);
        break;
      }
      case kPhaseActuator: {
        ActuatorState& a = actuators_[e.element];
        element = fmt::format("actuator {}", a.spec.id);
        apply_actuator(a);
        schedule(e.phase, e.order, e.element, a.spec.dt_s, e.k + 1);
        break;
      }
      case kPhaseDemand: {
        element = fmt::format("model {}", models_[e.element]->id());
        model_demand_phase(e.element);
        queue_.push_back({e.time, kPhaseAdvance, e.order, e.element, e.k});
        std::push_heap(queue_.begin(), queue_.end(), std::greater<>{});
        break;
      }
      case kPhaseAdvance: {
        element = fmt::format("model {}", models_[e.element]->id());
        model_advance_phase(e.element);
        schedule(kPhaseDemand, e.order, e.element, models_[e.element]->dt(), e.k + 1);
        break;
      }
      case kPhaseOutput: {
        element = "output";
        for (auto& h : output_hooks_) h(*this, now_);
        schedule(e.phase, e.order, e.element, scenario_.run.output_dt_s, e.k + 1);
        break;
      }
      default:
        break;
    }
  } catch (const SimulationError&) {
    throw;
  } catch (const std::exception& ex) {
    throw SimulationError(fmt::format("t = {} s, {}: {}", now_, element, ex.what()));
  }
}

Model& Engine::model_of(LinkId link) const {
  auto it = model_index_.find(link);
  if (it == model_index_.end()) throw ConfigError(fmt::format("link {} has no model", link));
  return *models_[it->second];
}

Model& Engine::receiver_of(RcId r) const { return model_of(net_.road_connection(r).downstream_link); }

const Source& Engine::source(ElementId demand) const { return sources_.at(source_index_.at(demand)); }

double Engine::distance_to_last_vehicle(RcId r) const {
  if (r == kExitConnection) return kInfinity;
  const LinkId dl = net_.road_connection(r).downstream_link;
  return model_of(dl).distance_to_last_vehicle(dl, r);
}

void Engine::inject_sources(std::size_t m) {
  Model& M = *models_[m];
  for (Source& src : sources_) {
    const LinkId link = src.profile().link;
    if (!M.manages(link)) continue;
    FluxPacket offered = src.step(now_, M.dt(), M.is_fluid(), routing_, factory_, rng_);
    offered.road_connection = kSourceEntry;
    if (offered.empty()) continue;
    double cap = M.max_packet_size(offered, net_, link, kSourceEntry);
    if (offered.is_fluid()) {
      // Entry is also bounded by the capacity of the lanes it feeds.
      const Link& l = net_.link(link);
      double lanes = 0.0;
      for (LaneGroupId h : net_.downstream_lane_groups(link, kSourceEntry)) lanes += net_.lane_group(h).num_lanes;
      cap = std::min(cap, l.params.capacity_vphpl * lanes * M.dt() / 3600.0);
    }
    const double alpha = compute_alpha(M.packet_size(offered, kSourceEntry), cap);
    PacketSplit split = split_packet(offered, alpha);
    src.retain(split.remainder);
    if (split.sent.empty()) continue;
    FluxPacket sent = assign_next_link(split.sent, link, now_, routing_, rng_);

    for (SensorState& s : sensors_) {
      if (s.spec.kind != SensorKind::probe || s.probe_assigned || s.spec.source != src.profile().id) continue;
      if (now_ < s.spec.depart_after_s - 1e-9) continue;
      s.probe_assigned = true;
      if (sent.is_fluid()) {
        virtual_.push_back({s.spec.id, sent.fluid_content().begin()->first, link, 0.0, M.speed_limit(link)});
      } else {
        Vehicle* first = nullptr;
        for (auto& [st, vs] : sent.vehicle_content())
          for (Vehicle& v : vs)
            if (!first || v.id < first->id) first = &v;
        first->probe = true;
        probe_vehicles_[first->id] = s.spec.id;
        s.probe_vehicle = first->id;
      }
    }

    const double total = sent.total();
    ledger_.injected += total;
    ledger_.source_entry[link] += total;
    add_amounts(ledger_.inflow, link, sent);
    M.send_packets({std::move(sent)}, link, kSourceEntry, *ctx_);
  }
}

void Engine::track_probes(const FluxPacket& p, LinkId link, bool receiver_fluid) {
  if (p.is_fluid() || !receiver_fluid) return;
  for (const auto& [s, vs] : p.vehicle_content()) {
    for (const Vehicle& v : vs) {
      if (!v.probe) continue;
      auto it = probe_vehicles_.find(v.id);
      if (it == probe_vehicles_.end()) continue;
      virtual_.push_back({it->second, v.state, link, 0.0, model_of(link).speed_limit(link)});
      probe_vehicles_.erase(it);
    }
  }
}

void Engine::deliver(Model& sender, const FluxPacket& request, double scale) {
  PacketSplit split = split_packet(request, scale);
  FluxPacket& sent = split.sent;
  sent.origin = request.origin;
  sent.road_connection = request.road_connection;
  if (sent.empty()) return;
  sender.on_released(sent);
  const RcId r = request.road_connection;
  const LinkId ul = net_.lane_group(request.origin).link;
  add_amounts(ledger_.outflow, ul, sent);

  if (r == kExitConnection) {
    const double total = sent.total();
    ledger_.exited += total;
    ledger_.exits[ul] += total;
    if (!sent.is_fluid())
      for (const auto& [s, vs] : sent.vehicle_content())
        for (const Vehicle& v : vs) probe_vehicles_.erase(v.id);
    return;
  }

  const LinkId dl = net_.road_connection(r).downstream_link;
  ledger_.boundary[r] += sent.total();
  FluxPacket routed = assign_next_link(sent, dl, now_, routing_, rng_);
  Model& recv = model_of(dl);
  track_probes(routed, dl, recv.is_fluid());
  add_amounts(ledger_.inflow, dl, routed);
  if (routed.is_fluid() && !recv.is_fluid()) ledger_.fluid_fed.insert(dl);
  recv.send_packets({std::move(routed)}, dl, r, *ctx_);
}

void Engine::model_demand_phase(std::size_t m) {
  Model& M = *models_[m];
  step_log_.emplace_back(now_, M.id());
  inject_sources(m);
  std::vector<FluxPacket> requests = M.compute_demands(*ctx_);

  std::map<std::size_t, std::vector<const FluxPacket*>> by_junction;
  std::vector<const FluxPacket*> exits;
  for (const FluxPacket& p : requests) {
    if (p.empty()) continue;
    if (p.road_connection == kExitConnection) exits.push_back(&p);
    else by_junction[junction_of_.at(p.road_connection)].push_back(&p);
  }

  for (auto& [j, reqs] : by_junction) {
    const std::vector<RcId>& R = junctions_[j].rcs;
    std::vector<LaneGroupId> G, H;
    for (const FluxPacket* p : reqs) G.push_back(p->origin);
    for (RcId r : R) {
      const LinkId dl = net_.road_connection(r).downstream_link;
      for (LaneGroupId h : net_.downstream_lane_groups(dl, r)) H.push_back(h);
    }
    for (auto* v : {&G, &H}) {
      std::sort(v->begin(), v->end());
      v->erase(std::unique(v->begin(), v->end()), v->end());
    }
    auto index_of = [](const std::vector<LaneGroupId>& v, LaneGroupId x) {
      return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
    };
    NodeProblem prob;
    prob.demand.assign(G.size(), std::vector<double>(R.size(), 0.0));
    prob.access.assign(R.size(), std::vector<double>(H.size(), 0.0));
    prob.supply.assign(H.size(), 0.0);
    prob.closed.assign(R.size(), false);
    for (std::size_t ri = 0; ri < R.size(); ++ri) {
      const LinkId dl = net_.road_connection(R[ri]).downstream_link;
      for (LaneGroupId h : net_.downstream_lane_groups(dl, R[ri]))
        prob.access[ri][index_of(H, h)] = net_.access_fraction(R[ri], h);
      prob.closed[ri] = closed_.contains(R[ri]);
    }
    for (std::size_t hi = 0; hi < H.size(); ++hi) {
      const LinkId hl = net_.lane_group(H[hi]).link;
      prob.supply[hi] = model_of(hl).lane_group_supply(H[hi], !M.is_fluid());
    }
    std::vector<std::pair<std::size_t, std::size_t>> where;
    for (const FluxPacket* p : reqs) {
      const std::size_t gi = index_of(G, p->origin);
      const std::size_t ri = static_cast<std::size_t>(std::find(R.begin(), R.end(), p->road_connection) - R.begin());
      prob.demand[gi][ri] += receiver_of(p->road_connection).packet_size(*p, p->road_connection);
      where.emplace_back(gi, ri);
    }
    const NodeSolution sol = solve(prob);
    for (std::size_t i = 0; i < reqs.size(); ++i)
      deliver(M, *reqs[i], sol.scale(where[i].first, where[i].second, prob));
  }
  for (const FluxPacket* p : exits) deliver(M, *p, 1.0);
}

void Engine::advance_virtual(std::size_t m) {
  Model& M = *models_[m];
  std::vector<VirtualVehicle> kept;
  for (VirtualVehicle& v : virtual_) {
    if (!M.manages(v.link)) {
      kept.push_back(v);
      continue;
    }
    v.speed_kph = M.local_speed_kph(v.link, v.position_m);
    v.position_m += v.speed_kph / 3.6 * M.dt();
    bool alive = true;
    while (v.position_m >= net_.link(v.link).length_m) {
      const LinkId next = routing_.next_link(v.state, v.link);
      if (next == kExitLink) {
        alive = false;
        break;
      }
      v.position_m -= net_.link(v.link).length_m;
      v.link = next;
      if (routing_.type(v.state.type).routing == RoutingBehavior::routed) {
        v.state.key = routing_.route_on_entry(v.state.key, v.state.type, next);
      } else {
        const auto ratios = routing_.split_ratios(next, v.state.type, now_);
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(probe_rng_);
        LinkId pick = ratios.back().first;
        for (const auto& [to, r] : ratios) {
          if (u < r) {
            pick = to;
            break;
          }
          u -= r;
        }
        v.state.key = pick;
      }
    }
    if (alive) kept.push_back(v);
  }
  virtual_ = std::move(kept);
}

void Engine::model_advance_phase(std::size_t m) {
  models_[m]->advance_state(*ctx_);
  advance_virtual(m);
  advanced_at_now_ = true;
}

void Engine::read_sensor(SensorState& s) {
  Measurement out;
  out.time_s = now_;
  switch (s.spec.kind) {
    case SensorKind::fixed_lanegroup: {
      const Model& M = model_of(net_.lane_group(s.spec.lane_group).link);
      out.active = true;
      out.count = M.total_vehicles_in_lanegroup(s.spec.lane_group);
      out.speed_kph = M.lanegroup_speed_kph(s.spec.lane_group);
      break;
    }
    case SensorKind::fixed_local: {
      const Model& M = model_of(s.spec.link);
      const double c = M.cumulative_crossings(s.spec.link, s.spec.position_m);
      const double interval = now_ - s.last_time;
      out.active = true;
      out.flow_vph = interval > 0.0 ? (c - s.last_crossings) / interval * 3600.0 : 0.0;
      out.density_vpkm = M.local_density_vpkm(s.spec.link, s.spec.position_m);
      out.speed_kph = detector_speed_kph(out.flow_vph, out.density_vpkm, M.speed_limit(s.spec.link));
      out.link = s.spec.link;
      out.position_m = s.spec.position_m;
      s.last_crossings = c;
      s.last_time = now_;
      break;
    }
    case SensorKind::probe: {
      if (s.probe_vehicle && probe_vehicles_.contains(*s.probe_vehicle)) {
        for (const auto& M : models_) {
          if (M->is_fluid()) continue;
          if (auto snap = M->find_vehicle(*s.probe_vehicle)) {
            out.active = true;
            out.link = snap->link;
            out.position_m = snap->position_m;
            out.speed_kph = snap->speed_kph;
            break;
          }
        }
      }
      if (!out.active) {
        for (const VirtualVehicle& v : virtual_) {
          if (v.sensor != s.spec.id) continue;
          out.active = true;
          out.virtual_vehicle = true;
          out.link = v.link;
          out.position_m = v.position_m;
          out.speed_kph = v.speed_kph;
          break;
        }
      }
      break;
    }
  }
  measurements_[s.spec.id] = out;
}

void Engine::run_controller(ControllerState& c) {
  std::map<ElementId, Measurement> readings;
  for (ElementId id : c.spec.sensors)
    if (auto it = measurements_.find(id); it != measurements_.end()) readings.emplace(id, it->second);
  std::map<ElementId, Command> commands;
  c.impl->update(now_, readings, commands);
  for (auto& [aid, cmd] : commands) {
    if (std::find(c.spec.actuators.begin(), c.spec.actuators.end(), aid) == c.spec.actuators.end())
      throw ProtocolError(fmt::format("controller {} commanded actuator {} it does not own", c.spec.id, aid));
    actuators_[actuator_index_.at(aid)].command = cmd;
  }
}

void Engine::apply_actuator(ActuatorState& a) {
  if (!a.command || a.applied == a.command) return;
  const Command& cmd = *a.command;
  const ActuatorSpec& spec = a.spec;
  switch (spec.kind) {
    case ActuatorKind::rc_block:
      if (cmd.closed) {
        if (*cmd.closed) closed_.insert(spec.road_connection);
        else closed_.erase(spec.road_connection);
      }
      break;
    case ActuatorKind::vsl:
      if (cmd.speed_kph) {
        const double structural = net_.link(spec.link).params.speed_limit_kph;
        double v = *cmd.speed_kph;
        if (v > structural) {
          warnings_.push_back(fmt::format("t = {} s, actuator {}: speed {} km/h clamped to {} km/h", now_, spec.id,
                                          v, structural));
          v = structural;
        }
        model_of(spec.link).set_speed_limit(spec.link, v);
      }
      break;
    case ActuatorKind::router:
      if (cmd.route_to) routing_.redirect(spec.type, spec.route, *cmd.route_to, cmd.en_route);
      break;
    case ActuatorKind::demand_modifier:
      if (cmd.intensity_vph) {
        Profile p;
        p.start_s = now_;
        p.period_s = 1.0;
        p.values = {*cmd.intensity_vph};
        sources_.at(source_index_.at(spec.demand)).override_intensity(now_, p);
      }
      break;
    case ActuatorKind::split_modifier:
      if (cmd.splits) {
        try {
          routing_.override_split(spec.link, spec.type, now_, *cmd.splits);
        } catch (const ConfigError& e) {
          warnings_.push_back(fmt::format("t = {} s, actuator {}: split command rejected: {}", now_, spec.id, e.what()));
        }
      }
      break;
  }
  a.applied = a.command;
}

double Engine::stored(LinkId link, const StateIndex& s) const {
  const Model& M = model_of(link);
  double t = 0.0;
  for (LaneGroupId g : net_.lane_groups_of(link)) {
    const auto by = M.vehicles_by_state(g);
    if (auto it = by.find(s); it != by.end()) t += it->second;
  }
  return t;
}

double Engine::stored_total() const {
  double t = 0.0;
  for (LinkId l : net_.link_ids())
    for (LaneGroupId g : net_.lane_groups_of(l)) t += model_of(l).total_vehicles_in_lanegroup(g);
  return t;
}

double Engine::buffered_total() const {
  double t = 0.0;
  for (const Source& s : sources_) t += s.buffered();
  return t;
}

ConservationResult Engine::check_conservation() const {
  std::map<std::pair<LinkId, StateIndex>, double> balance;
  for (const auto& [k, v] : ledger_.inflow) balance[k] += v;
  for (const auto& [k, v] : ledger_.outflow) balance[k] -= v;
  for (LinkId l : net_.link_ids()) {
    const Model& M = model_of(l);
    for (LaneGroupId g : net_.lane_groups_of(l))
      for (const auto& [s, n] : M.vehicles_by_state(g)) balance[{l, s}] -= n;
  }
  ConservationResult r;
  double worst = -1.0;
  for (const auto& [k, v] : balance) {
    const double err = std::abs(v);
    const bool exact = !model_of(k.first).is_fluid() && !ledger_.fluid_fed.contains(k.first);
    if (exact) r.max_vehicle_error = std::max(r.max_vehicle_error, err);
    else r.max_fluid_error = std::max(r.max_fluid_error, err);
    if (err > worst) {
      worst = err;
      r.worst = fmt::format("{}:{}", k.first, to_string(k.second));
    }
  }
  return r;
}

}  // namespace hybridsim
