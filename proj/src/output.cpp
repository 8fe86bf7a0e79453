#include "hybridsim/output.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

namespace hybridsim {

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write {}", path.string()));
  out << header << '\n';
  return out;
}

}  // namespace

OutputWriter::OutputWriter(Engine& engine, std::filesystem::path dir) : engine_(engine), dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw ConfigError(fmt::format("cannot create output directory {}: {}", dir_.string(), ec.message()));
  lanegroups_ = open_csv(dir_ / "lanegroups.csv", "time,link,lanegroup,vehicles,speed_kph");
  states_ = open_csv(dir_ / "lanegroup_states.csv", "time,lanegroup,vehicle_type,key,vehicles");
  boundaries_ = open_csv(dir_ / "boundaries.csv", "time,boundary,upstream_link,downstream_link,cumulative_vehicles");
  trajectories_ = open_csv(dir_ / "trajectories.csv", "vehicle_id,time,link,lanegroup,position_m");
  conservation_ = open_csv(dir_ / "conservation.csv", "time,injected,exited,stored,buffered");
  engine_.on_output([this](const Engine& e, double t) { write(e, t); });
}

void OutputWriter::write(const Engine& e, double t) {
  const Network& net = e.network();
  for (LinkId link : net.link_ids()) {
    const Model& m = e.model_of(link);
    for (LaneGroupId g : net.lane_groups_of(link)) {
      fmt::print(lanegroups_, "{},{},{},{},{}\n", t, link, g, m.total_vehicles_in_lanegroup(g),
                 m.lanegroup_speed_kph(g));
      for (const auto& [s, n] : m.vehicles_by_state(g))
        fmt::print(states_, "{},{},{},{},{}\n", t, g, s.type, s.key, n);
    }
  }
  const FlowLedger& L = e.ledger();
  for (const auto& [link, n] : L.source_entry) fmt::print(boundaries_, "{},source,,{},{}\n", t, link, n);
  for (const auto& [r, n] : L.boundary) {
    const RoadConnection& rc = net.road_connection(r);
    fmt::print(boundaries_, "{},rc{},{},{},{}\n", t, r, rc.upstream_link, rc.downstream_link, n);
  }
  for (const auto& [link, n] : L.exits) fmt::print(boundaries_, "{},exit,{},,{}\n", t, link, n);
  for (const auto& m : e.models()) {
    if (m->is_fluid()) continue;
    m->for_each_vehicle([&](const VehicleSnapshot& v) {
      fmt::print(trajectories_, "{},{},{},{},{}\n", v.id, t, v.link, v.lane_group, v.position_m);
    });
  }
  fmt::print(conservation_, "{},{},{},{},{}\n", t, L.injected, L.exited, e.stored_total(), e.buffered_total());
  ++rows_;
}

void OutputWriter::finish() {
  for (auto* f : {&lanegroups_, &states_, &boundaries_, &trajectories_, &conservation_}) f->flush();
  const Scenario& s = engine_.scenario();
  nlohmann::json info = {{"csv_schema_version", kCsvSchemaVersion},
                         {"scenario_schema_version", s.schema_version},
                         {"seed", s.run.seed},
                         {"duration_s", s.run.duration_s},
                         {"output_dt_s", s.run.output_dt_s},
                         {"output_times", rows_},
                         {"warnings", engine_.warnings()}};
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : engine_.models())
    models.push_back({{"id", m->id()}, {"kind", m->kind()}, {"dt_s", m->dt()}, {"links", m->links()}});
  info["models"] = models;
  std::ofstream out(dir_ / "run_info.json", std::ios::binary);
  out << info.dump(2) << '\n';
  if (!out) throw ConfigError(fmt::format("cannot write {}", (dir_ / "run_info.json").string()));
}

}  // namespace hybridsim
