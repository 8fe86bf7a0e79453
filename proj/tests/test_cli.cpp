#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;
using hybridsim::testing::scenario_path;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("hybridsim_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Result cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(HYBRIDSIM_CLI) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                          err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("validate accepts the bundled scenarios") {
  const fs::path dir = scratch("validate");
  for (const char* name : {"macro_meso", "macro_micro", "meso_micro", "micro_macro"}) {
    CAPTURE(name);
    const Result r = cli("validate " + scenario_path(name), dir);
    CHECK(r.code == 0);
    CHECK(slurp(dir / "stdout.txt").find(": ok") != std::string::npos);
  }
}

TEST_CASE("invalid input exits nonzero with a diagnostic") {
  const fs::path dir = scratch("invalid");
  const fs::path bad = dir / "bad.json";
  {
    std::ofstream(bad) << "{ \"schema_version\": 1,\n";
  }
  Result r = cli("validate " + bad.string(), dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("bad.json:2: syntax error") != std::string::npos);

  auto j = nlohmann::json::parse(slurp(scenario_path("macro_meso")));
  j["road_connections"][0]["downstream_link"] = 42;
  {
    std::ofstream(bad) << j.dump();
  }
  r = cli("run " + bad.string() + " --out-dir " + (dir / "out").string(), dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("road connection 0: missing downstream link 42") != std::string::npos);

  r = cli("validate " + (dir / "missing.json").string(), dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("cannot open") != std::string::npos);

  r = cli("frobnicate", dir);
  CHECK(r.code != 0);
}

TEST_CASE("run writes the output tables and they balance") {
  const fs::path dir = scratch("run");
  const fs::path out = dir / "out";
  const Result r = cli("run " + scenario_path("meso_micro") + " --duration 600 --seed 3 --out-dir " + out.string(), dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);

  const auto groups = read_csv(out / "lanegroups.csv");
  REQUIRE(!groups.empty());
  CHECK(groups[0] == std::vector<std::string>{"time", "link", "lanegroup", "vehicles", "speed_kph"});
  std::map<std::string, int> per_group;
  for (std::size_t i = 1; i < groups.size(); ++i) ++per_group[groups[i][2]];
  CHECK(per_group.size() == 6);
  for (const auto& [g, n] : per_group) CHECK(n == 61);  // 0, 10, ..., 600

  const auto cons = read_csv(out / "conservation.csv");
  CHECK(cons[0] == std::vector<std::string>{"time", "injected", "exited", "stored", "buffered"});
  CHECK(cons.size() == 62);
  for (std::size_t i = 1; i < cons.size(); ++i) {
    const double injected = std::stod(cons[i][1]), exited = std::stod(cons[i][2]), stored = std::stod(cons[i][3]);
    CHECK(injected == exited + stored);
  }

  const auto traj = read_csv(out / "trajectories.csv");
  CHECK(traj.size() > 1);
  CHECK(traj[0] == std::vector<std::string>{"vehicle_id", "time", "link", "lanegroup", "position_m"});

  const auto info = nlohmann::json::parse(slurp(out / "run_info.json"));
  CHECK(info["seed"] == 3);
  CHECK(info["duration_s"] == 600.0);
  CHECK(info["csv_schema_version"] == 1);
}

TEST_CASE("defaults: full duration at 10 s output") {
  const fs::path dir = scratch("full");
  const fs::path out = dir / "out";
  const Result r = cli("run " + scenario_path("macro_micro") + " --out-dir " + out.string(), dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::map<std::string, int> per_group;
  const auto groups = read_csv(out / "lanegroups.csv");
  for (std::size_t i = 1; i < groups.size(); ++i) ++per_group[groups[i][2]];
  for (const auto& [g, n] : per_group) CHECK(n == 401);
}

TEST_CASE("same seed gives byte-identical tables") {
  const fs::path dir = scratch("determinism");
  for (const char* run : {"a", "b"}) {
    const Result r = cli("run " + scenario_path("macro_meso") + " --duration 1200 --out-dt 5 --out-dir " +
                             (dir / run).string(),
                         dir);
    REQUIRE(r.code == 0);
  }
  for (const char* f : {"lanegroups.csv", "lanegroup_states.csv", "boundaries.csv", "trajectories.csv",
                        "conservation.csv", "run_info.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
}
