#include <CLI11.hpp>
#include <fmt/format.h>
#include <iostream>
#include <optional>

#include "hybridsim/engine.hpp"
#include "hybridsim/output.hpp"
#include "hybridsim/scenario.hpp"

using namespace hybridsim;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kRuntime = 3 };

int report(const std::vector<std::string>& errors) {
  for (const auto& e : errors) std::cerr << "error: " << e << '\n';
  return kInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid traffic simulation"};
  app.require_subcommand(1);

  std::string path;
  std::optional<double> duration, out_dt;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "output";

  auto* run = app.add_subcommand("run", "Run a scenario and write CSV outputs");
  run->add_option("scenario", path, "Scenario file")->required();
  run->add_option("--duration", duration, "Simulated seconds (overrides the scenario)")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Random seed (overrides the scenario)");
  run->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  run->add_option("--out-dt", out_dt, "Output interval in seconds (overrides the scenario)")
      ->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Check a scenario without running it");
  validate->add_option("scenario", path, "Scenario file")->required();

  CLI11_PARSE(app, argc, argv);

  Scenario scenario;
  try {
    scenario = parse_scenario_file(path);
  } catch (const ScenarioError& e) {
    return report(e.errors());
  }
  if (duration) scenario.run.duration_s = *duration;
  if (seed) scenario.run.seed = *seed;
  if (out_dt) scenario.run.output_dt_s = *out_dt;

  if (auto errors = validate_scenario(scenario); !errors.empty()) {
    for (auto& e : errors) e = path + ": " + e;
    return report(errors);
  }
  if (*validate) {
    std::cout << path << ": ok\n";
    return kOk;
  }

  try {
    Engine engine(scenario);
    OutputWriter writer(engine, out_dir);
    engine.run();
    writer.finish();
    for (const auto& w : engine.warnings()) std::cerr << "warning: " << w << '\n';
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
