#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hybridsim/control.hpp"
#include "hybridsim/demand.hpp"
#include "hybridsim/network.hpp"

namespace hybridsim {

inline constexpr int kScenarioSchemaVersion = 1;

struct ModelSpec {
  std::string id;
  std::string kind;  // ctm | meso | newell
  double dt_s = 1.0;
  std::vector<LinkId> links;
  double max_cell_length_m = 100.0;  // ctm
  double xi = 1.0;                   // ctm
  double sigma_v = 0.0;              // newell, m per step
  double sigma_w = 0.0;              // newell, m per step
  double sigma_f = 0.0;              // newell, veh per step
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct RunSettings {
  double duration_s = 3600.0;
  double output_dt_s = 10.0;
  std::uint64_t seed = 1;
  friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

struct Scenario {
  int schema_version = kScenarioSchemaVersion;
  RunSettings run;
  std::vector<VehicleType> vehicle_types;
  NetworkSpec network;
  std::vector<ModelSpec> models;
  std::vector<Route> routes;
  std::vector<DemandProfile> demands;
  std::vector<SplitProfile> splits;
  std::vector<SensorSpec> sensors;
  std::vector<ActuatorSpec> actuators;
  std::vector<ControllerSpec> controllers;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Syntax and schema errors carry the source name and, where known, the line.
class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

Scenario parse_scenario_text(const std::string& text, const std::string& source = "<string>");
Scenario parse_scenario_file(const std::filesystem::path& path);
std::string serialize_scenario(const Scenario& s);

/// Cross-reference and structural checks; empty when the scenario can run.
std::vector<std::string> validate_scenario(const Scenario& s);

}  // namespace hybridsim
