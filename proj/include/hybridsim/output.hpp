#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "hybridsim/engine.hpp"

namespace hybridsim {

inline constexpr int kCsvSchemaVersion = 1;

/// Streams CSV outputs for every output time of an engine.
///
/// Files: lanegroups.csv, lanegroup_states.csv, boundaries.csv,
/// trajectories.csv (vehicle-based models only), conservation.csv and a
/// run_info.json written by finish().
class OutputWriter {
 public:
  OutputWriter(Engine& engine, std::filesystem::path dir);
  /// Flushes all files and writes run_info.json.
  void finish();

 private:
  void write(const Engine& e, double t);

  Engine& engine_;
  std::filesystem::path dir_;
  std::ofstream lanegroups_;
  std::ofstream states_;
  std::ofstream boundaries_;
  std::ofstream trajectories_;
  std::ofstream conservation_;
  std::size_t rows_ = 0;
};

}  // namespace hybridsim
