#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "latred/adaptivity.hpp"
#include "latred/lattice.hpp"
#include "latred/nonlinear.hpp"

namespace latred {

enum class RunMode { Full, Pod, LocalGlobal, Adaptive };

std::string to_string(RunMode mode);
RunMode parse_run_mode(const std::string& s);

/// One solver run, fully described: geometry, continuation control, solver
/// mode and the mode-specific configuration. Parsed from a strict JSON
/// document (unknown keys are rejected).
struct Scenario {
  std::string name = "scenario";
  FrameSpec frame;
  IncrementControl control;
  int n_increments = 0;
  RunMode mode = RunMode::Full;

  // pod configuration
  std::filesystem::path snapshot_path;  // resolved against the scenario file
  std::optional<int> n_c;
  std::optional<double> eps_svd;
  bool snapshot_total_u = false;

  SplitParams split_params;
  SplitOverride split_override = SplitOverride::Heuristic;
  bool enrichment = true;

  CorrectionPolicy policy;

  CgOptions cg;
  bool shadow_unaugmented = false;
  int threads = 1;
};

Scenario parse_scenario_file(const std::filesystem::path& path);
Scenario parse_scenario_text(const std::string& text, const std::filesystem::path& base_dir);

}  // namespace latred
