#pragma once

#include <filesystem>
#include <string>

#include "latred/adaptivity.hpp"
#include "latred/scenario.hpp"

namespace latred {

/// Everything a run produced, kept in memory next to the files written in
/// the output directory (loaddefl.csv, metrics.csv, meta.json, matrices,
/// splitting dumps).
struct RunOutputs {
  std::filesystem::path dir;
  RunMode mode = RunMode::Full;
  SolveHistory history;
  std::vector<CorrectionRecord> corrections;
  std::vector<std::pair<int, LgIterationLog>> iteration_logs;
  std::vector<Splitting> splittings;
  ReducedBasis basis;  // final basis of reduced modes

  double peak_lambda() const;
  int peak_increment() const;  // 1-based, 0 when empty
  long total_cg_iterations() const;
};

/// Builds the lattice, runs the requested mode and writes the outputs.
/// Deterministic: identical scenarios produce byte-identical files.
RunOutputs run_scenario(const Scenario& scenario, const std::filesystem::path& outdir);

struct CompareReport {
  double peak_a = 0.0, peak_b = 0.0;
  double peak_error_pct = 0.0;  // signed, run b against run a
  double curve_l2_rel = 0.0;    // relative L2 distance of (deflection, load) pairs
  long cg_total_a = 0, cg_total_b = 0;
  long corrections_a = 0, corrections_b = 0;
  int increments_a = 0, increments_b = 0;
  std::string summary() const;
};

/// Compares two run directories produced by run_scenario on the same
/// geometry (checked through the stored fingerprint).
CompareReport compare_runs(const std::filesystem::path& dir_a,
                           const std::filesystem::path& dir_b);

void write_compare_report(const CompareReport& report, const std::filesystem::path& out_csv);

}  // namespace latred
