#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "latred/driver.hpp"
#include "latred/log.hpp"

namespace {

int report_error(const std::string& type, const std::string& message) {
  nlohmann::json err;
  err["error"]["type"] = type;
  err["error"]["message"] = message;
  std::printf("%s\n", err.dump().c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latred - local/global reduced-order solver for damageable lattices"};
  app.require_subcommand(1);

  // run -----------------------------------------------------------------
  auto* run = app.add_subcommand("run", "run a scenario file");
  std::string scenario_path;
  std::string out_dir = "out";
  std::optional<std::string> mode, snapshot;
  std::optional<int> nc, increments, threads;
  std::optional<double> eps_svd, rho_s, kdam, klocglo, eta_global, eta_reduced, newton_tol, cg_tol;
  run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--mode", mode, "full|pod|localglobal|adaptive");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--snapshot", snapshot, "snapshot matrix file (.lrmat)");
  auto* nc_opt = run->add_option("--nc", nc, "basis truncation order");
  run->add_option("--eps-svd", eps_svd, "basis truncation ratio")->excludes(nc_opt);
  run->add_option("--rho-s", rho_s, "splitting sphere radius");
  run->add_option("--kdam", kdam, "splitting damage cutoff ratio");
  run->add_option("--klocglo", klocglo, "fully resolved dof budget ratio");
  run->add_option("--eta-global", eta_global, "full-residual correction gate");
  run->add_option("--eta-reduced", eta_reduced, "reduced-residual correction gate");
  run->add_option("--increments", increments, "number of load increments");
  run->add_option("--newton-tol", newton_tol, "Newton relative tolerance");
  run->add_option("--cg-tol", cg_tol, "conjugate gradient relative tolerance");
  run->add_option("--threads", threads, "assembly worker threads");

  // compare ---------------------------------------------------------------
  auto* compare = app.add_subcommand("compare", "compare two run directories");
  std::string dir_a, dir_b, report_path = "compare.csv";
  compare->add_option("a", dir_a, "first run directory (reference)")->required();
  compare->add_option("b", dir_b, "second run directory")->required();
  compare->add_option("--out", report_path, "report CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      latred::Scenario sc = latred::parse_scenario_file(scenario_path);
      if (mode) sc.mode = latred::parse_run_mode(*mode);
      if (snapshot) sc.snapshot_path = *snapshot;
      if (nc) {
        sc.n_c = *nc;
        sc.eps_svd.reset();
      }
      if (eps_svd) {
        sc.eps_svd = *eps_svd;
        sc.n_c.reset();
      }
      if (rho_s) sc.split_params.rho_s = *rho_s;
      if (kdam) sc.split_params.k_dam = *kdam;
      if (klocglo) sc.split_params.k_locglo = *klocglo;
      if (eta_global) sc.policy.eta_global = *eta_global;
      if (eta_reduced) sc.policy.eta_reduced = *eta_reduced;
      if (increments) sc.n_increments = *increments;
      if (newton_tol) sc.control.newton_tol = *newton_tol;
      if (cg_tol) sc.cg.tol = *cg_tol;
      if (threads) sc.threads = *threads;
      if (sc.mode != latred::RunMode::Full && sc.snapshot_path.empty())
        return report_error("scenario", "mode '" + latred::to_string(sc.mode) +
                                            "' requires a snapshot (--snapshot or pod.snapshot)");

      const latred::RunOutputs out = latred::run_scenario(sc, out_dir);
      std::printf("run complete: %d increments, peak load %.8g, outputs in %s\n",
                  static_cast<int>(out.history.records.size()), out.peak_lambda(),
                  out.dir.string().c_str());
      return 0;
    }

    const latred::CompareReport rep = latred::compare_runs(dir_a, dir_b);
    latred::write_compare_report(rep, report_path);
    std::printf("%s\n", rep.summary().c_str());
    return 0;
  } catch (const latred::ParseError& e) {
    return report_error("parse", e.what());
  } catch (const latred::ControlFailure& e) {
    return report_error("control_failure", e.what());
  } catch (const latred::NonConvergence& e) {
    return report_error("non_convergence", e.what());
  } catch (const latred::Error& e) {
    return report_error("solver", e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
}
