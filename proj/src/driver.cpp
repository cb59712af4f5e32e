#include "latred/driver.hpp"

#include <cinttypes>
#include <fstream>

#include <json.hpp>

#include "latred/log.hpp"
#include "latred/matrix_io.hpp"

namespace latred {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t geometry_fingerprint(const LatticeModel& model) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& n : model.nodes()) h = fnv1a(h, n.position.data(), 3 * sizeof(double));
  for (const auto& b : model.bars()) {
    const int ids[2] = {b.k, b.l};
    h = fnv1a(h, ids, sizeof(ids));
    h = fnv1a(h, &b.section, sizeof(double));
    h = fnv1a(h, &b.young, sizeof(double));
  }
  for (const auto& [dof, value] : model.dirichlet()) {
    h = fnv1a(h, &dof, sizeof(dof));
    h = fnv1a(h, &value, sizeof(value));
  }
  for (int node : model.loaded_nodes()) h = fnv1a(h, &node, sizeof(node));
  return h;
}

void write_loaddefl(const std::filesystem::path& path, const SolveHistory& history) {
  CsvWriter w(path);
  w.header({"increment", "lambda", "deflection", "max_damage", "max_delta_d", "newton_iters",
            "control_trials", "cg_iterations", "corrections", "residual_rel"});
  for (const auto& r : history.records) {
    w.field(r.increment);
    w.field(r.lambda);
    w.field(r.deflection);
    w.field(r.max_damage);
    w.field(r.max_delta_d);
    w.field(r.newton_iters);
    w.field(r.control_trials);
    w.field(r.cg_iterations);
    w.field(r.corrections);
    w.field(r.residual_rel);
    w.end_row();
  }
}

void write_metrics(const std::filesystem::path& path,
                   const std::vector<std::pair<int, LgIterationLog>>& logs,
                   const std::vector<CorrectionRecord>& corrections) {
  CsvWriter w(path);
  w.header({"kind", "increment", "newton_iter", "cg_iter", "residual", "iterations",
            "shadow_iterations", "pre_full_rel", "post_full_rel", "krylov_iters"});
  for (const auto& [inc, log] : logs) {
    for (size_t j = 0; j < log.cg.residual_history.size(); ++j) {
      w.field(std::string("cg"));
      w.field(inc);
      w.field(log.newton_iter);
      w.field(static_cast<int>(j));
      w.field(log.cg.residual_history[j]);
      w.field(std::string(""));
      w.field(std::string(""));
      w.field(std::string(""));
      w.field(std::string(""));
      w.field(std::string(""));
      w.end_row();
    }
    w.field(std::string("solve"));
    w.field(inc);
    w.field(log.newton_iter);
    w.field(std::string(""));
    w.field(std::string(""));
    w.field(log.cg.iterations);
    w.field(log.shadow_breakdown ? -2 : log.shadow_iterations);  // -2: plain CG broke down
    w.field(std::string(""));
    w.field(std::string(""));
    w.field(std::string(""));
    w.end_row();
  }
  for (const auto& c : corrections) {
    w.field(std::string("correction"));
    w.field(c.increment);
    w.field(c.newton_iter);
    w.field(std::string(""));
    w.field(std::string(""));
    w.field(std::string(""));
    w.field(std::string(""));
    w.field(c.pre_full_rel);
    w.field(c.post_full_rel);
    w.field(c.krylov_iters);
    w.end_row();
  }
}

void write_splittings(const std::filesystem::path& path, const LatticeModel& model,
                      const std::vector<Splitting>& splittings) {
  CsvWriter w(path);
  w.header({"increment", "free_dof", "node", "component", "x", "y", "z"});
  for (const auto& split : splittings) {
    for (int dof : split.fully_resolved) {
      const int full = model.full_dof(dof);
      const int node = full / 3;
      w.field(split.epoch);
      w.field(dof);
      w.field(node);
      w.field(full % 3);
      const Eigen::Vector3d& p = model.nodes()[node].position;
      w.field(p.x());
      w.field(p.y());
      w.field(p.z());
      w.end_row();
    }
  }
}

void write_meta(const std::filesystem::path& path, const Scenario& sc, const LatticeModel& model,
                int increments_done) {
  nlohmann::json meta;
  meta["name"] = sc.name;
  meta["mode"] = to_string(sc.mode);
  meta["n_nodes"] = model.num_nodes();
  meta["n_bars"] = model.num_bars();
  meta["n_free_dofs"] = model.num_free_dofs();
  meta["n_increments"] = increments_done;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, geometry_fingerprint(model));
  meta["geometry"] = buf;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << meta.dump(2) << "\n";
}

}  // namespace

double RunOutputs::peak_lambda() const {
  double peak = 0.0;
  for (const auto& r : history.records) peak = std::max(peak, r.lambda);
  return peak;
}

int RunOutputs::peak_increment() const {
  int best = 0;
  double peak = -1.0;
  for (const auto& r : history.records) {
    if (r.lambda > peak) {
      peak = r.lambda;
      best = r.increment;
    }
  }
  return best;
}

long RunOutputs::total_cg_iterations() const {
  long total = 0;
  for (const auto& r : history.records) total += r.cg_iterations;
  return total;
}

RunOutputs run_scenario(const Scenario& sc, const std::filesystem::path& outdir) {
  set_assembly_threads(sc.threads);
  const LatticeModel model = LatticeModel::build_frame(sc.frame);
  std::filesystem::create_directories(outdir);

  RunOutputs out;
  out.dir = outdir;
  out.mode = sc.mode;

  if (sc.mode == RunMode::Full) {
    out.history = run_reference(model, sc.control, sc.n_increments, sc.snapshot_total_u);
    Eigen::MatrixXd snaps = out.history.snapshots.columns;
    if (snaps.size() == 0) snaps.resize(model.num_free_dofs(), 0);
    write_lrmat(outdir / "snapshot.lrmat", snaps);
    write_matrix_csv(outdir / "snapshot.csv", snaps);
  } else {
    SnapshotMatrix snapshots;
    snapshots.columns = read_lrmat(sc.snapshot_path);
    for (int i = 0; i < snapshots.cols(); ++i) snapshots.labels.push_back("col" + std::to_string(i));
    if (snapshots.rows() != model.num_free_dofs())
      throw ModelError("snapshot rows (" + std::to_string(snapshots.rows()) +
                       ") do not match the model free dofs (" +
                       std::to_string(model.num_free_dofs()) + ")");
    const Truncation trunc =
        sc.n_c ? Truncation::by_order(*sc.n_c) : Truncation::by_ratio(*sc.eps_svd);
    const ReducedBasis basis0 = compute_pod_basis(snapshots, trunc);
    log_info("pod basis: n_c=%d of n_s=%d, nu_svd=%.3e", basis0.n_c(), snapshots.cols(),
             svd_truncation_error(basis0, snapshots));

    ReducedRunConfig config;
    config.control = sc.control;
    config.n_increments = sc.n_increments;
    config.split_params = sc.split_params;
    config.lg.tol = sc.control.newton_tol;
    config.lg.max_iters = sc.control.newton_max_iters;
    config.lg.cg = sc.cg;
    config.lg.shadow_unaugmented = sc.shadow_unaugmented;
    if (sc.mode == RunMode::Pod) {
      config.split_override = SplitOverride::ForceEmpty;
      config.enrichment = false;
      config.corrections = false;
    } else {
      config.split_override = sc.split_override;
      config.enrichment = sc.enrichment;
      config.corrections = sc.mode == RunMode::Adaptive;
      config.policy = sc.policy;
    }

    ReducedRunResult result = adaptive_solve(model, config, basis0);
    out.history = std::move(result.history);
    out.corrections = std::move(result.corrections);
    out.iteration_logs = std::move(result.iteration_logs);
    out.splittings = std::move(result.splittings);
    out.basis = std::move(result.final_basis);

    write_lrmat(outdir / "basis.lrmat", out.basis.C);
    write_matrix_csv(outdir / "basis.csv", out.basis.C);
    write_splittings(outdir / "splitting.csv", model, out.splittings);
  }

  write_loaddefl(outdir / "loaddefl.csv", out.history);
  write_metrics(outdir / "metrics.csv", out.iteration_logs, out.corrections);
  write_meta(outdir / "meta.json", sc, model, static_cast<int>(out.history.records.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

namespace {

struct LoadedRun {
  std::string geometry;
  std::vector<double> lambda, deflection;
  long cg_total = 0;
  long corrections = 0;
};

LoadedRun load_run(const std::filesystem::path& dir) {
  LoadedRun run;
  std::ifstream meta_file(dir / "meta.json");
  if (!meta_file) throw IoError("cannot open " + (dir / "meta.json").string());
  nlohmann::json meta = nlohmann::json::parse(meta_file);
  run.geometry = meta.at("geometry").get<std::string>();

  const CsvTable table = read_csv(dir / "loaddefl.csv");
  const int c_lambda = table.column("lambda");
  const int c_defl = table.column("deflection");
  const int c_cg = table.column("cg_iterations");
  const int c_corr = table.column("corrections");
  if (c_lambda < 0 || c_defl < 0) throw ParseError("loaddefl.csv: missing columns");
  for (const auto& row : table.rows) {
    run.lambda.push_back(std::stod(row[c_lambda]));
    run.deflection.push_back(std::stod(row[c_defl]));
    if (c_cg >= 0) run.cg_total += std::stol(row[c_cg]);
    if (c_corr >= 0) run.corrections += std::stol(row[c_corr]);
  }
  return run;
}

}  // namespace

std::string CompareReport::summary() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "peak load: %.8g vs %.8g (error %+.4f%%)\n"
                "curve L2 distance (relative): %.6e\n"
                "cg iterations: %ld vs %ld\n"
                "corrections: %ld vs %ld\n"
                "increments: %d vs %d",
                peak_a, peak_b, peak_error_pct, curve_l2_rel, cg_total_a, cg_total_b,
                corrections_a, corrections_b, increments_a, increments_b);
  return buf;
}

CompareReport compare_runs(const std::filesystem::path& dir_a,
                           const std::filesystem::path& dir_b) {
  const LoadedRun a = load_run(dir_a);
  const LoadedRun b = load_run(dir_b);
  if (a.geometry != b.geometry)
    throw ModelError("compare: the two runs were produced on different geometries");

  CompareReport rep;
  rep.increments_a = static_cast<int>(a.lambda.size());
  rep.increments_b = static_cast<int>(b.lambda.size());
  rep.cg_total_a = a.cg_total;
  rep.cg_total_b = b.cg_total;
  rep.corrections_a = a.corrections;
  rep.corrections_b = b.corrections;
  for (double v : a.lambda) rep.peak_a = std::max(rep.peak_a, v);
  for (double v : b.lambda) rep.peak_b = std::max(rep.peak_b, v);
  rep.peak_error_pct = rep.peak_a != 0.0 ? 100.0 * (rep.peak_b - rep.peak_a) / rep.peak_a : 0.0;

  const size_t n = std::min(a.lambda.size(), b.lambda.size());
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < n; ++i) {
    num += (a.lambda[i] - b.lambda[i]) * (a.lambda[i] - b.lambda[i]) +
           (a.deflection[i] - b.deflection[i]) * (a.deflection[i] - b.deflection[i]);
    den += a.lambda[i] * a.lambda[i] + a.deflection[i] * a.deflection[i];
  }
  rep.curve_l2_rel = den > 0.0 ? std::sqrt(num / den) : 0.0;
  return rep;
}

void write_compare_report(const CompareReport& rep, const std::filesystem::path& out_csv) {
  CsvWriter w(out_csv);
  w.header({"peak_a", "peak_b", "peak_error_pct", "curve_l2_rel", "cg_total_a", "cg_total_b",
            "corrections_a", "corrections_b", "increments_a", "increments_b"});
  w.field(rep.peak_a);
  w.field(rep.peak_b);
  w.field(rep.peak_error_pct);
  w.field(rep.curve_l2_rel);
  w.field(rep.cg_total_a);
  w.field(rep.cg_total_b);
  w.field(rep.corrections_a);
  w.field(rep.corrections_b);
  w.field(rep.increments_a);
  w.field(rep.increments_b);
  w.end_row();
}

}  // namespace latred
