#include "latred/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace latred {

using nlohmann::json;

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Full: return "full";
    case RunMode::Pod: return "pod";
    case RunMode::LocalGlobal: return "localglobal";
    case RunMode::Adaptive: return "adaptive";
  }
  return "full";
}

RunMode parse_run_mode(const std::string& s) {
  if (s == "full") return RunMode::Full;
  if (s == "pod") return RunMode::Pod;
  if (s == "localglobal") return RunMode::LocalGlobal;
  if (s == "adaptive") return RunMode::Adaptive;
  throw ParseError("unknown mode '" + s + "' (expected full|pod|localglobal|adaptive)");
}

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (allowed.find(it.key()) == allowed.end())
      throw ParseError("scenario: unknown key '" + it.key() + "' in '" + where + "'");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError("scenario: bad value for '" + key + "': " + e.what());
  }
}

Eigen::Vector3d get_vec3(const json& obj, const std::string& key, Eigen::Vector3d fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& arr = obj.at(key);
  if (!arr.is_array() || arr.size() != 3)
    throw ParseError("scenario: '" + key + "' must be an array of 3 numbers");
  return Eigen::Vector3d(arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>());
}

}  // namespace

Scenario parse_scenario_text(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("scenario: top level must be an object");
  check_keys(doc, "scenario",
             {"name", "frame", "control", "mode", "pod", "split", "policy", "cg", "threads"});

  Scenario sc;
  sc.name = get_or<std::string>(doc, "name", "scenario");
  sc.threads = get_or<int>(doc, "threads", 1);
  if (doc.contains("mode")) sc.mode = parse_run_mode(doc.at("mode").get<std::string>());

  if (!doc.contains("frame")) throw ParseError("scenario: missing 'frame' section");
  {
    const json& fr = doc.at("frame");
    check_keys(fr, "frame",
               {"layout", "nx", "ny", "nz", "bracing", "young", "section", "alpha", "beta",
                "loaded_box", "load_dir"});
    const std::string layout = get_or<std::string>(fr, "layout", "grid");
    if (layout == "grid")
      sc.frame.layout = FrameSpec::Layout::Grid;
    else if (layout == "line")
      sc.frame.layout = FrameSpec::Layout::Line;
    else
      throw ParseError("scenario: frame.layout must be 'grid' or 'line'");
    sc.frame.nx = get_or<int>(fr, "nx", 1);
    sc.frame.ny = get_or<int>(fr, "ny", 1);
    sc.frame.nz = get_or<int>(fr, "nz", 1);
    sc.frame.bracing = get_or<bool>(fr, "bracing", true);
    sc.frame.young = get_or<double>(fr, "young", 1.0);
    sc.frame.section = get_or<double>(fr, "section", 1.0);
    sc.frame.material.alpha_dmg = get_or<double>(fr, "alpha", std::sqrt(2.0));
    sc.frame.material.beta_dmg = get_or<double>(fr, "beta", 0.5);
    if (!fr.contains("loaded_box"))
      throw ParseError("scenario: frame.loaded_box is required");
    const auto& box = fr.at("loaded_box");
    if (!box.is_array() || box.size() != 6)
      throw ParseError("scenario: frame.loaded_box must be [xmin,xmax,ymin,ymax,zmin,zmax]");
    sc.frame.loaded_box.min =
        Eigen::Vector3d(box[0].get<double>(), box[2].get<double>(), box[4].get<double>());
    sc.frame.loaded_box.max =
        Eigen::Vector3d(box[1].get<double>(), box[3].get<double>(), box[5].get<double>());
    const Eigen::Vector3d default_dir = sc.frame.layout == FrameSpec::Layout::Line
                                            ? Eigen::Vector3d(1, 0, 0)
                                            : Eigen::Vector3d(0, 0, -1);
    sc.frame.load_dir = get_vec3(fr, "load_dir", default_dir);
    if (sc.frame.load_dir.norm() == 0.0)
      throw ParseError("scenario: frame.load_dir must be nonzero");
  }

  if (!doc.contains("control")) throw ParseError("scenario: missing 'control' section");
  {
    const json& ct = doc.at("control");
    check_keys(ct, "control",
               {"delta_d_max", "n_increments", "newton_tol", "newton_max_iters", "lambda_min",
                "lambda_max", "initial_load_step", "control_rel_tol", "max_trials"});
    sc.control.delta_d_max = get_or<double>(ct, "delta_d_max", 0.05);
    sc.n_increments = get_or<int>(ct, "n_increments", 0);
    sc.control.newton_tol = get_or<double>(ct, "newton_tol", 1e-8);
    sc.control.newton_max_iters = get_or<int>(ct, "newton_max_iters", 40);
    sc.control.lambda_min = get_or<double>(ct, "lambda_min", 0.0);
    sc.control.lambda_max = get_or<double>(ct, "lambda_max", 1e9);
    sc.control.initial_load_step = get_or<double>(ct, "initial_load_step", 0.1);
    sc.control.control_rel_tol = get_or<double>(ct, "control_rel_tol", 1e-6);
    sc.control.max_trials = get_or<int>(ct, "max_trials", 80);
    if (sc.control.delta_d_max <= 0 || sc.control.delta_d_max > 1)
      throw ParseError("scenario: control.delta_d_max must lie in (0,1]");
    if (sc.control.newton_tol <= 0) throw ParseError("scenario: control.newton_tol must be > 0");
  }

  if (doc.contains("pod")) {
    const json& pod = doc.at("pod");
    check_keys(pod, "pod", {"snapshot", "n_c", "eps_svd", "snapshot_total_u"});
    if (pod.contains("snapshot")) {
      std::filesystem::path p = pod.at("snapshot").get<std::string>();
      sc.snapshot_path = p.is_absolute() ? p : base_dir / p;
    }
    if (pod.contains("n_c")) sc.n_c = pod.at("n_c").get<int>();
    if (pod.contains("eps_svd")) sc.eps_svd = pod.at("eps_svd").get<double>();
    sc.snapshot_total_u = get_or<bool>(pod, "snapshot_total_u", false);
    if (sc.n_c && sc.eps_svd)
      throw ParseError("scenario: pod.n_c and pod.eps_svd are mutually exclusive");
  }

  if (doc.contains("split")) {
    const json& sp = doc.at("split");
    check_keys(sp, "split", {"rho_s", "k_dam", "k_locglo", "force", "enrich"});
    sc.split_params.rho_s = get_or<double>(sp, "rho_s", 2.5);
    sc.split_params.k_dam = get_or<double>(sp, "k_dam", 0.5);
    sc.split_params.k_locglo = get_or<double>(sp, "k_locglo", 0.1);
    sc.enrichment = get_or<bool>(sp, "enrich", true);
    const std::string force = get_or<std::string>(sp, "force", "heuristic");
    if (force == "heuristic")
      sc.split_override = SplitOverride::Heuristic;
    else if (force == "none")
      sc.split_override = SplitOverride::ForceEmpty;
    else if (force == "all")
      sc.split_override = SplitOverride::ForceAll;
    else
      throw ParseError("scenario: split.force must be heuristic|none|all");
  }

  if (doc.contains("policy")) {
    const json& po = doc.at("policy");
    check_keys(po, "policy",
               {"eta_global", "eta_reduced", "krylov_tol_correction",
                "max_corrections_per_increment", "cg_max_iters"});
    sc.policy.eta_global = get_or<double>(po, "eta_global", 1e-1);
    sc.policy.eta_reduced = get_or<double>(po, "eta_reduced", 1e-3);
    sc.policy.krylov_tol_correction = get_or<double>(po, "krylov_tol_correction", 1e-1);
    sc.policy.max_corrections_per_increment = get_or<int>(po, "max_corrections_per_increment", 8);
    sc.policy.cg_max_iters = get_or<int>(po, "cg_max_iters", 0);
    if (sc.policy.krylov_tol_correction <= 0 || sc.policy.krylov_tol_correction >= 1)
      throw ParseError("scenario: policy.krylov_tol_correction must lie in (0,1)");
  }

  if (doc.contains("cg")) {
    const json& cg = doc.at("cg");
    check_keys(cg, "cg", {"tol", "max_iters", "reorthogonalize", "shadow_unaugmented"});
    sc.cg.tol = get_or<double>(cg, "tol", 1e-8);
    sc.cg.max_iters = get_or<int>(cg, "max_iters", 0);
    sc.cg.reorthogonalize = get_or<bool>(cg, "reorthogonalize", false);
    sc.shadow_unaugmented = get_or<bool>(cg, "shadow_unaugmented", false);
  }

  const bool needs_snapshot = sc.mode != RunMode::Full;
  if (needs_snapshot && sc.snapshot_path.empty())
    throw ParseError("scenario: mode '" + to_string(sc.mode) + "' requires pod.snapshot");
  if (needs_snapshot && !sc.n_c && !sc.eps_svd)
    throw ParseError("scenario: mode '" + to_string(sc.mode) + "' requires pod.n_c or pod.eps_svd");
  return sc;
}

Scenario parse_scenario_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open scenario: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_scenario_text(ss.str(), path.parent_path());
}

}  // namespace latred
