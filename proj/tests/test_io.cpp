#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "latred/matrix_io.hpp"
#include "latred/scenario.hpp"
#include "test_helpers.hpp"

using namespace latred;
using namespace latred::testing;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "latred_io_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

const char* kScenario = R"json({
  "name": "unit",
  "frame": {
    "layout": "grid", "nx": 2, "ny": 2, "nz": 2,
    "loaded_box": [0, 2, 0, 2, 2, 2]
  },
  "control": { "delta_d_max": 0.05, "n_increments": 3 },
  "mode": "full"
})json";

}  // namespace

TEST_CASE("matrix files round trip bit exactly") {
  std::mt19937 rng(3);
  Eigen::MatrixXd m(17, 5);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      m(i, j) = std::uniform_real_distribution<>(-1e3, 1e3)(rng);
  m(3, 2) = 0.1 + 0.2;  // not exactly representable
  const auto path = temp_dir() / "roundtrip.lrmat";
  write_lrmat(path, m);
  const Eigen::MatrixXd back = read_lrmat(path);
  REQUIRE(back.rows() == m.rows());
  REQUIRE(back.cols() == m.cols());
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("rewriting produces identical bytes") {
    const std::string first = slurp(path);
    write_lrmat(path, m);
    CHECK(slurp(path) == first);
  }
  SUBCASE("empty matrix") {
    const auto p2 = temp_dir() / "empty.lrmat";
    write_lrmat(p2, Eigen::MatrixXd(4, 0));
    const Eigen::MatrixXd e = read_lrmat(p2);
    CHECK(e.rows() == 4);
    CHECK(e.cols() == 0);
  }
}

TEST_CASE("matrix file error paths") {
  const auto dir = temp_dir();
  SUBCASE("missing file") { CHECK_THROWS_AS(read_lrmat(dir / "nope.lrmat"), IoError); }
  SUBCASE("bad magic") {
    const auto p = dir / "bad.lrmat";
    std::ofstream(p) << "NOTAMATRIX";
    CHECK_THROWS_AS(read_lrmat(p), ParseError);
  }
  SUBCASE("truncated payload") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Ones(8, 3);
    const auto p = dir / "trunc.lrmat";
    write_lrmat(p, m);
    std::filesystem::resize_file(p, 40);
    CHECK_THROWS_AS(read_lrmat(p), ParseError);
  }
}

TEST_CASE("csv writer emits RFC-4180 rows and read_csv parses them back") {
  const auto p = temp_dir() / "table.csv";
  {
    CsvWriter w(p);
    w.header({"a", "b", "c"});
    w.field(1);
    w.field(0.5);
    w.field(std::string("x"));
    w.end_row();
    w.field(2);
    w.field(-1.25);
    w.field(std::string(""));
    w.end_row();
  }
  const std::string raw = slurp(p);
  CHECK(raw == "a,b,c\r\n1,0.5,x\r\n2,-1.25,\r\n");

  const CsvTable t = read_csv(p);
  REQUIRE(t.header.size() == 3);
  CHECK(t.column("b") == 1);
  CHECK(t.column("missing") == -1);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][1] == "-1.25");
}

TEST_CASE("scenario parsing") {
  SUBCASE("minimal full-mode document") {
    const Scenario sc = parse_scenario_text(kScenario, ".");
    CHECK(sc.name == "unit");
    CHECK(sc.mode == RunMode::Full);
    CHECK(sc.frame.nx == 2);
    CHECK(sc.n_increments == 3);
    CHECK(sc.control.delta_d_max == 0.05);
    // Spec defaults mirror the published constants.
    CHECK(sc.split_params.k_dam == 0.5);
    CHECK(sc.split_params.k_locglo == 0.1);
    CHECK(sc.policy.eta_global == 0.1);
    CHECK(sc.policy.eta_reduced == 1e-3);
    CHECK(sc.policy.krylov_tol_correction == 0.1);
    CHECK(sc.frame.material.alpha_dmg == doctest::Approx(std::sqrt(2.0)));
    CHECK(sc.frame.material.beta_dmg == 0.5);
  }
  SUBCASE("unknown keys are rejected with their location") {
    const std::string bad = R"({"frame": {"nx": 1, "loaded_box": [0,1,0,1,1,1], "bogus": 2},
                               "control": {"delta_d_max": 0.1}})";
    CHECK_THROWS_WITH_AS(parse_scenario_text(bad, "."),
                         "scenario: unknown key 'bogus' in 'frame'", ParseError);
  }
  SUBCASE("reduced modes demand a snapshot and a truncation") {
    const std::string pod = R"({"frame": {"loaded_box": [0,1,0,1,1,1]},
                                "control": {"delta_d_max": 0.1}, "mode": "pod"})";
    CHECK_THROWS_AS(parse_scenario_text(pod, "."), ParseError);
  }
  SUBCASE("n_c and eps_svd are mutually exclusive") {
    const std::string both = R"({"frame": {"loaded_box": [0,1,0,1,1,1]},
                                 "control": {"delta_d_max": 0.1}, "mode": "pod",
                                 "pod": {"snapshot": "s.lrmat", "n_c": 2, "eps_svd": 1e-4}})";
    CHECK_THROWS_AS(parse_scenario_text(both, "."), ParseError);
  }
  SUBCASE("relative snapshot paths resolve against the scenario directory") {
    const std::string pod = R"({"frame": {"loaded_box": [0,1,0,1,1,1]},
                                "control": {"delta_d_max": 0.1}, "mode": "localglobal",
                                "pod": {"snapshot": "snaps/s.lrmat", "n_c": 2}})";
    const Scenario sc = parse_scenario_text(pod, "/data/runs");
    CHECK(sc.snapshot_path == std::filesystem::path("/data/runs/snaps/s.lrmat"));
  }
  SUBCASE("invalid JSON is a parse error") {
    CHECK_THROWS_AS(parse_scenario_text("{not json", "."), ParseError);
  }
  SUBCASE("mode strings") {
    CHECK(parse_run_mode("adaptive") == RunMode::Adaptive);
    CHECK_THROWS_AS(parse_run_mode("bogus"), ParseError);
    CHECK(to_string(RunMode::LocalGlobal) == "localglobal");
  }
}
