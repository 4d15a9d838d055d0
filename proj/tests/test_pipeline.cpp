#include "test_helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

using namespace qwdecay;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

WalkConfig small_config(int refine = 8) {
  nlohmann::json j = qwtest::base_config_json(9);
  j["thresholds"] = {{"grid_refinement", refine}};
  return load_config(qwtest::write_temp_json("qwdecay_pipe_cfg.json", j));
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(QWDECAY_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("validate subcommand report") {
  std::ostringstream out;

  SECTION("well-posed config") {
    REQUIRE(run_validate(small_config(), out) == kExitOk);
    std::string text = out.str();
    REQUIRE(text.find("composition: U = S * C (shift applied after the coin)") != std::string::npos);
    REQUIRE(text.find("axis 1: coupling active") != std::string::npos);
    REQUIRE(text.find("axis 2: coupling inactive") != std::string::npos);
    REQUIRE(text.find("all detectability conditions hold") != std::string::npos);
  }

  SECTION("detectability warnings are echoed, not fatal") {
    nlohmann::json j = qwtest::base_config_json(9);
    j["omega"] = j["phi"];
    WalkConfig cfg = load_config(qwtest::write_temp_json("qwdecay_pipe_ctrl.json", j));
    REQUIRE(run_validate(cfg, out) == kExitOk);
    REQUIRE(out.str().find("warning: defect and bulk leg imbalances coincide") != std::string::npos);
  }
}

TEST_CASE("spectrum subcommand output") {
  WalkConfig cfg = small_config(2);
  fs::path dir = fresh_dir("qwdecay_pipe_spectrum");
  std::ostringstream log;
  REQUIRE(run_spectrum(cfg, dir, log) == kExitOk);

  std::string spec = slurp(dir / "spectrum.csv");
  REQUIRE(first_line(spec) == "index,re_lambda,im_lambda,arg_lambda,residual,gap_distance,core_mass");
  REQUIRE(line_count(spec) == 324 + 1);

  std::string arcs = slurp(dir / "arcs.csv");
  REQUIRE(first_line(arcs) == "k_1,k_2,branch,re_mu,im_mu");
  REQUIRE(line_count(arcs) == 18 * 18 * 4 + 1);
}

TEST_CASE("certify subcommand, single point") {
  WalkConfig cfg = small_config();
  fs::path dir = fresh_dir("qwdecay_pipe_certify");
  std::ostringstream log;

  REQUIRE(run_certify(cfg, dir, log) == kExitOk);
  REQUIRE(fs::exists(dir / "spectrum.csv"));
  REQUIRE(fs::exists(dir / "arcs.csv"));
  REQUIRE(fs::exists(dir / "shells_0.csv"));
  REQUIRE(fs::exists(dir / "shells_1.csv"));

  std::string shells = slurp(dir / "shells_0.csv");
  REQUIRE(first_line(shells) == "n,R_lo,R_hi,shell_norm,log_shell_norm");
  REQUIRE(line_count(shells) == 6 + 1);

  nlohmann::json report = nlohmann::json::parse(slurp(dir / "certificates.json"));
  REQUIRE(report["composition"] == "U = S * C");
  REQUIRE(report["d"] == 2);
  REQUIRE(report["L"] == 9);
  REQUIRE(report["total_detections"] == 2);
  REQUIRE(report["total_passing"] == 2);
  REQUIRE(report["coin_report"]["detectability_ok"] == true);
  REQUIRE(report["points"].size() == 1);
  const auto& certs = report["points"][0]["certificates"];
  REQUIRE(certs.size() == 2);
  for (const auto& c : certs) {
    REQUIRE(c["passed"] == true);
    REQUIRE(c["failed_checks"].empty());
    REQUIRE(c["gap"].get<double>() > 0.05);
  }
}

TEST_CASE("certify subcommand, control and scan") {
  std::ostringstream log;

  SECTION("a defect equal to the bulk yields the no-detection exit") {
    nlohmann::json j = qwtest::base_config_json(9);
    j["omega"] = j["phi"];
    j["thresholds"] = {{"grid_refinement", 4}};
    WalkConfig cfg = load_config(qwtest::write_temp_json("qwdecay_pipe_nodef.json", j));
    fs::path dir = fresh_dir("qwdecay_pipe_control");
    REQUIRE(run_certify(cfg, dir, log) == kExitNoDetection);
    nlohmann::json report = nlohmann::json::parse(slurp(dir / "certificates.json"));
    REQUIRE(report["total_detections"] == 0);
    REQUIRE(report["coin_report"]["detectability_ok"] == false);
    REQUIRE_FALSE(report["coin_report"]["warnings"].empty());
  }

  SECTION("scan points land in numbered directories") {
    nlohmann::json j = qwtest::base_config_json(9);
    j["scan"] = {{"q_magnitudes", {0.0, 0.1}}, {"axis", 1}};
    j["thresholds"] = {{"grid_refinement", 4}};
    WalkConfig cfg = load_config(qwtest::write_temp_json("qwdecay_pipe_scan.json", j));
    fs::path dir = fresh_dir("qwdecay_pipe_scanout");
    REQUIRE(run_certify(cfg, dir, log) == kExitOk);
    REQUIRE(fs::exists(dir / "scan_00" / "spectrum.csv"));
    REQUIRE(fs::exists(dir / "scan_01" / "spectrum.csv"));
    REQUIRE(fs::exists(dir / "scan_00" / "shells_0.csv"));

    nlohmann::json report = nlohmann::json::parse(slurp(dir / "certificates.json"));
    REQUIRE(report["points"].size() == 2);
    REQUIRE(report["points"][0]["q_magnitude"] == 0.0);
    REQUIRE(report["points"][1]["q_magnitude"] == 0.1);
    REQUIRE(report["total_detections"] == 4);
    REQUIRE(report["total_passing"] == 4);
    // the decoupled point is compactly supported: the fitted rate is infinite
    // there, which the JSON encoder renders as null
    REQUIRE(report["points"][0]["certificates"][0]["fit"]["rate"].is_null());
    REQUIRE(report["points"][1]["certificates"][0]["fit"]["rate"].get<double>() > 0.2);
  }
}

TEST_CASE("certify subcommand determinism") {
  WalkConfig cfg = small_config(4);
  std::ostringstream log;
  fs::path a = fresh_dir("qwdecay_pipe_det_a");
  fs::path b = fresh_dir("qwdecay_pipe_det_b");
  REQUIRE(run_certify(cfg, a, log) == kExitOk);
  REQUIRE(run_certify(cfg, b, log) == kExitOk);
  for (const char* name : {"spectrum.csv", "arcs.csv", "shells_0.csv", "shells_1.csv",
                           "certificates.json"})
    REQUIRE(slurp(a / name) == slurp(b / name));
}

TEST_CASE("bounds subcommand") {
  std::ostringstream log;

  SECTION("full sweep on the reference walk") {
    WalkConfig cfg = small_config();
    fs::path dir = fresh_dir("qwdecay_pipe_bounds");
    REQUIRE(run_bounds(cfg, dir, log) == kExitOk);

    std::string csv = slurp(dir / "bounds.csv");
    REQUIRE(first_line(csv) == "check,delta,N_or_R,measured,bound,pass");
    // 11 deltas x 8 plateau indices + 10 deltas x 7 radii, plus the header
    REQUIRE(line_count(csv) == 88 + 70 + 1);

    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    std::getline(in, line);
    REQUIRE(line == "exp_commutator,0,1,0,0,1");
    while (std::getline(in, line)) {
      REQUIRE(line.size() >= 2);
      REQUIRE(line.substr(line.size() - 2) == ",1");
    }
  }

  SECTION("non-unitary input fails the pre-check") {
    LatticeBox box = build_box(2, 5);
    WalkOperator u = build_walk(box, qwtest::canonical_shift(0.1), qwtest::canonical_coins());
    u.matrix *= 1.01;
    fs::path dir = fresh_dir("qwdecay_pipe_badbounds");
    REQUIRE(run_bounds_on(u, dir, log) == kExitConfig);
    REQUIRE(log.str().find("unitarity pre-check") != std::string::npos);
    REQUIRE_FALSE(fs::exists(dir / "bounds.csv"));
  }
}

TEST_CASE("command line smoke test") {
  std::string cfg = qwtest::write_temp_json("qwdecay_pipe_cli.json", qwtest::base_config_json(9));
  REQUIRE(run_cli("validate " + cfg) == 0);
  REQUIRE(run_cli("validate /nonexistent.json") == 2);
  REQUIRE(run_cli("frobnicate " + cfg) == 2);
  REQUIRE(run_cli("spectrum " + cfg) == 2);  // missing required -o
}
