#pragma once

#include "qwdecay/walk.hpp"

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace qwdecay {

/// Any condition that makes a run impossible to set up: parse failures,
/// structural violations, out-of-range knobs. Maps to exit code 2.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Thresholds {
  double gap_min = 0.05;
  double mass_min = 0.9;
  double core_radius = -1.0;  // negative: L/4 at use site
  double delta_fraction = 0.9;
  int grid_refinement = 8;
  std::uint64_t seed = 20240915ull;
};

struct ScanSpec {
  std::vector<double> q_magnitudes;
  int axis = 1;  // 1-based
};

struct WalkConfig {
  int d = 0;
  int L = 0;
  RVector p;
  CVector q;
  CVector phi;
  CVector omega;
  std::vector<int> p0;
  std::optional<ScanSpec> scan;
  Thresholds thresholds;
  // detectability conditions evaluated at load time; failures here do not
  // abort the run, they just predict an empty detection
  CoinValidationReport coin_report;
};

namespace detail {

inline Complex parse_complex(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw config_error("config: " + where + " must be a [re, im] pair");
  return Complex(j[0].get<double>(), j[1].get<double>());
}

inline CVector parse_complex_array(const nlohmann::json& j, Eigen::Index expect,
                                   const std::string& where) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != expect)
    throw config_error("config: " + where + " must be an array of " + std::to_string(expect) +
                       " [re, im] pairs");
  CVector v(expect);
  for (Eigen::Index i = 0; i < expect; ++i)
    v[i] = parse_complex(j[static_cast<std::size_t>(i)], where + "[" + std::to_string(i) + "]");
  return v;
}

}  // namespace detail

/// Parameters of one scan point: magnitude m on the scanned axis, with the
/// coupling there rescaled so p^2 + |q|^2 stays 1; other axes keep the
/// reference corner values (p0_j, 0).
inline ShiftParams scan_point_params(const WalkConfig& cfg, double magnitude) {
  if (!cfg.scan) throw std::invalid_argument("scan_point_params: config has no scan block");
  int axis = cfg.scan->axis;  // 1-based, validated at load
  RVector p(cfg.d);
  CVector q(cfg.d);
  for (int j = 0; j < cfg.d; ++j) {
    p[j] = static_cast<double>(cfg.p0[j]);
    q[j] = Complex(0.0, 0.0);
  }
  p[axis - 1] = cfg.p0[axis - 1] * std::sqrt(1.0 - magnitude * magnitude);
  q[axis - 1] = Complex(magnitude, 0.0);
  return ShiftParams{p, q};
}

inline WalkConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config: parse failure in " + path + ": " + e.what());
  }

  WalkConfig cfg;
  for (const char* key : {"d", "L", "p", "q", "phi", "omega", "p0"})
    if (!j.contains(key)) throw config_error(std::string("config: missing required field '") + key + "'");

  if (!j["d"].is_number_integer() || j["d"].get<int>() < 1)
    throw config_error("config: d must be a positive integer");
  cfg.d = j["d"].get<int>();
  if (!j["L"].is_number_integer()) throw config_error("config: L must be an integer");
  cfg.L = j["L"].get<int>();
  if (cfg.L < 3 || cfg.L % 2 == 0)
    throw config_error("config: L must be odd and >= 3 (got " + std::to_string(cfg.L) + ")");

  if (!j["p"].is_array() || static_cast<int>(j["p"].size()) != cfg.d)
    throw config_error("config: p must be a real array of length d");
  cfg.p.resize(cfg.d);
  for (int i = 0; i < cfg.d; ++i) {
    if (!j["p"][i].is_number()) throw config_error("config: p entries must be numbers");
    cfg.p[i] = j["p"][i].get<double>();
  }
  cfg.q = detail::parse_complex_array(j["q"], cfg.d, "q");
  try {
    validate_shift_params(cfg.p, cfg.q);
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("config: ") + e.what());
  }

  cfg.phi = detail::parse_complex_array(j["phi"], 2 * cfg.d, "phi");
  cfg.omega = detail::parse_complex_array(j["omega"], 2 * cfg.d, "omega");
  if (std::abs(cfg.phi.norm() - 1.0) > 1e-12)
    throw config_error("config: phi normalization failure (|phi| = " + std::to_string(cfg.phi.norm()) + ")");
  if (std::abs(cfg.omega.norm() - 1.0) > 1e-12)
    throw config_error("config: omega normalization failure (|omega| = " +
                       std::to_string(cfg.omega.norm()) + ")");

  if (!j["p0"].is_array() || static_cast<int>(j["p0"].size()) != cfg.d)
    throw config_error("config: p0 must be an array of d entries, each +1 or -1");
  cfg.p0.resize(cfg.d);
  for (int i = 0; i < cfg.d; ++i) {
    if (!j["p0"][i].is_number_integer()) throw config_error("config: p0 entries must be integers");
    cfg.p0[i] = j["p0"][i].get<int>();
    if (cfg.p0[i] != 1 && cfg.p0[i] != -1) throw config_error("config: p0 entries must be +1 or -1");
  }

  if (j.contains("scan")) {
    const auto& js = j["scan"];
    if (!js.is_object() || !js.contains("q_magnitudes") || !js.contains("axis"))
      throw config_error("config: scan must contain q_magnitudes and axis");
    ScanSpec scan;
    if (!js["axis"].is_number_integer()) throw config_error("config: scan.axis must be an integer");
    scan.axis = js["axis"].get<int>();
    if (scan.axis < 1 || scan.axis > cfg.d) throw config_error("config: scan.axis out of range");
    if (!js["q_magnitudes"].is_array() || js["q_magnitudes"].empty())
      throw config_error("config: scan.q_magnitudes must be a nonempty array");
    for (const auto& m : js["q_magnitudes"]) {
      if (!m.is_number()) throw config_error("config: scan.q_magnitudes entries must be numbers");
      double v = m.get<double>();
      if (!(v >= 0.0 && v < 1.0)) throw config_error("config: scan magnitudes must lie in [0, 1)");
      scan.q_magnitudes.push_back(v);
    }
    cfg.scan = scan;
  }

  if (j.contains("thresholds")) {
    const auto& jt = j["thresholds"];
    if (!jt.is_object()) throw config_error("config: thresholds must be a map");
    if (jt.contains("gap_min")) cfg.thresholds.gap_min = jt["gap_min"].get<double>();
    if (jt.contains("mass_min")) cfg.thresholds.mass_min = jt["mass_min"].get<double>();
    if (jt.contains("core_radius")) cfg.thresholds.core_radius = jt["core_radius"].get<double>();
    if (jt.contains("delta_fraction")) cfg.thresholds.delta_fraction = jt["delta_fraction"].get<double>();
    if (jt.contains("grid_refinement")) cfg.thresholds.grid_refinement = jt["grid_refinement"].get<int>();
    if (jt.contains("seed")) cfg.thresholds.seed = jt["seed"].get<std::uint64_t>();
  }
  if (!(cfg.thresholds.gap_min >= 0.0)) throw config_error("config: gap_min must be >= 0");
  if (!(cfg.thresholds.mass_min >= 0.0 && cfg.thresholds.mass_min <= 1.0))
    throw config_error("config: mass_min must lie in [0, 1]");
  if (!(cfg.thresholds.delta_fraction > 0.0 && cfg.thresholds.delta_fraction < 1.0))
    throw config_error(
        "config: delta_fraction must lie in (0, 1); at 1 or above the certified rate "
        "violates 2 sinh(delta b) < gap");
  if (cfg.thresholds.grid_refinement < 1) throw config_error("config: grid_refinement must be >= 1");

  // Detectability conditions. These gate whether a defect eigenvalue is
  // guaranteed to exist, not whether the model is well-posed, so failures
  // are echoed and the run proceeds (an honest scan then finds nothing).
  if (cfg.d == 1) throw config_error("config: one-dimensional models are rejected");
  CoinSpec spec{cfg.phi, cfg.omega};
  cfg.coin_report = validate_coin_spec(spec, cfg.p0);
  return cfg;
}

/// CLI flag overrides, applied after load with the same validation rules.
struct ConfigOverrides {
  std::optional<int> L;
  std::optional<std::uint64_t> seed;
  std::optional<int> refine;
  std::optional<double> delta_fraction;
};

inline void apply_overrides(WalkConfig& cfg, const ConfigOverrides& ov) {
  if (ov.L) {
    if (*ov.L < 3 || *ov.L % 2 == 0)
      throw config_error("config: L override must be odd and >= 3 (got " + std::to_string(*ov.L) + ")");
    cfg.L = *ov.L;
  }
  if (ov.seed) cfg.thresholds.seed = *ov.seed;
  if (ov.refine) {
    if (*ov.refine < 1) throw config_error("config: refine override must be >= 1");
    cfg.thresholds.grid_refinement = *ov.refine;
  }
  if (ov.delta_fraction) {
    if (!(*ov.delta_fraction > 0.0 && *ov.delta_fraction < 1.0))
      throw config_error(
          "config: delta-fraction override must lie in (0, 1); at 1 or above the certified "
          "rate violates 2 sinh(delta b) < gap");
    cfg.thresholds.delta_fraction = *ov.delta_fraction;
  }
}

}  // namespace qwdecay
