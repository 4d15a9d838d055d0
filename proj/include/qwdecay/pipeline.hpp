#pragma once

#include "qwdecay/certify.hpp"
#include "qwdecay/config.hpp"
#include "qwdecay/spectral.hpp"
#include "qwdecay/walk.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace qwdecay {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNoDetection = 3;
inline constexpr int kExitFailed = 4;

namespace detail {

// CSV cells are printed through one fixed format so identical runs emit
// byte-identical files regardless of stream locale or state.
inline std::string csv_num(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw qw_error("cannot open output file " + p.string());
  return out;
}

}  // namespace detail

inline void write_spectrum_csv(const std::filesystem::path& path, const SpectrumResult& spec,
                               const EssentialArcs& arcs, const LatticeBox& box, double core_radius) {
  auto out = detail::open_out(path);
  out << "index,re_lambda,im_lambda,arg_lambda,residual,gap_distance,core_mass\n";
  for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
    Complex l = spec.eigenvalues[i];
    out << i << ',' << detail::csv_num(l.real()) << ',' << detail::csv_num(l.imag()) << ','
        << detail::csv_num(std::arg(l)) << ',' << detail::csv_num(spec.residuals[i]) << ','
        << detail::csv_num(gap_distance(l, arcs)) << ','
        << detail::csv_num(core_mass(box, spec.eigenvectors.col(i), core_radius)) << '\n';
  }
}

inline void write_arcs_csv(const std::filesystem::path& path, const EssentialArcs& arcs) {
  auto out = detail::open_out(path);
  for (int j = 1; j <= arcs.d; ++j) out << "k_" << j << ',';
  out << "branch,re_mu,im_mu\n";
  for (Eigen::Index t = 0; t < arcs.tuple_count(); ++t) {
    for (int br = 0; br < arcs.branches(); ++br) {
      for (int j = 0; j < arcs.d; ++j) out << detail::csv_num(arcs.grid(t, j)) << ',';
      Complex mu = arcs.value(t, br);
      out << br << ',' << detail::csv_num(mu.real()) << ',' << detail::csv_num(mu.imag()) << '\n';
    }
  }
}

inline void write_shells_csv(const std::filesystem::path& path, const ShellSequence& shells) {
  auto out = detail::open_out(path);
  out << "n,R_lo,R_hi,shell_norm,log_shell_norm\n";
  for (int n = 1; n <= shells.shell_count(); ++n) {
    double s = shells.norms[n - 1];
    out << n << ',' << detail::csv_num((n - 1) * shells.b) << ',' << detail::csv_num(n * shells.b)
        << ',' << detail::csv_num(s) << ',' << detail::csv_num(std::log(s)) << '\n';
  }
}

struct BoundsRow {
  std::string check;
  double delta = 0.0;
  double n_or_r = 0.0;
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
};

inline void write_bounds_csv(const std::filesystem::path& path, const std::vector<BoundsRow>& rows) {
  auto out = detail::open_out(path);
  out << "check,delta,N_or_R,measured,bound,pass\n";
  for (const auto& r : rows)
    out << r.check << ',' << detail::csv_num(r.delta) << ',' << detail::csv_num(r.n_or_r) << ','
        << detail::csv_num(r.measured) << ',' << detail::csv_num(r.bound) << ',' << (r.pass ? 1 : 0)
        << '\n';
}

inline nlohmann::ordered_json certificate_to_json(const DecayCertificate& c) {
  nlohmann::ordered_json j;
  j["lambda"] = {c.lambda.real(), c.lambda.imag()};
  j["residual"] = c.residual;
  j["gap"] = c.gap;
  j["b_declared"] = c.b_declared;
  j["b_measured"] = c.b_measured;
  j["delta_sup"] = c.delta_sup;
  j["delta_used"] = c.delta_used;
  j["epsilon"] = c.epsilon;
  j["fit"] = {{"rate", c.fit.rate},
              {"r_squared", c.fit.r_squared},
              {"shells_used", c.fit.shells_used},
              {"required_rate", c.required_rate}};
  j["summability"] = {{"total", c.summability.total},
                      {"tail_ratio", c.summability.tail_ratio},
                      {"outer_shell", c.summability.outer_shell}};
  j["pointwise"] = {{"constant", c.pointwise_constant}, {"violations", c.pointwise_violations}};
  nlohmann::ordered_json scan = nlohmann::ordered_json::array();
  for (const auto& g : c.gap_scan.checks)
    scan.push_back({{"R", g.R},
                    {"min_ratio", g.min_ratio},
                    {"required", g.required},
                    {"failures", g.failures},
                    {"pass", g.pass}});
  j["gap_scan"] = {{"found", c.gap_scan.found}, {"r_star", c.gap_scan.r_star}, {"checks", scan}};
  nlohmann::ordered_json cut = nlohmann::ordered_json::array();
  for (const auto& k : c.cutoff_checks)
    cut.push_back({{"R", k.R},
                   {"delta", k.delta},
                   {"measured", k.measured},
                   {"bound", k.bound},
                   {"support_ok", k.support_ok},
                   {"pass", k.pass}});
  j["cutoff_checks"] = cut;
  nlohmann::ordered_json ex = nlohmann::ordered_json::array();
  for (const auto& k : c.exp_checks)
    ex.push_back(
        {{"N", k.N}, {"delta", k.delta}, {"measured", k.measured}, {"bound", k.bound}, {"pass", k.pass}});
  j["exp_checks"] = ex;
  j["series"] = {{"R", c.series.R},         {"bound", c.series.bound},
                 {"values", c.series.values}, {"monotone_ok", c.series.monotone_ok},
                 {"bounded_ok", c.series.bounded_ok}, {"pass", c.series.pass}};
  j["failed_checks"] = c.failed_checks;
  j["passed"] = c.passed;
  return j;
}

inline nlohmann::ordered_json coin_report_to_json(const CoinValidationReport& r) {
  nlohmann::ordered_json j;
  j["symmetric_pairing"] = r.symmetric_pairing;
  j["raising_axes"] = r.raising_axes;
  j["imbalance_bulk"] = r.imbalance_bulk;
  j["imbalance_defect"] = r.imbalance_defect;
  j["detectability_ok"] = r.ok;
  j["warnings"] = r.failures;
  return j;
}

/// Structural summary printed by the validate subcommand.
inline int run_validate(const WalkConfig& cfg, std::ostream& out) {
  LatticeBox box = build_box(cfg.d, cfg.L);
  out << "box: d=" << cfg.d << " L=" << cfg.L << " sites=" << box.site_count()
      << " dim=" << box.dim() << "\n";
  out << "composition: U = S * C (shift applied after the coin)\n";
  ShiftParams sp = validate_shift_params(cfg.p, cfg.q);
  out << "shift: unit constraint holds on all axes\n";
  for (int l = 1; l <= cfg.d; ++l)
    out << "  axis " << l << ": coupling " << (axis_coupling_active(sp, l) ? "active" : "inactive")
        << "\n";
  const CoinValidationReport& r = cfg.coin_report;
  out << "coin detectability report:\n";
  for (int jx = 0; jx < cfg.d; ++jx)
    out << "  symmetric pairing axis " << jx + 1 << ": " << r.symmetric_pairing[jx] << "\n";
  out << "  raising axes:";
  for (int l : r.raising_axes) out << ' ' << l;
  out << "\n  leg imbalance bulk " << r.imbalance_bulk << ", defect " << r.imbalance_defect << "\n";
  if (r.ok) {
    out << "all detectability conditions hold\n";
  } else {
    for (const auto& f : r.failures) out << "warning: " << f << " (detection may come up empty)\n";
  }
  return kExitOk;
}

inline int run_spectrum(const WalkConfig& cfg, const std::filesystem::path& outdir,
                        std::ostream& log = std::cout) {
  std::filesystem::create_directories(outdir);
  LatticeBox box = build_box(cfg.d, cfg.L);
  ShiftParams sp = validate_shift_params(cfg.p, cfg.q);
  CoinSpec coin{cfg.phi, cfg.omega};
  WalkOperator u = build_walk(box, sp, coin);
  SpectrumResult spec = eigendecompose(u);
  EssentialArcs arcs = essential_arcs(sp, cfg.phi, cfg.L, cfg.thresholds.grid_refinement);
  double radius = cfg.thresholds.core_radius >= 0.0 ? cfg.thresholds.core_radius : cfg.L / 4.0;
  write_spectrum_csv(outdir / "spectrum.csv", spec, arcs, box, radius);
  write_arcs_csv(outdir / "arcs.csv", arcs);
  log << "spectrum: " << spec.eigenvalues.size() << " eigenvalues written to " << outdir.string()
      << "\n";
  return kExitOk;
}

/// One scan point, evaluated in isolation; safe to run points concurrently.
struct PointResult {
  ShiftParams params;
  double magnitude = -1.0;  // negative when the config's own (p, q) was used
  int detections = 0;
  int passing = 0;
  nlohmann::ordered_json report;
};

namespace detail {

inline PointResult run_certify_point(const WalkConfig& cfg, const ShiftParams& sp, double magnitude,
                                     const std::filesystem::path& dir, std::ostream& log) {
  std::filesystem::create_directories(dir);
  PointResult pr;
  pr.params = sp;
  pr.magnitude = magnitude;

  LatticeBox box = build_box(cfg.d, cfg.L);
  CoinSpec coin{cfg.phi, cfg.omega};
  WalkOperator u = build_walk(box, sp, coin);
  SpectrumResult spec = eigendecompose(u);
  EssentialArcs arcs = essential_arcs(sp, cfg.phi, cfg.L, cfg.thresholds.grid_refinement);

  DetectionCriteria crit;
  crit.gap_min = cfg.thresholds.gap_min;
  crit.mass_min = cfg.thresholds.mass_min;
  crit.core_radius = cfg.thresholds.core_radius;
  std::vector<Detection> dets = detect_discrete(spec, arcs, box, crit);

  double radius = crit.core_radius >= 0.0 ? crit.core_radius : cfg.L / 4.0;
  write_spectrum_csv(dir / "spectrum.csv", spec, arcs, box, radius);
  write_arcs_csv(dir / "arcs.csv", arcs);

  CertifyOptions copts;
  copts.delta_fraction = cfg.thresholds.delta_fraction;
  copts.seed = cfg.thresholds.seed;

  pr.report["p"] = std::vector<double>(sp.p.data(), sp.p.data() + sp.p.size());
  nlohmann::ordered_json qj = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < sp.q.size(); ++i) qj.push_back({sp.q[i].real(), sp.q[i].imag()});
  pr.report["q"] = qj;
  if (magnitude >= 0.0) pr.report["q_magnitude"] = magnitude;

  nlohmann::ordered_json certs = nlohmann::ordered_json::array();
  int k = 0;
  for (const auto& det : dets) {
    DecayCertificate cert = certify(u, det, arcs, copts);
    ShellSequence shells = shell_norms(box, det.psi / det.psi.norm(), copts.b);
    write_shells_csv(dir / ("shells_" + std::to_string(k) + ".csv"), shells);
    nlohmann::ordered_json cj = certificate_to_json(cert);
    cj["eigenvalue_index"] = det.index;
    cj["core_mass"] = det.core_mass;
    certs.push_back(cj);
    if (cert.passed) ++pr.passing;
    ++k;
  }
  pr.detections = static_cast<int>(dets.size());
  pr.report["detections"] = pr.detections;
  pr.report["certificates"] = certs;
  log << "point" << (magnitude >= 0.0 ? " q=" + std::to_string(magnitude) : "") << ": "
      << pr.detections << " detection(s), " << pr.passing << " passing certificate(s)\n";
  return pr;
}

}  // namespace detail

inline int run_certify(const WalkConfig& cfg, const std::filesystem::path& outdir,
                       std::ostream& log = std::cout) {
  std::filesystem::create_directories(outdir);

  nlohmann::ordered_json report;
  report["composition"] = "U = S * C";
  report["d"] = cfg.d;
  report["L"] = cfg.L;
  report["grid_refinement"] = cfg.thresholds.grid_refinement;
  report["delta_fraction"] = cfg.thresholds.delta_fraction;
  report["seed"] = cfg.thresholds.seed;
  report["coin_report"] = coin_report_to_json(cfg.coin_report);

  std::vector<PointResult> points;
  if (cfg.scan) {
    for (std::size_t i = 0; i < cfg.scan->q_magnitudes.size(); ++i) {
      double m = cfg.scan->q_magnitudes[i];
      char name[32];
      std::snprintf(name, sizeof name, "scan_%02zu", i);
      points.push_back(
          detail::run_certify_point(cfg, scan_point_params(cfg, m), m, outdir / name, log));
    }
  } else {
    ShiftParams sp = validate_shift_params(cfg.p, cfg.q);
    points.push_back(detail::run_certify_point(cfg, sp, -1.0, outdir, log));
  }

  int total_detections = 0, total_passing = 0;
  nlohmann::ordered_json jp = nlohmann::ordered_json::array();
  for (const auto& p : points) {
    total_detections += p.detections;
    total_passing += p.passing;
    jp.push_back(p.report);
  }
  report["points"] = jp;
  report["total_detections"] = total_detections;
  report["total_passing"] = total_passing;
  {
    auto out = detail::open_out(outdir / "certificates.json");
    out << report.dump(2) << '\n';
  }
  if (total_detections == 0) return kExitNoDetection;
  return total_passing > 0 ? kExitOk : kExitFailed;
}

/// Commutator bound sweep on an already-built operator; the entry point
/// for callers that need to exercise the unitarity pre-check directly.
inline int run_bounds_on(const WalkOperator& u, const std::filesystem::path& outdir,
                         std::ostream& log = std::cout, const NormOptions& nopts = {}) {
  std::filesystem::create_directories(outdir);
  Eigen::Index n = u.matrix.rows();
  CMatrix gram;
  detail::gemm('C', 'N', u.matrix, u.matrix, gram);
  double udev = (gram - CMatrix::Identity(n, n)).cwiseAbs().maxCoeff();
  if (udev > 1e-10) {
    log << "bounds: operator failed the unitarity pre-check (max |U*U - I| = " << udev << ")\n";
    return kExitConfig;
  }

  std::vector<BoundsRow> rows;
  bool all_pass = true;
  for (int di = 0; di <= 10; ++di) {
    double delta = 0.05 * di;
    for (int nn = 1; nn <= 8; ++nn) {
      ExpCommutatorCheck c = check_exp_commutator(u, delta, nn, nopts);
      rows.push_back({"exp_commutator", delta, static_cast<double>(nn), c.measured, c.bound, c.pass});
      all_pass = all_pass && c.pass;
    }
    if (delta == 0.0) continue;  // the cutoff sweep starts at 0.05
    for (int r = 2; r <= 8; ++r) {
      CutoffCommutatorCheck c = check_cutoff_commutator(u, delta, static_cast<double>(r), nopts);
      rows.push_back(
          {"cutoff_commutator", delta, static_cast<double>(r), c.measured, c.bound, c.pass});
      all_pass = all_pass && c.pass;
    }
  }
  write_bounds_csv(outdir / "bounds.csv", rows);
  log << "bounds: " << rows.size() << " cells, " << (all_pass ? "all pass" : "VIOLATIONS FOUND")
      << "\n";
  return all_pass ? kExitOk : kExitFailed;
}

inline int run_bounds(const WalkConfig& cfg, const std::filesystem::path& outdir,
                      std::ostream& log = std::cout) {
  LatticeBox box = build_box(cfg.d, cfg.L);
  ShiftParams sp = validate_shift_params(cfg.p, cfg.q);
  CoinSpec coin{cfg.phi, cfg.omega};
  WalkOperator u = build_walk(box, sp, coin);
  return run_bounds_on(u, outdir, log);
}

}  // namespace qwdecay
