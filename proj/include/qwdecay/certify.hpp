#pragma once

#include "qwdecay/lattice.hpp"
#include "qwdecay/rng.hpp"
#include "qwdecay/spectral.hpp"
#include "qwdecay/walk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace qwdecay {

/// Measured propagation step: the largest change of |x| across any nonzero
/// matrix entry. A valid walk with declared step b must measure <= b.
inline double propagation_bound(const WalkOperator& op, double entry_tol = 1e-13) {
  const CMatrix& m = op.matrix;
  const LatticeBox& box = op.box;
  if (m.rows() != box.dim() || m.cols() != box.dim())
    throw std::invalid_argument("propagation_bound: matrix does not match box");
  double worst = 0.0;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    double nc = box.site_norm(box.component_site(c));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (std::abs(m(r, c)) <= entry_tol) continue;
      worst = std::max(worst, std::abs(box.site_norm(box.component_site(r)) - nc));
    }
  }
  return worst;
}

/// Mass profile of a unit vector over radius shells [(n-1)b, nb).
/// norms[i] is the l2 mass of shell n = i+1; squares sum to 1.
struct ShellSequence {
  double b = 1.0;
  std::vector<double> norms;
  int shell_count() const { return static_cast<int>(norms.size()); }
  double outer_radius(int n) const { return n * b; }
};

inline ShellSequence shell_norms(const LatticeBox& box, const WaveFunction& psi, double b) {
  if (!(b > 0.0)) throw std::invalid_argument("shell_norms: b must be > 0");
  if (psi.size() != box.dim()) throw std::invalid_argument("shell_norms: vector does not match box");
  if (std::abs(psi.norm() - 1.0) > 1e-10)
    throw std::invalid_argument("shell_norms: vector must be normalized");
  ShellSequence seq;
  seq.b = b;
  double rmax = box.max_norm();
  int n_max = (rmax == 0.0) ? 1 : static_cast<int>(std::lround(ceil_to_multiple(rmax, b) / b));
  // the origin sits in shell 1 by convention; a site exactly at n*b belongs to shell n+1
  if (rmax >= n_max * b) ++n_max;
  std::vector<double> mass(n_max, 0.0);
  RVector site_m = site_masses(box, psi);
  for (int s = 0; s < box.site_count(); ++s) {
    double r = box.site_norm(s);
    int n = static_cast<int>(std::lround(step_weight_value(r, 1.0, b) / b));  // shell index, 1-based
    mass[n - 1] += site_m[s];
  }
  seq.norms.resize(n_max);
  for (int i = 0; i < n_max; ++i) seq.norms[i] = std::sqrt(mass[i]);
  return seq;
}

/// Supremum of decay rates delta admissible for a spectral gap:
/// the largest delta with 2 sinh(delta b) < gap is asinh(gap/2)/b.
inline double max_decay_rate(double gap, double b) {
  if (!(gap > 0.0)) throw std::invalid_argument("max_decay_rate: gap must be > 0");
  if (!(b > 0.0)) throw std::invalid_argument("max_decay_rate: b must be > 0");
  return std::asinh(gap / 2.0) / b;
}

struct DecayFit {
  double rate = 0.0;
  double r_squared = 0.0;
  int shells_used = 0;
};

/// Least-squares slope of log shell mass against shell outer radius over
/// shells n in [n_lo, n_hi]. Shells with negligible mass are skipped;
/// at least four usable shells are required.
inline DecayFit fit_decay_rate(const ShellSequence& shells, int n_lo, int n_hi,
                               double floor_norm = 1e-14) {
  if (n_lo < 1 || n_hi > shells.shell_count() || n_lo > n_hi)
    throw std::invalid_argument("fit_decay_rate: shell window out of range");
  std::vector<double> xs, ys;
  for (int n = n_lo; n <= n_hi; ++n) {
    double s = shells.norms[n - 1];
    if (s <= floor_norm) continue;
    xs.push_back(shells.outer_radius(n));
    ys.push_back(std::log(s));
  }
  if (xs.size() < 4)
    throw std::invalid_argument("fit_decay_rate: fewer than four usable shells in the window");
  double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  double denom = n * sxx - sx * sx;
  if (denom <= 0.0) throw std::invalid_argument("fit_decay_rate: degenerate abscissa");
  double slope = (n * sxy - sx * sy) / denom;
  double intercept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0, mean = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double e = ys[i] - (intercept + slope * xs[i]);
    ss_res += e * e;
    double t = ys[i] - mean;
    ss_tot += t * t;
  }
  DecayFit fit;
  fit.rate = -slope;
  fit.r_squared = (ss_tot < 1e-30) ? 1.0 : 1.0 - ss_res / ss_tot;
  fit.shells_used = static_cast<int>(xs.size());
  return fit;
}

/// Exponentially weighted mass sum_x e^{2 delta |x|} |psi(x)|^2 together
/// with the fraction carried by the outermost shell. A small tail ratio
/// certifies that the weighted vector is summable well inside the box.
struct SummabilityReport {
  double total = 0.0;
  double tail_ratio = 0.0;
  int outer_shell = 0;
};

inline SummabilityReport exp_summability(const LatticeBox& box, const WaveFunction& psi, double delta,
                                         double b, double cap = 700.0) {
  if (!(delta > 0.0)) throw std::invalid_argument("exp_summability: delta must be > 0");
  if (!(b > 0.0)) throw std::invalid_argument("exp_summability: b must be > 0");
  if (2.0 * delta * box.max_norm() > cap)
    throw qw_error("exp_summability: exponent " + std::to_string(2.0 * delta * box.max_norm()) +
                   " exceeds the overflow cap; lower delta or shrink the box");
  RVector mass = site_masses(box, psi);
  double rmax = box.max_norm();
  int n_max = (rmax == 0.0) ? 1 : static_cast<int>(std::lround(step_weight_value(rmax, 1.0, b) / b));
  SummabilityReport rep;
  rep.outer_shell = n_max;
  double outer = 0.0;
  for (int s = 0; s < box.site_count(); ++s) {
    double w = std::exp(2.0 * delta * box.site_norm(s)) * mass[s];
    rep.total += w;
    int n = static_cast<int>(std::lround(step_weight_value(box.site_norm(s), 1.0, b) / b));
    if (n == n_max) outer += w;
  }
  if (rep.total <= 0.0) throw std::invalid_argument("exp_summability: zero vector");
  rep.tail_ratio = outer / rep.total;
  return rep;
}

/// Smallest constant C with |psi(x)| <= C e^{-delta |x|} over all sites,
/// where |psi(x)| is the internal-space norm at x.
inline double pointwise_bound_constant(const LatticeBox& box, const WaveFunction& psi, double delta,
                                       double cap = 700.0) {
  if (!(delta > 0.0)) throw std::invalid_argument("pointwise_bound_constant: delta must be > 0");
  if (delta * box.max_norm() > cap)
    throw qw_error("pointwise_bound_constant: exponent exceeds the overflow cap");
  RVector mass = site_masses(box, psi);
  double c = 0.0;
  for (int s = 0; s < box.site_count(); ++s)
    c = std::max(c, std::sqrt(mass[s]) * std::exp(delta * box.site_norm(s)));
  return c;
}

/// Sampled lower bound on ||(U - lambda) f|| over unit vectors supported at
/// radius >= R. Away from the defect the resolvent bound forces the ratio
/// to stay above gap - epsilon.
struct GapCheck {
  double R = 0.0;
  double epsilon = 0.0;
  int trials = 0;
  double min_ratio = 0.0;
  double required = 0.0;
  int failures = 0;
  bool pass = false;
};

inline GapCheck check_gap_lower_bound(const WalkOperator& u, Complex lambda, const EssentialArcs& arcs,
                                      double R, double epsilon, int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("check_gap_lower_bound: trials must be >= 1");
  const LatticeBox& box = u.box;
  DiagonalWeight mask = shell_projector(box, R, std::numeric_limits<double>::infinity());
  if (mask.site_values.maxCoeff() == 0.0)
    throw std::invalid_argument("check_gap_lower_bound: no sites at radius >= R");
  GapCheck chk;
  chk.R = R;
  chk.epsilon = epsilon;
  chk.trials = trials;
  chk.required = gap_distance(lambda, arcs) - epsilon;
  chk.min_ratio = std::numeric_limits<double>::infinity();
  std::mt19937_64 gen(seed);
  for (int t = 0; t < trials; ++t) {
    WaveFunction f = random_unit_on_support(box, mask, gen);
    double ratio = (u.matrix * f - lambda * f).norm();
    chk.min_ratio = std::min(chk.min_ratio, ratio);
    if (ratio < chk.required) ++chk.failures;
  }
  chk.pass = chk.failures == 0;
  return chk;
}

/// Scan over integer radii: r_star is the smallest R from which every
/// tested radius passes the sampled gap bound.
struct GapScan {
  std::vector<GapCheck> checks;
  int r_star = -1;
  bool found = false;
};

inline GapScan gap_threshold_scan(const WalkOperator& u, Complex lambda, const EssentialArcs& arcs,
                                  double epsilon, int trials, std::uint64_t seed, int r_max) {
  if (r_max < 1) throw std::invalid_argument("gap_threshold_scan: r_max must be >= 1");
  GapScan scan;
  for (int r = 1; r <= r_max; ++r)
    scan.checks.push_back(
        check_gap_lower_bound(u, lambda, arcs, static_cast<double>(r), epsilon, trials,
                              seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(r)));
  for (int i = static_cast<int>(scan.checks.size()) - 1; i >= 0; --i) {
    if (!scan.checks[i].pass) break;
    scan.r_star = i + 1;
    scan.found = true;
  }
  return scan;
}

/// Commutator of the walk with a radius cutoff, measured under the full
/// step weight. The bound e^{delta ceil_b(R+b)} + e^{delta ceil_b(R)}
/// holds because one step moves mass across at most one shell boundary.
struct CutoffCommutatorCheck {
  double R = 0.0;
  double delta = 0.0;
  double b = 1.0;
  double measured = 0.0;
  double bound = 0.0;
  bool support_ok = false;
  bool pass = false;
};

inline CutoffCommutatorCheck check_cutoff_commutator(const WalkOperator& u, double delta, double R,
                                                     const NormOptions& nopts = {},
                                                     double slack = 1e-9) {
  if (!(R > 0.0)) throw std::invalid_argument("check_cutoff_commutator: R must be > 0");
  if (!(delta > 0.0)) throw std::invalid_argument("check_cutoff_commutator: delta must be > 0");
  const LatticeBox& box = u.box;
  double b = u.b;
  Eigen::Index n = box.dim();

  RVector wexp = exp_weight(step_weight(box, delta, b)).full_diagonal(box);
  RVector cut = shell_projector(box, R, std::numeric_limits<double>::infinity()).full_diagonal(box);

  CutoffCommutatorCheck chk;
  chk.R = R;
  chk.delta = delta;
  chk.b = b;
  chk.bound = std::exp(delta * ceil_to_multiple(R + b, b)) + std::exp(delta * ceil_to_multiple(R, b));

  double lo_edge = std::max(R - b, 0.0);
  bool support_ok = true;
  CMatrix m(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    double rc = box.site_norm(box.component_site(c));
    for (Eigen::Index r = 0; r < n; ++r) {
      Complex comm = u.matrix(r, c) * (cut[c] - cut[r]);
      m(r, c) = wexp[r] * comm;
      if (std::abs(comm) > 1e-13) {
        double rr = box.site_norm(box.component_site(r));
        bool lo_hi = rr >= lo_edge && rr < R && rc >= R && rc < R + b;
        bool hi_lo = rc >= lo_edge && rc < R && rr >= R && rr < R + b;
        if (!lo_hi && !hi_lo) support_ok = false;
      }
    }
  }
  chk.support_ok = support_ok;
  chk.measured = operator_norm(m, nopts);
  chk.pass = support_ok && chk.measured <= chk.bound + slack;
  return chk;
}

/// Commutator of the walk with the truncated exponential weight, right
/// multiplied by the inverse weight. Its norm stays below 2 sinh(delta b)
/// uniformly in the plateau index N.
struct ExpCommutatorCheck {
  int N = 1;
  double delta = 0.0;
  double b = 1.0;
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
};

inline ExpCommutatorCheck check_exp_commutator(const WalkOperator& u, double delta, int N,
                                               const NormOptions& nopts = {}, double slack = 1e-9) {
  if (N < 1) throw std::invalid_argument("check_exp_commutator: N must be >= 1");
  if (delta < 0.0) throw std::invalid_argument("check_exp_commutator: delta must be >= 0");
  const LatticeBox& box = u.box;
  Eigen::Index n = box.dim();

  ExpCommutatorCheck chk;
  chk.N = N;
  chk.delta = delta;
  chk.b = u.b;
  chk.bound = 2.0 * std::sinh(delta * u.b);

  // delta = 0 is the control row: the weight is constant and the commutator
  // vanishes identically, including in floating point
  RVector w = delta == 0.0 ? RVector::Ones(n)
                           : exp_weight(step_weight_truncated(box, delta, u.b, N)).full_diagonal(box);
  CMatrix m(n, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < n; ++r) m(r, c) = u.matrix(r, c) * (1.0 - w[r] / w[c]);
  chk.measured = operator_norm(m, nopts);
  chk.pass = chk.measured <= chk.bound + slack;
  return chk;
}

/// Weighted tail masses ||e^{Lambda_N} E_{>=R} psi|| for N = 1..n_hi. The
/// sequence must grow monotonically and stay below the closed-form cap
/// 2 (e^{delta ceil_b(R+b)} + e^{delta ceil_b(R)}) / (gap - 2 sinh(delta b)).
struct SeriesCheck {
  double R = 0.0;
  double delta = 0.0;
  double b = 1.0;
  std::vector<double> values;
  double bound = 0.0;
  bool monotone_ok = false;
  bool bounded_ok = false;
  bool pass = false;
};

inline SeriesCheck check_weighted_tail_series(const LatticeBox& box, const WaveFunction& psi,
                                              double delta, double b, double R, double gap,
                                              int n_hi = 0, double slack = 1e-9) {
  if (!(R > 0.0)) throw std::invalid_argument("check_weighted_tail_series: R must be > 0");
  double margin = gap - 2.0 * std::sinh(delta * b);
  if (!(margin > 0.0))
    throw std::invalid_argument("check_weighted_tail_series: rate too large for the gap");
  if (n_hi < 1) {
    double rmax = box.max_norm();
    n_hi = (rmax == 0.0) ? 1 : static_cast<int>(std::lround(step_weight_value(rmax, 1.0, b) / b)) + 1;
  }
  SeriesCheck chk;
  chk.R = R;
  chk.delta = delta;
  chk.b = b;
  chk.bound = 2.0 * (std::exp(delta * ceil_to_multiple(R + b, b)) + std::exp(delta * ceil_to_multiple(R, b))) /
              margin * psi.norm();
  RVector cut = shell_projector(box, R, std::numeric_limits<double>::infinity()).full_diagonal(box);
  for (int nn = 1; nn <= n_hi; ++nn) {
    RVector w = exp_weight(step_weight_truncated(box, delta, b, nn)).full_diagonal(box);
    double v = 0.0;
    for (Eigen::Index i = 0; i < psi.size(); ++i) v += std::norm(w[i] * cut[i] * psi[i]);
    chk.values.push_back(std::sqrt(v));
  }
  chk.monotone_ok = true;
  for (std::size_t i = 1; i < chk.values.size(); ++i)
    if (chk.values[i] < chk.values[i - 1] - 1e-12) chk.monotone_ok = false;
  chk.bounded_ok = true;
  for (double v : chk.values)
    if (v > chk.bound + slack) chk.bounded_ok = false;
  chk.pass = chk.monotone_ok && chk.bounded_ok;
  return chk;
}

struct CertifyOptions {
  double b = 1.0;
  double delta_fraction = 0.9;
  double rate_slack = 0.05;  // fitted rate must reach the admissible sup minus this
  double tail_max = 1e-6;
  double epsilon = -1.0;  // negative: (gap - 2 sinh(delta b)) / 2
  int gap_trials = 200;
  int gap_r_max = 0;  // 0: (L-1)/2
  std::uint64_t seed = 20240915ull;
  int fit_shell_lo = 3;
  int fit_shell_hi_offset = 2;
  std::vector<double> cutoff_r;  // empty: {2..8} clipped to the box
  std::vector<int> exp_n;        // empty: {1..8}
  NormOptions norm;
  double slack = 1e-9;
};

/// Everything the certified decay rate rests on, evaluated on one
/// eigenpair. The certificate passes only when every sub-check passes;
/// failures are recorded by name and never silently dropped.
struct DecayCertificate {
  Complex lambda;
  double residual = 0.0;
  double gap = 0.0;
  double b_declared = 0.0;
  double b_measured = 0.0;
  double delta_sup = 0.0;
  double delta_used = 0.0;
  double epsilon = 0.0;
  ShellSequence shells;
  DecayFit fit;
  double required_rate = 0.0;
  SummabilityReport summability;
  double pointwise_constant = 0.0;
  int pointwise_violations = 0;
  GapScan gap_scan;
  std::vector<CutoffCommutatorCheck> cutoff_checks;
  std::vector<ExpCommutatorCheck> exp_checks;
  SeriesCheck series;
  std::vector<std::string> failed_checks;
  bool passed = false;
};

inline DecayCertificate certify(const WalkOperator& u, Complex lambda, const WaveFunction& psi,
                                const EssentialArcs& arcs, const CertifyOptions& opts = {}) {
  if (!(opts.delta_fraction > 0.0 && opts.delta_fraction < 1.0))
    throw std::invalid_argument("certify: delta fraction must lie in (0, 1)");
  const LatticeBox& box = u.box;
  if (psi.size() != box.dim()) throw std::invalid_argument("certify: vector does not match box");

  DecayCertificate cert;
  cert.lambda = lambda;
  cert.b_declared = opts.b;
  auto fail = [&cert](const char* name) {
    for (const auto& f : cert.failed_checks)
      if (f == name) return;
    cert.failed_checks.push_back(name);
  };

  WaveFunction v = psi / psi.norm();
  cert.residual = (u.matrix * v - lambda * v).norm();
  if (cert.residual > 1e-8) fail("eigenpair residual");

  cert.b_measured = propagation_bound(u);
  if (cert.b_measured > opts.b + 1e-12) {
    // every bound below is stated in terms of b; with a wrong b they are
    // meaningless, so the certificate refuses instead of proceeding
    fail("propagation step exceeds declared bound");
    cert.passed = false;
    return cert;
  }

  cert.gap = gap_distance(lambda, arcs);
  cert.delta_sup = max_decay_rate(cert.gap, opts.b);
  cert.delta_used = opts.delta_fraction * cert.delta_sup;
  double margin = cert.gap - 2.0 * std::sinh(cert.delta_used * opts.b);
  cert.epsilon = opts.epsilon >= 0.0 ? opts.epsilon : margin / 2.0;

  cert.shells = shell_norms(box, v, opts.b);
  {
    int count = cert.shells.shell_count();
    // trailing shells at the numerical floor carry no support (on a square
    // box the corner shells can be empty in practice) and cannot constrain
    // a rate fit; the window must end inside the live range
    int live = count;
    while (live > 0 && cert.shells.norms[live - 1] <= 1e-14) --live;
    int n_lo = std::max(opts.fit_shell_lo, 1);
    int n_hi = std::min(live - opts.fit_shell_hi_offset, live);
    // small boxes cannot afford interior margins on both sides; widen the
    // window outward first, then inward, until it holds four shells
    while (n_hi - n_lo < 3 && n_hi < live) ++n_hi;
    while (n_hi - n_lo < 3 && n_lo > 1) --n_lo;
    double tail_sq = 0.0;
    for (int nn = n_lo + 1; nn <= count; ++nn)
      tail_sq += cert.shells.norms[nn - 1] * cert.shells.norms[nn - 1];
    if (tail_sq <= 1e-20) {
      // the state vanishes beyond the window start: it decays faster than
      // any exponential and the rate requirement holds vacuously
      cert.fit.rate = std::numeric_limits<double>::infinity();
      cert.fit.r_squared = 1.0;
      cert.fit.shells_used = 0;
    } else {
      cert.fit = fit_decay_rate(cert.shells, n_lo, n_hi);
    }
  }
  cert.required_rate = cert.delta_sup - opts.rate_slack;
  if (!(cert.fit.rate >= cert.required_rate)) fail("fitted decay rate");

  cert.summability = exp_summability(box, v, cert.delta_used, opts.b);
  if (!(cert.summability.tail_ratio <= opts.tail_max)) fail("weighted tail ratio");

  cert.pointwise_constant = pointwise_bound_constant(box, v, cert.delta_used);
  RVector mass = site_masses(box, v);
  for (int s = 0; s < box.site_count(); ++s) {
    double lhs = std::sqrt(mass[s]);
    double rhs = cert.pointwise_constant * std::exp(-cert.delta_used * box.site_norm(s));
    if (lhs > rhs + 1e-12) ++cert.pointwise_violations;
  }
  if (cert.pointwise_violations > 0) fail("pointwise envelope");

  int r_max = opts.gap_r_max > 0 ? opts.gap_r_max : (box.side() - 1) / 2;
  cert.gap_scan = gap_threshold_scan(u, lambda, arcs, cert.epsilon, opts.gap_trials, opts.seed, r_max);
  if (!cert.gap_scan.found) fail("gap lower bound threshold");

  std::vector<double> r_grid = opts.cutoff_r;
  if (r_grid.empty())
    for (int r = 2; r <= 8 && r <= static_cast<int>(box.max_norm() - opts.b); ++r)
      r_grid.push_back(static_cast<double>(r));
  for (double r : r_grid) {
    cert.cutoff_checks.push_back(check_cutoff_commutator(u, cert.delta_used, r, opts.norm, opts.slack));
    if (!cert.cutoff_checks.back().pass) fail("cutoff commutator bound");
  }

  std::vector<int> n_grid = opts.exp_n;
  if (n_grid.empty())
    for (int nn = 1; nn <= 8; ++nn) n_grid.push_back(nn);
  for (int nn : n_grid) {
    cert.exp_checks.push_back(check_exp_commutator(u, cert.delta_used, nn, opts.norm, opts.slack));
    if (!cert.exp_checks.back().pass) fail("weight commutator bound");
  }

  if (cert.gap_scan.found) {
    cert.series = check_weighted_tail_series(box, v, cert.delta_used, opts.b,
                                             static_cast<double>(cert.gap_scan.r_star), cert.gap,
                                             0, opts.slack);
    if (!cert.series.pass) fail("weighted tail series");
  }

  cert.passed = cert.failed_checks.empty();
  return cert;
}

inline DecayCertificate certify(const WalkOperator& u, const Detection& det, const EssentialArcs& arcs,
                                const CertifyOptions& opts = {}) {
  return certify(u, det.lambda, det.psi, arcs, opts);
}

}  // namespace qwdecay
