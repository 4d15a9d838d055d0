#pragma once

#include "qwdecay/lattice.hpp"
#include "qwdecay/rng.hpp"
#include "qwdecay/walk.hpp"

#include <complex>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <cblas.h>
#include <lapacke.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace qwdecay {

struct NormOptions {
  // spectral-norm route: exact SVD up to this dimension, block power iteration above
  Eigen::Index dense_threshold = 2000;
  double rel_tol = 1e-10;
  int max_iterations = 100000;
  int block = 8;
  // matrices at least this sparse use compressed rows in the iterative route
  double sparse_density_cutoff = 0.05;
  std::uint64_t seed = 0x243F6A8885A308D3ull;
};

namespace detail {

struct Csr {
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::vector<Complex> val;
  int rows = 0, cols = 0;

  void multiply(const CMatrix& x, CMatrix& y) const {
    y.setZero(rows, x.cols());
    for (int r = 0; r < rows; ++r)
      for (int t = row_ptr[r]; t < row_ptr[r + 1]; ++t) y.row(r) += val[t] * x.row(col[t]);
  }
};

inline Csr compress(const CMatrix& m, bool adjoint) {
  Csr c;
  c.rows = static_cast<int>(adjoint ? m.cols() : m.rows());
  c.cols = static_cast<int>(adjoint ? m.rows() : m.cols());
  c.row_ptr.assign(c.rows + 1, 0);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (m(i, j) != Complex(0.0, 0.0)) ++c.row_ptr[(adjoint ? j : i) + 1];
  for (int r = 0; r < c.rows; ++r) c.row_ptr[r + 1] += c.row_ptr[r];
  c.col.resize(c.row_ptr.back());
  c.val.resize(c.row_ptr.back());
  std::vector<int> fill(c.row_ptr.begin(), c.row_ptr.end() - 1);
  // column-major scan keeps adjoint rows sorted; plain rows need no order anyway
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      Complex v = m(i, j);
      if (v == Complex(0.0, 0.0)) continue;
      int r = static_cast<int>(adjoint ? j : i);
      c.col[fill[r]] = static_cast<int>(adjoint ? i : j);
      c.val[fill[r]] = adjoint ? std::conj(v) : v;
      ++fill[r];
    }
  return c;
}

inline double largest_singular_dense(const CMatrix& m) {
  lapack_int rows = static_cast<lapack_int>(m.rows());
  lapack_int cols = static_cast<lapack_int>(m.cols());
  CMatrix a = m;  // zgesdd destroys its input
  std::vector<double> s(std::min(rows, cols));
  lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', rows, cols, a.data(), rows, s.data(),
                                   nullptr, 1, nullptr, 1);
  if (info != 0)
    throw qw_error("operator_norm: SVD failed to converge (zgesdd info=" + std::to_string(info) + ")");
  return s.empty() ? 0.0 : s[0];
}

inline double largest_singular_power(const CMatrix& m, const NormOptions& opts) {
  Eigen::Index rows = m.rows(), cols = m.cols();
  Eigen::Index nnz = 0;
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      if (m(i, j) != Complex(0.0, 0.0)) ++nnz;
  if (nnz == 0) return 0.0;
  double density = static_cast<double>(nnz) / (static_cast<double>(rows) * static_cast<double>(cols));
  bool sparse = density <= opts.sparse_density_cutoff;
  Csr a, ah;
  if (sparse) {
    a = compress(m, false);
    ah = compress(m, true);
  }

  int b = static_cast<int>(std::min<Eigen::Index>(opts.block, cols));
  std::mt19937_64 gen(opts.seed);
  CMatrix x(cols, b);
  for (int j = 0; j < b; ++j)
    for (Eigen::Index i = 0; i < cols; ++i) x(i, j) = complex_gaussian(gen);
  x = Eigen::HouseholderQR<CMatrix>(x).householderQ() * CMatrix::Identity(cols, b);

  CMatrix y(rows, b), z(cols, b);
  double sigma_prev = -1.0;
  int stable = 0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    if (sparse) {
      a.multiply(x, y);
      ah.multiply(y, z);
    } else {
      y.noalias() = m * x;
      z.noalias() = m.adjoint() * y;
    }
    CMatrix h = x.adjoint() * z;
    Eigen::SelfAdjointEigenSolver<CMatrix> es((h + h.adjoint()) / 2.0);
    double theta = es.eigenvalues().maxCoeff();
    double sigma = std::sqrt(std::max(theta, 0.0));
    if (sigma_prev >= 0.0 && std::abs(sigma - sigma_prev) <= opts.rel_tol * std::max(sigma, 1e-300)) {
      if (++stable >= 3) return sigma;
    } else {
      stable = 0;
    }
    sigma_prev = sigma;
    Eigen::HouseholderQR<CMatrix> qr(z);
    x = qr.householderQ() * CMatrix::Identity(cols, b);
  }
  throw qw_error("operator_norm: power iteration did not stabilize within " +
                 std::to_string(opts.max_iterations) + " iterations (last estimate " +
                 std::to_string(sigma_prev) + ")");
}

}  // namespace detail

/// Spectral norm (largest singular value). Exact SVD for matrices up to
/// opts.dense_threshold on a side, seeded block power iteration on M*M
/// above it. Both routes agree to ~1e-8 on the scales used here.
inline double operator_norm(const CMatrix& m, const NormOptions& opts = {}) {
  if (m.size() == 0) return 0.0;
  if (m.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  if (std::max(m.rows(), m.cols()) <= opts.dense_threshold) return detail::largest_singular_dense(m);
  return detail::largest_singular_power(m, opts);
}

struct EigOptions {
  double unitarity_tol = 1e-10;
  double residual_tol = 1e-8;
  double cluster_tol = 1e-8;
  double phase_tol = 1e-12;
};

/// Full eigensystem of a unitary operator. Eigenvalues carry unit modulus
/// within 1e-10, eigenvectors are orthonormal with residuals below 1e-8,
/// and the ordering and phases are deterministic functions of the input.
struct SpectrumResult {
  CVector eigenvalues;
  CMatrix eigenvectors;
  RVector residuals;
};

namespace detail {

inline void gemm(char ta, char tb, const CMatrix& a, const CMatrix& b, CMatrix& c) {
  lapack_int m = static_cast<lapack_int>(ta == 'N' ? a.rows() : a.cols());
  lapack_int k = static_cast<lapack_int>(ta == 'N' ? a.cols() : a.rows());
  lapack_int n = static_cast<lapack_int>(tb == 'N' ? b.cols() : b.rows());
  c.resize(m, n);
  Complex one(1.0, 0.0), zero(0.0, 0.0);
  cblas_zgemm(CblasColMajor, ta == 'N' ? CblasNoTrans : CblasConjTrans,
              tb == 'N' ? CblasNoTrans : CblasConjTrans, m, n, k, &one, a.data(),
              static_cast<lapack_int>(a.rows()), b.data(), static_cast<lapack_int>(b.rows()), &zero,
              c.data(), m);
}

inline void fix_phase(CMatrix& q, Eigen::Index col, double phase_tol) {
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double a = std::abs(q(i, col));
    if (a > phase_tol) {
      q.col(col) *= std::conj(q(i, col)) / a;
      return;
    }
  }
}

}  // namespace detail

inline SpectrumResult eigendecompose(const WalkOperator& op, const EigOptions& opts = {}) {
  const CMatrix& u = op.matrix;
  if (u.rows() != u.cols()) throw std::invalid_argument("eigendecompose: matrix must be square");
  Eigen::Index n = u.rows();
  if (n == 0) throw std::invalid_argument("eigendecompose: empty matrix");

  CMatrix gram;
  detail::gemm('C', 'N', u, u, gram);
  double udev = (gram - CMatrix::Identity(n, n)).cwiseAbs().maxCoeff();
  if (udev > opts.unitarity_tol)
    throw qw_error("eigendecompose: input is not unitary (max |U*U - I| = " + std::to_string(udev) + ")");

  CMatrix a = u;
  CVector w(n);
  CMatrix q(n, n);
  lapack_int sdim = 0;
  lapack_int info = LAPACKE_zgees(LAPACK_COL_MAJOR, 'V', 'N', nullptr, static_cast<lapack_int>(n),
                                  a.data(), static_cast<lapack_int>(n), &sdim, w.data(), q.data(),
                                  static_cast<lapack_int>(n));
  if (info != 0)
    throw qw_error("eigendecompose: Schur iteration failed (zgees info=" + std::to_string(info) +
                   ", dim=" + std::to_string(n) + ")");

  CMatrix uq;
  detail::gemm('N', 'N', u, q, uq);

  // For a unitary input the Schur form is diagonal, so the Schur basis is an
  // eigenbasis. Re-diagonalize small clusters of close eigenvalues to keep
  // residuals tight when zgees leaves coupling between near-degenerate columns.
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index i, Eigen::Index j) { return std::arg(w[i]) < std::arg(w[j]); });
  std::vector<std::vector<Eigen::Index>> clusters;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t == 0 || std::abs(w[order[t]] - w[order[t - 1]]) > opts.cluster_tol)
      clusters.emplace_back();
    clusters.back().push_back(order[t]);
  }
  // the argument axis is circular: -1 + i eps and -1 - i eps sort to opposite ends
  if (clusters.size() > 1 &&
      std::abs(w[clusters.front().front()] - w[clusters.back().back()]) <= opts.cluster_tol) {
    for (Eigen::Index i : clusters.front()) clusters.back().push_back(i);
    clusters.erase(clusters.begin());
  }

  for (const auto& cl : clusters) {
    if (cl.size() < 2) continue;
    Eigen::Index k = static_cast<Eigen::Index>(cl.size());
    CMatrix qc(n, k), uqc(n, k);
    for (Eigen::Index t = 0; t < k; ++t) {
      qc.col(t) = q.col(cl[t]);
      uqc.col(t) = uq.col(cl[t]);
    }
    CMatrix mc = qc.adjoint() * uqc;
    Eigen::ComplexSchur<CMatrix> schur(mc);
    if (schur.info() != Eigen::Success)
      throw qw_error("eigendecompose: cluster re-diagonalization failed");
    CMatrix qn = qc * schur.matrixU();
    CMatrix uqn = uqc * schur.matrixU();
    for (Eigen::Index t = 0; t < k; ++t) {
      q.col(cl[t]) = qn.col(t);
      uq.col(cl[t]) = uqn.col(t);
      w[cl[t]] = schur.matrixT()(t, t);
    }
  }

  RVector res(n);
  for (Eigen::Index i = 0; i < n; ++i) res[i] = (uq.col(i) - w[i] * q.col(i)).norm();

  for (Eigen::Index i = 0; i < n; ++i) detail::fix_phase(q, i, opts.phase_tol);

  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    double ai = std::arg(w[i]), aj = std::arg(w[j]);
    if (ai != aj) return ai < aj;
    for (Eigen::Index r = 0; r < n; ++r) {
      Complex vi = q(r, i), vj = q(r, j);
      if (vi.real() != vj.real()) return vi.real() < vj.real();
      if (vi.imag() != vj.imag()) return vi.imag() < vj.imag();
    }
    return false;
  });

  SpectrumResult out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  out.residuals.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    out.eigenvalues[t] = w[order[t]];
    out.eigenvectors.col(t) = q.col(order[t]);
    out.residuals[t] = res[order[t]];
  }

  double max_res = out.residuals.maxCoeff();
  if (max_res > opts.residual_tol)
    throw qw_error("eigendecompose: eigenpair residual " + std::to_string(max_res) +
                   " exceeds tolerance; matrix may be far from normal");
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(std::abs(out.eigenvalues[i]) - 1.0) > opts.unitarity_tol)
      throw qw_error("eigendecompose: eigenvalue drifted off the unit circle");
  return out;
}

/// Samples of the defect-free spectrum: symbol eigenvalues over a uniform
/// momentum grid with `refine` points per lattice momentum on each axis.
struct EssentialArcs {
  int d = 0;
  int L = 0;
  int refine = 1;
  Eigen::MatrixXd grid;  // one row per momentum tuple
  CVector values;        // grid row index * 2d + branch
  int branches() const { return 2 * d; }
  Eigen::Index tuple_count() const { return grid.rows(); }
  Complex value(Eigen::Index tuple, int branch) const { return values[tuple * 2 * d + branch]; }
};

inline EssentialArcs essential_arcs(const ShiftParams& sp, const CVector& phi, int L, int refine) {
  int d = sp.dimension();
  if (L < 3 || L % 2 == 0) throw std::invalid_argument("essential_arcs: L must be odd and >= 3");
  if (refine < 1) throw std::invalid_argument("essential_arcs: refine must be >= 1");
  long long m_per_axis = static_cast<long long>(L) * refine;
  long long tuples = 1;
  for (int j = 0; j < d; ++j) {
    tuples *= m_per_axis;
    if (tuples * 2 * d > 50000000LL)
      throw std::invalid_argument("essential_arcs: momentum grid too large; lower refine");
  }

  EssentialArcs arcs;
  arcs.d = d;
  arcs.L = L;
  arcs.refine = refine;
  arcs.grid.resize(tuples, d);
  arcs.values.resize(tuples * 2 * d);

  std::vector<long long> idx(d, 0);
  RVector k(d);
  for (long long t = 0; t < tuples; ++t) {
    for (int j = 0; j < d; ++j) {
      double kj = 2.0 * M_PI * static_cast<double>(idx[j]) / static_cast<double>(m_per_axis);
      if (kj > M_PI) kj -= 2.0 * M_PI;  // principal band
      k[j] = kj;
      arcs.grid(t, j) = kj;
    }
    BlochSymbol sym = bloch_symbol(sp, phi, k);
    Eigen::ComplexEigenSolver<CMatrix> es(sym.matrix, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) throw qw_error("essential_arcs: symbol eigensolve failed");
    CVector mu = es.eigenvalues();
    std::vector<int> ord(mu.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(), [&](int i, int j2) {
      double ai = std::arg(mu[i]), aj = std::arg(mu[j2]);
      if (ai != aj) return ai < aj;
      return i < j2;
    });
    for (int br = 0; br < 2 * d; ++br) arcs.values[t * 2 * d + br] = mu[ord[br]];
    for (int j = d - 1; j >= 0; --j) {
      if (idx[j] + 1 < m_per_axis) {
        ++idx[j];
        break;
      }
      idx[j] = 0;
    }
  }
  return arcs;
}

/// Distance in modulus from lambda to the sampled defect-free spectrum.
inline double gap_distance(Complex lambda, const EssentialArcs& arcs) {
  if (arcs.values.size() == 0) throw std::invalid_argument("gap_distance: empty arc sample set");
  if (std::abs(std::abs(lambda) - 1.0) > 1e-10)
    throw std::invalid_argument("gap_distance: lambda must lie on the unit circle");
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < arcs.values.size(); ++i)
    best = std::min(best, std::abs(lambda - arcs.values[i]));
  return best;
}

/// Fraction of the squared norm carried by sites with |x| <= radius.
inline double core_mass(const LatticeBox& box, const WaveFunction& psi, double radius) {
  RVector m = site_masses(box, psi);
  double total = m.sum();
  if (total <= 0.0) throw std::invalid_argument("core_mass: zero vector");
  double inside = 0.0;
  for (int s = 0; s < box.site_count(); ++s)
    if (box.site_norm(s) <= radius) inside += m[s];
  return inside / total;
}

struct DetectionCriteria {
  double gap_min = 0.05;
  double mass_min = 0.9;
  double core_radius = -1.0;  // negative: use side/4
};

/// An eigenpair flagged as discrete: isolated from the sampled arcs and
/// concentrated near the defect.
struct Detection {
  int index = -1;
  Complex lambda;
  WaveFunction psi;
  double gap = 0.0;
  double core_mass = 0.0;
};

inline std::vector<Detection> detect_discrete(const SpectrumResult& spec, const EssentialArcs& arcs,
                                              const LatticeBox& box,
                                              const DetectionCriteria& crit = {}) {
  double radius = crit.core_radius >= 0.0 ? crit.core_radius : box.side() / 4.0;
  std::vector<Detection> out;
  for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
    double gap = gap_distance(spec.eigenvalues[i], arcs);
    if (!(gap > crit.gap_min)) continue;
    double mass = core_mass(box, spec.eigenvectors.col(i), radius);
    if (!(mass > crit.mass_min)) continue;
    Detection det;
    det.index = static_cast<int>(i);
    det.lambda = spec.eigenvalues[i];
    det.psi = spec.eigenvectors.col(i);
    det.gap = gap;
    det.core_mass = mass;
    out.push_back(std::move(det));
  }
  return out;
}

}  // namespace qwdecay
