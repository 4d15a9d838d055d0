#pragma once

#include "qwdecay/lattice.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace qwdecay {

/// Per-axis shift couplings: p real, q complex, p_j^2 + |q_j|^2 = 1.
struct ShiftParams {
  RVector p;
  CVector q;

  int dimension() const { return static_cast<int>(p.size()); }
};

/// Checks the unit constraint p_j^2 + |q_j|^2 = 1 on every axis.
inline ShiftParams validate_shift_params(const RVector& p, const CVector& q, double tol = 1e-12) {
  if (p.size() != q.size()) throw std::invalid_argument("shift params: p and q must have equal length");
  if (p.size() < 1) throw std::invalid_argument("shift params: need at least one axis");
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    double u = p[j] * p[j] + std::norm(q[j]);
    if (std::abs(u - 1.0) > tol)
      throw std::invalid_argument("shift params: axis " + std::to_string(j + 1) +
                                  " violates p^2 + |q|^2 = 1 (got " + std::to_string(u) + ")");
  }
  return ShiftParams{p, q};
}

/// True when both couplings on axis l are nonzero, i.e. the axis carries a
/// genuinely mixing shift. 1-based axis to match reports.
inline bool axis_coupling_active(const ShiftParams& sp, int l, double tol = 1e-12) {
  if (l < 1 || l > sp.dimension()) throw std::invalid_argument("axis_coupling_active: axis out of range");
  return std::abs(sp.p[l - 1]) > tol && std::abs(sp.q[l - 1]) > tol;
}

/// Bulk and defect coin directions, unit vectors in C^{2d} blocked as
/// (leg 1, leg 2) per axis.
struct CoinSpec {
  CVector phi;
  CVector omega;
};

/// Signed leg imbalance of a coin direction, weighted by the per-axis signs:
/// sum_j s_j (|v_{j,1}|^2 - |v_{j,2}|^2).
inline double leg_imbalance(const std::vector<int>& signs, const CVector& v) {
  int d = static_cast<int>(signs.size());
  if (v.size() != 2 * d) throw std::invalid_argument("leg_imbalance: vector does not match sign count");
  double a = 0.0;
  for (int j = 0; j < d; ++j) a += signs[j] * (std::norm(v[2 * j]) - std::norm(v[2 * j + 1]));
  return a;
}

struct CoinValidationReport {
  // |Phi_{j,1} Omega_{j,2} + Phi_{j,2} Omega_{j,1}| per axis; all must be nonzero
  std::vector<double> symmetric_pairing;
  // axes l (1-based) with conj(Phi_{l,1}) Omega_{l,2} != 0; at least one required
  std::vector<int> raising_axes;
  double imbalance_bulk = 0.0;
  double imbalance_defect = 0.0;
  std::vector<std::string> failures;
  bool ok = false;
};

/// Validates the coin pair against the detectability conditions. The signs
/// select the reference corner of the coupling cube at which the imbalance
/// separation is required. One-dimensional models are rejected outright:
/// the pairing and imbalance conditions cannot hold simultaneously there.
inline CoinValidationReport validate_coin_spec(const CoinSpec& spec, const std::vector<int>& signs,
                                               double tol = 1e-12) {
  int d = static_cast<int>(signs.size());
  if (d == 1) throw std::invalid_argument("validate_coin_spec: one-dimensional models are rejected");
  if (d < 1) throw std::invalid_argument("validate_coin_spec: need at least one axis");
  if (spec.phi.size() != 2 * d || spec.omega.size() != 2 * d)
    throw std::invalid_argument("validate_coin_spec: coin vectors must have length 2d");
  for (int s : signs)
    if (s != 1 && s != -1) throw std::invalid_argument("validate_coin_spec: signs must be +1 or -1");

  CoinValidationReport rep;
  if (std::abs(spec.phi.norm() - 1.0) > 1e-12)
    rep.failures.push_back("bulk coin direction is not normalized");
  if (std::abs(spec.omega.norm() - 1.0) > 1e-12)
    rep.failures.push_back("defect coin direction is not normalized");

  rep.symmetric_pairing.resize(d);
  for (int j = 0; j < d; ++j) {
    Complex s = spec.phi[2 * j] * spec.omega[2 * j + 1] + spec.phi[2 * j + 1] * spec.omega[2 * j];
    rep.symmetric_pairing[j] = std::abs(s);
    if (rep.symmetric_pairing[j] <= tol)
      rep.failures.push_back("symmetric pairing vanishes on axis " + std::to_string(j + 1));
  }
  for (int l = 0; l < d; ++l) {
    Complex r = std::conj(spec.phi[2 * l]) * spec.omega[2 * l + 1];
    if (std::abs(r) > tol) rep.raising_axes.push_back(l + 1);
  }
  if (rep.raising_axes.empty()) rep.failures.push_back("raising pairing vanishes on every axis");

  rep.imbalance_bulk = leg_imbalance(signs, spec.phi);
  rep.imbalance_defect = leg_imbalance(signs, spec.omega);
  if (std::abs(rep.imbalance_defect - rep.imbalance_bulk) <= tol)
    rep.failures.push_back("defect and bulk leg imbalances coincide at the reference corner");

  rep.ok = rep.failures.empty();
  return rep;
}

/// Unitary on the box together with its declared propagation step: one
/// application moves support between radius shells by at most b.
struct WalkOperator {
  LatticeBox box;
  CMatrix matrix;
  double b = 1.0;
};

/// Rank-one reflection 2|chi><chi| - I on the internal space.
inline CMatrix coin_block(const CVector& chi) {
  Eigen::Index n = chi.size();
  CMatrix c = 2.0 * (chi * chi.adjoint());
  c -= CMatrix::Identity(n, n);
  return c;
}

/// Shift operator: on each axis j the leg pair mixes with its neighbors,
///   (S psi)_{j,1}(x) = p_j psi_{j,1}(x) + q_j psi_{j,2}(x + e_j)
///   (S psi)_{j,2}(x) = conj(q_j) psi_{j,1}(x - e_j) - p_j psi_{j,2}(x).
/// Self-adjoint and unitary; declared propagation step 1.
inline WalkOperator build_shift(const LatticeBox& box, const ShiftParams& sp) {
  if (sp.dimension() != box.dimension())
    throw std::invalid_argument("build_shift: shift params do not match box dimension");
  WalkOperator op{box, CMatrix::Zero(box.dim(), box.dim()), 1.0};
  for (int s = 0; s < box.site_count(); ++s) {
    for (int j = 0; j < box.dimension(); ++j) {
      Eigen::Index r0 = box.component(s, j, 0);
      Eigen::Index r1 = box.component(s, j, 1);
      op.matrix(r0, r0) = sp.p[j];
      op.matrix(r0, box.component(box.neighbor(s, j, +1), j, 1)) = sp.q[j];
      op.matrix(r1, box.component(box.neighbor(s, j, -1), j, 0)) = std::conj(sp.q[j]);
      op.matrix(r1, r1) = -sp.p[j];
    }
  }
  return op;
}

/// Block-diagonal coin: bulk reflection at every site, the defect
/// reflection at the origin. Declared propagation step 0.
inline WalkOperator build_coin(const LatticeBox& box, const CoinSpec& spec) {
  if (spec.phi.size() != box.legs() || spec.omega.size() != box.legs())
    throw std::invalid_argument("build_coin: coin vectors must have length 2d");
  CMatrix cb = coin_block(spec.phi);
  CMatrix cd = coin_block(spec.omega);
  int origin = box.site_index(std::vector<int>(box.dimension(), 0));
  WalkOperator op{box, CMatrix::Zero(box.dim(), box.dim()), 0.0};
  for (int s = 0; s < box.site_count(); ++s) {
    const CMatrix& c = (s == origin) ? cd : cb;
    op.matrix.block(static_cast<Eigen::Index>(s) * box.legs(), static_cast<Eigen::Index>(s) * box.legs(),
                    box.legs(), box.legs()) = c;
  }
  return op;
}

/// One evolution step U = S * C, assembled entrywise from the sparse
/// structure of S. Declared propagation step 1.
inline WalkOperator build_walk(const LatticeBox& box, const ShiftParams& sp, const CoinSpec& spec) {
  if (sp.dimension() != box.dimension())
    throw std::invalid_argument("build_walk: shift params do not match box dimension");
  if (spec.phi.size() != box.legs() || spec.omega.size() != box.legs())
    throw std::invalid_argument("build_walk: coin vectors must have length 2d");
  CMatrix cb = coin_block(spec.phi);
  CMatrix cd = coin_block(spec.omega);
  int origin = box.site_index(std::vector<int>(box.dimension(), 0));
  int legs = box.legs();

  WalkOperator op{box, CMatrix::Zero(box.dim(), box.dim()), 1.0};
  // U[r, (y, a)] = sum_g S[r, (y, g)] C(y)[g, a]; S has two entries per row
  auto add_row = [&](Eigen::Index r, int site, int leg_flat, Complex s_val) {
    const CMatrix& c = (site == origin) ? cd : cb;
    Eigen::Index base = static_cast<Eigen::Index>(site) * legs;
    for (int a = 0; a < legs; ++a) op.matrix(r, base + a) += s_val * c(leg_flat, a);
  };
  for (int s = 0; s < box.site_count(); ++s) {
    for (int j = 0; j < box.dimension(); ++j) {
      Eigen::Index r0 = box.component(s, j, 0);
      Eigen::Index r1 = box.component(s, j, 1);
      add_row(r0, s, 2 * j + 0, sp.p[j]);
      add_row(r0, box.neighbor(s, j, +1), 2 * j + 1, sp.q[j]);
      add_row(r1, box.neighbor(s, j, -1), 2 * j + 0, std::conj(sp.q[j]));
      add_row(r1, s, 2 * j + 1, -sp.p[j]);
    }
  }
  return op;
}

/// Momentum-space symbol of the defect-free walk at momentum k: the
/// block-diagonal shift symbol times the bulk coin reflection.
struct BlochSymbol {
  RVector k;
  CMatrix matrix;
};

inline BlochSymbol bloch_symbol(const ShiftParams& sp, const CVector& phi, const RVector& k) {
  int d = sp.dimension();
  if (k.size() != d) throw std::invalid_argument("bloch_symbol: momentum does not match dimension");
  if (phi.size() != 2 * d) throw std::invalid_argument("bloch_symbol: coin vector must have length 2d");
  CMatrix s = CMatrix::Zero(2 * d, 2 * d);
  for (int j = 0; j < d; ++j) {
    Complex ph(std::cos(k[j]), std::sin(k[j]));
    s(2 * j, 2 * j) = sp.p[j];
    s(2 * j, 2 * j + 1) = sp.q[j] * ph;
    s(2 * j + 1, 2 * j) = std::conj(sp.q[j]) * std::conj(ph);
    s(2 * j + 1, 2 * j + 1) = -sp.p[j];
  }
  return BlochSymbol{k, s * coin_block(phi)};
}

}  // namespace qwdecay
