#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qwdecay {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

/// Thrown for runtime failures (overflow guards, solver breakdown, bad state).
class qw_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Centered periodic box [-(L-1)/2, (L-1)/2]^d with 2d internal components
/// per site. L must be odd so the box is symmetric around the origin and
/// wraparound hops never shrink |x| by more than one step length.
///
/// Component layout: global index = site * 2d + 2j + s, where j is the axis
/// of the internal leg pair and s in {0,1} selects the leg. Sites are
/// ordered row-major over coordinates, last axis fastest.
class LatticeBox {
 public:
  LatticeBox(int d, int L) : d_(d), L_(L), half_((L - 1) / 2) {
    if (d < 1) throw std::invalid_argument("LatticeBox: dimension must be >= 1");
    if (L < 3) throw std::invalid_argument("LatticeBox: side length must be >= 3");
    if (L % 2 == 0) throw std::invalid_argument("LatticeBox: side length must be odd");

    n_sites_ = 1;
    for (int j = 0; j < d; ++j) {
      if (n_sites_ > 100000000 / L) throw std::invalid_argument("LatticeBox: box too large");
      n_sites_ *= L;
    }

    coords_.resize(static_cast<std::size_t>(n_sites_) * d);
    norms_.resize(n_sites_);
    neighbor_.assign(static_cast<std::size_t>(2 * d) * n_sites_, 0);

    std::vector<int> c(d, -half_);
    for (int s = 0; s < n_sites_; ++s) {
      double r2 = 0.0;
      for (int j = 0; j < d; ++j) {
        coords_[static_cast<std::size_t>(s) * d + j] = c[j];
        r2 += static_cast<double>(c[j]) * c[j];
      }
      norms_[s] = std::sqrt(r2);
      for (int j = 0; j < d; ++j) {
        neighbor_[(static_cast<std::size_t>(2 * j) + 0) * n_sites_ + s] = shifted_site(s, j, +1, c);
        neighbor_[(static_cast<std::size_t>(2 * j) + 1) * n_sites_ + s] = shifted_site(s, j, -1, c);
      }
      // advance mixed-radix counter, last axis fastest
      for (int j = d - 1; j >= 0; --j) {
        if (c[j] < half_) {
          ++c[j];
          break;
        }
        c[j] = -half_;
      }
    }
    max_norm_ = norms_.empty() ? 0.0 : *std::max_element(norms_.begin(), norms_.end());
  }

  int dimension() const { return d_; }
  int side() const { return L_; }
  int half() const { return half_; }
  int site_count() const { return n_sites_; }
  int legs() const { return 2 * d_; }
  /// Hilbert-space dimension 2d * L^d.
  Eigen::Index dim() const { return static_cast<Eigen::Index>(n_sites_) * 2 * d_; }

  int coord(int site, int axis) const { return coords_[static_cast<std::size_t>(site) * d_ + axis]; }
  double site_norm(int site) const { return norms_[site]; }
  double max_norm() const { return max_norm_; }

  /// Site reached from `site` by one step along `axis` (step = +1 or -1),
  /// with periodic wraparound.
  int neighbor(int site, int axis, int step) const {
    return neighbor_[(static_cast<std::size_t>(2 * axis) + (step > 0 ? 0 : 1)) * n_sites_ + site];
  }

  int site_index(const std::vector<int>& c) const {
    int idx = 0;
    for (int j = 0; j < d_; ++j) {
      int w = wrap(c[j]) + half_;
      idx = idx * L_ + w;
    }
    return idx;
  }

  /// Global component index for (site, leg axis j, leg s).
  Eigen::Index component(int site, int j, int s) const {
    return static_cast<Eigen::Index>(site) * 2 * d_ + 2 * j + s;
  }
  int component_site(Eigen::Index g) const { return static_cast<int>(g / (2 * d_)); }

  /// Wrap a coordinate into [-(L-1)/2, (L-1)/2].
  int wrap(int c) const {
    int m = (c + half_) % L_;
    if (m < 0) m += L_;
    return m - half_;
  }

 private:
  int shifted_site(int s, int axis, int step, const std::vector<int>& c) const {
    int idx = 0;
    for (int j = 0; j < d_; ++j) {
      int cj = (j == axis) ? wrap(c[j] + step) : c[j];
      idx = idx * L_ + (cj + half_);
    }
    return idx;
  }

  int d_;
  int L_;
  int half_;
  int n_sites_;
  std::vector<int> coords_;
  std::vector<double> norms_;
  std::vector<int> neighbor_;
  double max_norm_;
};

inline LatticeBox build_box(int d, int L) { return LatticeBox(d, L); }

/// State vector on a box; block layout follows LatticeBox::component.
using WaveFunction = CVector;

/// Real diagonal operator with one value per lattice site, broadcast over
/// the 2d internal components.
struct DiagonalWeight {
  RVector site_values;

  /// Full diagonal of length box.dim().
  RVector full_diagonal(const LatticeBox& box) const {
    RVector out(box.dim());
    for (int s = 0; s < box.site_count(); ++s)
      for (int c = 0; c < box.legs(); ++c) out[static_cast<Eigen::Index>(s) * box.legs() + c] = site_values[s];
    return out;
  }
};

/// Orthogonal projector onto sites with |x| in [r_lo, r_hi), as a 0/1
/// diagonal weight. r_hi may be infinity.
inline DiagonalWeight shell_projector(const LatticeBox& box, double r_lo, double r_hi) {
  if (!(r_lo >= 0.0)) throw std::invalid_argument("shell_projector: lower radius must be >= 0");
  if (!(r_hi > r_lo)) throw std::invalid_argument("shell_projector: need r_hi > r_lo");
  DiagonalWeight w;
  w.site_values.resize(box.site_count());
  for (int s = 0; s < box.site_count(); ++s) {
    double r = box.site_norm(s);
    w.site_values[s] = (r >= r_lo && r < r_hi) ? 1.0 : 0.0;
  }
  return w;
}

/// Smallest positive multiple of b that is >= x. Requires x > 0, b > 0.
inline double ceil_to_multiple(double x, double b) {
  if (!(x > 0.0)) throw std::invalid_argument("ceil_to_multiple: x must be > 0");
  if (!(b > 0.0)) throw std::invalid_argument("ceil_to_multiple: b must be > 0");
  long long n = static_cast<long long>(std::ceil(x / b));
  if (n < 1) n = 1;
  // repair floating-point rounding in the division
  while (n > 1 && (static_cast<double>(n) - 1.0) * b >= x) --n;
  while (static_cast<double>(n) * b < x) ++n;
  return static_cast<double>(n) * b;
}

/// Value of the step weight at radius r: delta * n * b on the shell
/// [(n-1)b, nb). Satisfies delta*r <= value <= delta*(r+b).
inline double step_weight_value(double r, double delta, double b) {
  if (!(r >= 0.0)) throw std::invalid_argument("step_weight_value: radius must be >= 0");
  if (!(delta > 0.0)) throw std::invalid_argument("step_weight_value: delta must be > 0");
  if (!(b > 0.0)) throw std::invalid_argument("step_weight_value: b must be > 0");
  long long n = static_cast<long long>(std::floor(r / b)) + 1;
  if (n < 1) n = 1;
  while (n > 1 && r < (static_cast<double>(n) - 1.0) * b) --n;
  while (r >= static_cast<double>(n) * b) ++n;
  return delta * static_cast<double>(n) * b;
}

/// Step weight capped at the plateau delta * N * b from shell N on.
inline double step_weight_value_truncated(double r, double delta, double b, int N) {
  if (N < 1) throw std::invalid_argument("step_weight_value_truncated: N must be >= 1");
  double full = step_weight_value(r, delta, b);
  double cap = delta * static_cast<double>(N) * b;
  return std::min(full, cap);
}

/// Per-site step weight delta * n * b over shells of width b.
inline DiagonalWeight step_weight(const LatticeBox& box, double delta, double b) {
  DiagonalWeight w;
  w.site_values.resize(box.site_count());
  for (int s = 0; s < box.site_count(); ++s) w.site_values[s] = step_weight_value(box.site_norm(s), delta, b);
  return w;
}

/// Truncated step weight, constant delta * N * b outside the first N shells.
inline DiagonalWeight step_weight_truncated(const LatticeBox& box, double delta, double b, int N) {
  DiagonalWeight w;
  w.site_values.resize(box.site_count());
  for (int s = 0; s < box.site_count(); ++s)
    w.site_values[s] = step_weight_value_truncated(box.site_norm(s), delta, b, N);
  return w;
}

/// Entrywise exponential exp(sign * w). Refuses arguments beyond `cap`
/// to keep exp() away from overflow.
inline DiagonalWeight exp_weight(const DiagonalWeight& w, int sign = +1, double cap = 700.0) {
  if (sign != 1 && sign != -1) throw std::invalid_argument("exp_weight: sign must be +1 or -1");
  DiagonalWeight out;
  out.site_values.resize(w.site_values.size());
  for (Eigen::Index i = 0; i < w.site_values.size(); ++i) {
    double v = w.site_values[i];
    if (std::abs(v) > cap)
      throw qw_error("exp_weight: weight magnitude " + std::to_string(v) +
                     " exceeds the overflow cap " + std::to_string(cap) +
                     "; lower delta or shrink the box");
    out.site_values[i] = std::exp(sign * v);
  }
  return out;
}

/// Per-site probability mass |psi(x)|^2 summed over internal components.
inline RVector site_masses(const LatticeBox& box, const WaveFunction& psi) {
  if (psi.size() != box.dim()) throw std::invalid_argument("site_masses: vector does not match box");
  RVector m = RVector::Zero(box.site_count());
  for (Eigen::Index g = 0; g < psi.size(); ++g) m[box.component_site(g)] += std::norm(psi[g]);
  return m;
}

}  // namespace qwdecay
