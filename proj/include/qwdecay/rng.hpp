#pragma once

#include "qwdecay/lattice.hpp"

#include <cmath>
#include <random>

namespace qwdecay {

// std::uniform_real_distribution and friends are implementation-defined, so
// reproducible streams are built directly from mt19937_64 output here.

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Complex Gaussian with independent standard normal parts, via Box-Muller.
inline Complex complex_gaussian(std::mt19937_64& gen) {
  double u1 = uniform01(gen);
  // u1 = 0 would send log to -inf; nudge into (0, 1]
  double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  double t = 2.0 * M_PI * uniform01(gen);
  return Complex(r * std::cos(t), r * std::sin(t));
}

/// Random unit vector supported exactly on the sites flagged by `mask`
/// (one flag per site, all internal components populated).
inline WaveFunction random_unit_on_support(const LatticeBox& box, const DiagonalWeight& mask,
                                           std::mt19937_64& gen) {
  WaveFunction f = WaveFunction::Zero(box.dim());
  bool any = false;
  for (int s = 0; s < box.site_count(); ++s) {
    if (mask.site_values[s] == 0.0) continue;
    any = true;
    for (int c = 0; c < box.legs(); ++c)
      f[static_cast<Eigen::Index>(s) * box.legs() + c] = complex_gaussian(gen);
  }
  if (!any) throw qw_error("random_unit_on_support: empty support");
  double n = f.norm();
  if (n == 0.0) throw qw_error("random_unit_on_support: degenerate draw");
  f /= n;
  return f;
}

}  // namespace qwdecay
