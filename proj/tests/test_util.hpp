// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfmimo/cfmimo.hpp"

#include <cmath>
#include <cstdint>

namespace cfmimo::test {

/// Random channels with unit-ish large-scale gains, for solver tests that do
/// not care about geometry.
inline ChannelSet random_channels(const Dims& d, std::uint64_t seed, double gain_lo = 0.3,
                                  double gain_hi = 2.0) {
  Rng rng(seed);
  RMat delta(static_cast<Eigen::Index>(d.num_bs), static_cast<Eigen::Index>(d.num_ue));
  for (Eigen::Index b = 0; b < delta.rows(); ++b)
    for (Eigen::Index k = 0; k < delta.cols(); ++k) delta(b, k) = rng.uniform(gain_lo, gain_hi);
  return draw_channels_with_gains(d, delta, seed + 1);
}

inline CMat random_cmat(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                        double variance = 1.0) {
  Rng rng(seed);
  return rng.complex_normal(rows, cols, variance);
}

inline CVec random_cvec(Eigen::Index n, std::uint64_t seed, double variance = 1.0) {
  return random_cmat(n, 1, seed, variance).col(0);
}

inline double rel_diff(const CMat& a, const CMat& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale > 0 ? (a - b).norm() / scale : 0.0;
}

/// 1 - |<a, b>| / (|a| |b|)
inline double cosine_distance(const CVec& a, const CVec& b) {
  return 1.0 - std::abs(a.dot(b)) / (a.norm() * b.norm());
}

}  // namespace cfmimo::test
