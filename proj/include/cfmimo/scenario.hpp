// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfmimo/common.hpp"
#include "cfmimo/config.hpp"
#include "cfmimo/rng.hpp"

#include <array>
#include <cmath>

namespace cfmimo {

using Point = std::array<double, 2>;

struct NetworkGeometry {
  std::vector<Point> bs_positions;
  std::vector<Point> ue_positions;
  RMat distances;  // B x K, meters
};

/// Aggregate UL channels. H[k] is BM x N, BS-major: rows b*M .. b*M+M-1 are H_{b,k}.
struct ChannelSet {
  Dims dims;
  std::vector<CMat> H;
  RMat delta;  // B x K large-scale power gains

  /// The standalone M x N block H_{b,k}.
  CMat block(std::size_t b, std::size_t k) const {
    const auto m = static_cast<Eigen::Index>(dims.antennas_per_bs);
    return H[k].middleRows(static_cast<Eigen::Index>(b) * m, m);
  }
};

/// Large-scale gain -61.3 - 30 log10(d) - 20 log10(fc[GHz]) dB, as a linear power ratio.
inline double pathloss_db(double distance_m, double carrier_ghz) {
  if (!(distance_m > 0)) throw DomainError("pathloss: distance must be positive");
  if (!(carrier_ghz > 0)) throw DomainError("pathloss: carrier frequency must be positive");
  return -61.3 - 30.0 * std::log10(distance_m) - 20.0 * std::log10(carrier_ghz);
}

inline double pathloss_linear(double distance_m, double carrier_ghz) {
  return std::pow(10.0, pathloss_db(distance_m, carrier_ghz) / 10.0);
}

inline std::size_t grid_side(std::size_t num_bs) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(num_bs))));
  if (side * side != num_bs)
    throw ConfigError("num_bs must be a perfect square (got " + std::to_string(num_bs) + ")");
  return side;
}

/// BS-UE distances, never below `min_distance`.
inline RMat compute_distances(const std::vector<Point>& bs, const std::vector<Point>& ue,
                              double min_distance) {
  RMat d(static_cast<Eigen::Index>(bs.size()), static_cast<Eigen::Index>(ue.size()));
  for (std::size_t b = 0; b < bs.size(); ++b)
    for (std::size_t k = 0; k < ue.size(); ++k) {
      const double dist = std::hypot(bs[b][0] - ue[k][0], bs[b][1] - ue[k][1]);
      d(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = std::max(dist, min_distance);
    }
  return d;
}

/// BSs on a sqrt(B) x sqrt(B) grid starting at the origin; UEs uniform over the
/// grid's square (a spacing-wide square around the BS when B = 1). UEs closer
/// than min_bs_ue_distance to any BS are redrawn.
inline NetworkGeometry generate_geometry(const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t side = grid_side(cfg.num_bs);
  NetworkGeometry g;
  g.bs_positions.reserve(cfg.num_bs);
  for (std::size_t iy = 0; iy < side; ++iy)
    for (std::size_t ix = 0; ix < side; ++ix)
      g.bs_positions.push_back({static_cast<double>(ix) * cfg.grid_spacing,
                                static_cast<double>(iy) * cfg.grid_spacing});

  double lo = 0.0;
  double hi = static_cast<double>(side - 1) * cfg.grid_spacing;
  if (side == 1) {
    lo = -cfg.grid_spacing / 2.0;
    hi = cfg.grid_spacing / 2.0;
  }

  Rng rng(derive_seed(seed, {tag(StreamTag::Geometry)}));
  g.ue_positions.reserve(cfg.num_ue);
  constexpr int kMaxRedraws = 100000;
  for (std::size_t k = 0; k < cfg.num_ue; ++k) {
    Point p{};
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == kMaxRedraws)
        throw ConfigError("min_bs_ue_distance leaves no admissible UE position");
      p = {rng.uniform(lo, hi), rng.uniform(lo, hi)};
      bool ok = true;
      for (const auto& bs : g.bs_positions)
        if (std::hypot(bs[0] - p[0], bs[1] - p[1]) < cfg.min_bs_ue_distance) ok = false;
      if (ok) break;
    }
    g.ue_positions.push_back(p);
  }
  g.distances = compute_distances(g.bs_positions, g.ue_positions, cfg.min_bs_ue_distance);
  return g;
}

/// Channels for given large-scale gains; block (b, k) comes from its own stream.
inline ChannelSet draw_channels_with_gains(const Dims& d, const RMat& delta, std::uint64_t seed) {
  ChannelSet ch;
  ch.dims = d;
  ch.delta = delta;
  const auto m = static_cast<Eigen::Index>(d.antennas_per_bs);
  const auto n = static_cast<Eigen::Index>(d.antennas_per_ue);
  ch.H.assign(d.num_ue, CMat::Zero(static_cast<Eigen::Index>(d.bs_antennas()), n));
  for (std::size_t k = 0; k < d.num_ue; ++k)
    for (std::size_t b = 0; b < d.num_bs; ++b) {
      const auto bi = static_cast<Eigen::Index>(b);
      Rng rng(derive_seed(seed, {tag(StreamTag::Channels), b, k}));
      ch.H[k].middleRows(bi * m, m) =
          rng.complex_normal(m, n, delta(bi, static_cast<Eigen::Index>(k)));
    }
  return ch;
}

/// i.i.d. CN(0, delta_{b,k}) entries per block, delta from the pathloss model.
inline ChannelSet draw_channels(const NetworkGeometry& geometry, const ScenarioConfig& cfg,
                                std::uint64_t seed) {
  const Dims d = cfg.dims();
  if (geometry.bs_positions.size() != d.num_bs || geometry.ue_positions.size() != d.num_ue ||
      static_cast<std::size_t>(geometry.distances.rows()) != d.num_bs ||
      static_cast<std::size_t>(geometry.distances.cols()) != d.num_ue)
    throw ConfigError("geometry does not match the configured dimensions");

  RMat delta(static_cast<Eigen::Index>(d.num_bs), static_cast<Eigen::Index>(d.num_ue));
  for (Eigen::Index b = 0; b < delta.rows(); ++b)
    for (Eigen::Index k = 0; k < delta.cols(); ++k)
      delta(b, k) = pathloss_linear(geometry.distances(b, k), cfg.carrier_freq);
  return draw_channels_with_gains(d, delta, seed);
}

}  // namespace cfmimo
