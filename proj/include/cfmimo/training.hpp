// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfmimo/common.hpp"
#include "cfmimo/config.hpp"
#include "cfmimo/metrics.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/scheme.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <optional>

namespace cfmimo {

/// One pilot per stream as the columns of `p` (tau x KS), each with squared norm tau.
struct PilotBook {
  CMat p;
  std::size_t tau = 0;

  CVec pilot(std::size_t stream) const { return p.col(static_cast<Eigen::Index>(stream)); }
};

/// Received UL pilot block across all BSs (BM x tau).
struct UlObservation {
  CMat y;
  double noise_var = 0.0;  // variance of the pilot noise actually added
};

/// Received DL pilot blocks, one N x tau matrix per UE.
struct DlObservation {
  std::vector<CMat> y;
  double noise_var = 0.0;
};

/// Orthogonal mode: columns of the tau x tau DFT matrix (unscaled, so each has
/// squared norm tau). Random mode: i.i.d. unit-modulus entries.
inline PilotBook make_pilots(std::size_t num_ue, std::size_t streams_per_ue, std::size_t tau,
                             PilotMode mode, std::uint64_t seed) {
  const std::size_t ks = num_ue * streams_per_ue;
  if (tau == 0) throw ConfigError("pilot length must be positive");
  if (mode == PilotMode::Orthogonal && tau < ks)
    throw ConfigError("orthogonal pilots need tau >= K*S (tau=" + std::to_string(tau) +
                      ", K*S=" + std::to_string(ks) + ")");
  PilotBook book{CMat(static_cast<Eigen::Index>(tau), static_cast<Eigen::Index>(ks)), tau};
  if (mode == PilotMode::Orthogonal) {
    for (std::size_t c = 0; c < ks; ++c)
      for (std::size_t r = 0; r < tau; ++r) {
        // reduce the phase index first so large tau keeps full accuracy
        const double phase = -2.0 * std::numbers::pi * static_cast<double>((r * c) % tau) /
                             static_cast<double>(tau);
        book.p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::polar(1.0, phase);
      }
  } else {
    Rng rng(derive_seed(seed, {tag(StreamTag::Pilots)}));
    for (Eigen::Index c = 0; c < book.p.cols(); ++c)
      for (Eigen::Index r = 0; r < book.p.rows(); ++r)
        book.p(r, c) = std::polar(1.0, rng.uniform(-std::numbers::pi, std::numbers::pi));
  }
  return book;
}

/// Y_ul = sum_k H_k X_k + Z with X_k = sum_s v_{s,k} p_{s,k}^H.
inline UlObservation ul_pilot_phase(const ChannelSet& ch, const CMat& v, const PilotBook& pilots,
                                    double noise_var, std::uint64_t seed) {
  UlObservation obs{effective_ul_channels(ch, v) * pilots.p.adjoint(), noise_var};
  if (noise_var > 0) {
    Rng rng(seed);
    obs.y += rng.complex_normal(obs.y.rows(), obs.y.cols(), noise_var);
  }
  return obs;
}

/// LS estimate (1/tau) Y p of one effective UL channel.
inline CVec ls_estimate(const CMat& y_ul, const CVec& pilot, std::size_t tau) {
  return y_ul * pilot / static_cast<double>(tau);
}

/// All LS estimates at once, one column per stream.
inline CMat ls_estimate_all(const CMat& y_ul, const PilotBook& pilots) {
  return y_ul * pilots.p / static_cast<double>(pilots.tau);
}

/// Y_k = H_k^H X + Z_k with X = sum a_{s,k} w_{s,k} p_{s,k}^H. `amplitudes`
/// are the per-stream weights (all ones for DL-1, sqrt of the UL duals for
/// DL-2, sqrt(a) for the heuristic).
inline DlObservation dl_pilot_phase(const ChannelSet& ch, const CMat& w, const PilotBook& pilots,
                                    const std::optional<RVec>& amplitudes, double noise_var,
                                    std::uint64_t seed) {
  const Dims& d = ch.dims;
  CMat x = w;
  if (amplitudes) {
    if (amplitudes->size() != w.cols()) throw DomainError("dl_pilot_phase: weight count mismatch");
    if ((amplitudes->array() < 0).any()) throw DomainError("dl_pilot_phase: negative weight");
    x = w * amplitudes->asDiagonal();
  }
  const CMat x_dl = x * pilots.p.adjoint();  // BM x tau
  DlObservation obs{{}, noise_var};
  obs.y.reserve(d.num_ue);
  Rng rng(seed);
  for (std::size_t k = 0; k < d.num_ue; ++k) {
    CMat y = ch.H[k].adjoint() * x_dl;
    if (noise_var > 0) y += rng.complex_normal(y.rows(), y.cols(), noise_var);
    obs.y.push_back(std::move(y));
  }
  return obs;
}

/// Square roots of nonnegative weights; negative numerical dust is clipped to 0.
inline RVec sqrt_weights(const RVec& values) { return values.cwiseMax(0.0).cwiseSqrt(); }

/// Pilot blocks spent per bi-directional iteration, and their cost in slots.
struct OverheadModel {
  std::map<Scheme, double> blocks_per_iter{
      {Scheme::JointOpt, 3.0},  // UL + DL-1 + DL-2
      {Scheme::JointHeur, 2.0}, // UL + DL-2
      {Scheme::DlOpt, 2.0},     // UL + DL-1
      {Scheme::UlOpt, 2.0},     // UL + DL-2
      {Scheme::UlHeur, 2.0},    // UL + DL-2
  };
  double slots_per_pilot_block = 0.5;

  static OverheadModel from_config(const TrainingConfig& tc) {
    OverheadModel m;
    m.slots_per_pilot_block = tc.slots_per_pilot_block;
    for (const auto& [name, blocks] : tc.pilot_blocks_override) {
      const Scheme s = parse_scheme(name);
      if (is_separate(s))
        throw ConfigError("separate schemes take the sum of their constituents' blocks");
      if (!(blocks > 0)) throw ConfigError("pilot block counts must be positive");
      m.blocks_per_iter[s] = blocks;
    }
    return m;
  }

  double blocks(Scheme s) const {
    if (is_separate(s)) {
      const auto [dl, ul] = separate_parts(s);
      return blocks(dl) + blocks(ul);
    }
    const auto it = blocks_per_iter.find(s);
    if (it == blocks_per_iter.end())
      throw ConfigError("no pilot block count for scheme '" + std::string(scheme_name(s)) + "'");
    return it->second;
  }
};

inline double overhead_slots(Scheme s, std::size_t iters, const OverheadModel& model) {
  return static_cast<double>(iters) * model.blocks(s) * model.slots_per_pilot_block;
}

inline double effective_rate(double rate, std::size_t iters, Scheme s, const OverheadModel& model,
                             double block_slots) {
  return effective_rate(rate, overhead_slots(s, iters, model), block_slots);
}

}  // namespace cfmimo
