// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfmimo/common.hpp"
#include "cfmimo/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cfmimo {

/// BS beamformers as columns of `w` (BM x KS) and UE beamformers as columns of
/// `v` (N x KS); column Dims::stream(s, k) belongs to stream s of UE k.
struct BeamformerSet {
  CMat w;
  CMat v;

  static BeamformerSet zeros(const Dims& d) {
    const auto ks = static_cast<Eigen::Index>(d.num_streams());
    return {CMat::Zero(static_cast<Eigen::Index>(d.bs_antennas()), ks),
            CMat::Zero(static_cast<Eigen::Index>(d.antennas_per_ue), ks)};
  }
};

/// Linear SINRs indexed [s, k].
struct SinrTable {
  RMat dl;
  RMat ul;
};

struct RateSummary {
  RVec dl;  // per-UE bits/s/Hz
  RVec ul;
  double min_dl = 0.0;
  double min_ul = 0.0;
  double objective = 0.0;
};

struct PowerAudit {
  RVec bs;  // per-BS sum power
  RVec ue;  // per-UE sum power

  bool feasible(double rho_bs, double rho_ue, double rel_tol = 1e-9) const {
    return (bs.array() <= rho_bs * (1.0 + rel_tol)).all() &&
           (ue.array() <= rho_ue * (1.0 + rel_tol)).all();
  }
};

/// E_b w: the M entries of `w` owned by BS b (zero-based).
inline CVec extract_bs_block(const CVec& w, std::size_t b, std::size_t antennas_per_bs) {
  const auto m = static_cast<Eigen::Index>(antennas_per_bs);
  const auto start = static_cast<Eigen::Index>(b) * m;
  if (start + m > w.size()) throw DomainError("extract_bs_block: BS index out of range");
  return w.segment(start, m);
}

/// Effective UL channels h_{s,k} = H_k v_{s,k}, one column per stream.
inline CMat effective_ul_channels(const ChannelSet& ch, const CMat& v) {
  const Dims& d = ch.dims;
  CMat h(static_cast<Eigen::Index>(d.bs_antennas()), static_cast<Eigen::Index>(d.num_streams()));
  for (std::size_t k = 0; k < d.num_ue; ++k)
    for (std::size_t s = 0; s < d.streams_per_ue; ++s) {
      const auto i = static_cast<Eigen::Index>(d.stream(s, k));
      h.col(i) = ch.H[k] * v.col(i);
    }
  return h;
}

/// Effective DL channels g_{s,k} = H_k^H w_{s,k}, one column per stream.
inline CMat effective_dl_channels(const ChannelSet& ch, const CMat& w) {
  const Dims& d = ch.dims;
  CMat g(static_cast<Eigen::Index>(d.antennas_per_ue), static_cast<Eigen::Index>(d.num_streams()));
  for (std::size_t k = 0; k < d.num_ue; ++k)
    for (std::size_t s = 0; s < d.streams_per_ue; ++s) {
      const auto i = static_cast<Eigen::Index>(d.stream(s, k));
      g.col(i) = ch.H[k].adjoint() * w.col(i);
    }
  return g;
}

/// What to report for a stream whose receive beamformer is exactly zero
/// while nothing else reaches the denominator either.
enum class DeadStream { Throw, ZeroSinr };

/// SINRs from effective UL channels. Both directions only depend on the
/// cross gains h_i^H w_j, so this also serves the CPU, which sees estimated
/// effective channels and the UE beamformer norms.
inline SinrTable sinr_from_effective(const Dims& d, const CMat& h_eff, const CMat& w,
                                     const RVec& v_norm2, double sigma2_ue, double sigma2_bs,
                                     DeadStream dead = DeadStream::Throw) {
  const auto ks = static_cast<Eigen::Index>(d.num_streams());
  const RMat gain = (h_eff.adjoint() * w).cwiseAbs2();  // gain(i, j) = |h_i^H w_j|^2
  SinrTable t{RMat(d.streams_per_ue, d.num_ue), RMat(d.streams_per_ue, d.num_ue)};
  for (Eigen::Index i = 0; i < ks; ++i) {
    double dl_interf = 0.0;
    double ul_interf = 0.0;
    for (Eigen::Index j = 0; j < ks; ++j) {
      if (j == i) continue;
      dl_interf += gain(i, j);
      ul_interf += gain(j, i);
    }
    const double dl_den = dl_interf + sigma2_ue * v_norm2(i);
    const double ul_den = ul_interf + sigma2_bs * w.col(i).squaredNorm();
    const auto s = i % static_cast<Eigen::Index>(d.streams_per_ue);
    const auto k = i / static_cast<Eigen::Index>(d.streams_per_ue);
    if (dead == DeadStream::ZeroSinr && gain(i, i) == 0.0 && std::isfinite(dl_den) &&
        std::isfinite(ul_den)) {
      t.dl(s, k) = 0.0;
      t.ul(s, k) = 0.0;
      continue;
    }
    if (!(dl_den > 0) || !(ul_den > 0) || !std::isfinite(dl_den) || !std::isfinite(ul_den))
      throw NumericalError("SINR undefined for stream " + std::to_string(i) +
                           ": zero interference-plus-noise");
    t.dl(s, k) = gain(i, i) / dl_den;
    t.ul(s, k) = gain(i, i) / ul_den;
  }
  return t;
}

inline SinrTable compute_sinr(const ChannelSet& ch, const BeamformerSet& bf, double sigma2_ue,
                              double sigma2_bs, DeadStream dead = DeadStream::Throw) {
  const RVec v_norm2 = bf.v.colwise().squaredNorm().transpose();
  return sinr_from_effective(ch.dims, effective_ul_channels(ch, bf.v), bf.w, v_norm2, sigma2_ue,
                             sigma2_bs, dead);
}

/// Which constraints enter the min-rate objective.
struct DirectionMask {
  bool dl = true;
  bool ul = true;
};

/// Weighted max-min value min(alpha min_k R_dl, (1-alpha) min_k R_ul). A
/// masked-out direction is dropped from the min instead of weighted by zero.
inline double weighted_objective(double min_dl, double min_ul, double alpha,
                                 DirectionMask mask = {}) {
  if (mask.dl && mask.ul) return std::min(alpha * min_dl, (1.0 - alpha) * min_ul);
  if (mask.dl) return min_dl;
  if (mask.ul) return min_ul;
  return 0.0;
}

inline RVec per_ue_rates(const RMat& sinr) {
  RVec r(sinr.cols());
  for (Eigen::Index k = 0; k < sinr.cols(); ++k) {
    double acc = 0.0;
    for (Eigen::Index s = 0; s < sinr.rows(); ++s) {
      if (sinr(s, k) < 0) throw DomainError("negative SINR");
      acc += std::log2(1.0 + sinr(s, k));
    }
    r(k) = acc;
  }
  return r;
}

inline RateSummary compute_rates(const SinrTable& sinr, double alpha, DirectionMask mask = {}) {
  RateSummary r;
  r.dl = per_ue_rates(sinr.dl);
  r.ul = per_ue_rates(sinr.ul);
  r.min_dl = r.dl.size() ? r.dl.minCoeff() : 0.0;
  r.min_ul = r.ul.size() ? r.ul.minCoeff() : 0.0;
  r.objective = weighted_objective(r.min_dl, r.min_ul, alpha, mask);
  return r;
}

inline PowerAudit power_audit(const Dims& d, const BeamformerSet& bf) {
  PowerAudit a{RVec::Zero(static_cast<Eigen::Index>(d.num_bs)),
               RVec::Zero(static_cast<Eigen::Index>(d.num_ue))};
  const auto m = static_cast<Eigen::Index>(d.antennas_per_bs);
  for (Eigen::Index b = 0; b < a.bs.size(); ++b)
    a.bs(b) = bf.w.middleRows(b * m, m).squaredNorm();
  const RVec col = bf.v.colwise().squaredNorm().transpose();
  for (std::size_t k = 0; k < d.num_ue; ++k)
    a.ue(static_cast<Eigen::Index>(k)) =
        col.segment(static_cast<Eigen::Index>(d.stream(0, k)),
                    static_cast<Eigen::Index>(d.streams_per_ue))
            .sum();
  return a;
}

/// Rate left after training: max(0, 1 - overhead/block) * rate.
inline double effective_rate(double rate, double overhead_slots, double block_slots) {
  if (!(block_slots >= 1.0)) throw DomainError("effective_rate: block_slots must be >= 1");
  if (overhead_slots < 0) throw DomainError("effective_rate: negative overhead");
  return std::max(0.0, 1.0 - overhead_slots / block_slots) * rate;
}

}  // namespace cfmimo
