// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfmimo/common.hpp"
#include "cfmimo/config.hpp"
#include "cfmimo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cfmimo {

/// SCA linearization point: SINR iterates (indexed [s, k]) and the beamformers
/// they were measured at.
struct OperatingPoint {
  RMat gamma;      // DL
  RMat gamma_bar;  // UL
  CMat w_prev;
  CMat v_prev;
};

/// Dual variables of the BS subproblem. eta/zeta belong to the per-UE DL/UL
/// rate constraints, nu/mu ([s, k]) to the convexified SINR constraints and
/// lambda to the per-BS power constraints.
struct BsDualState {
  RVec eta;
  RVec zeta;
  RMat nu;
  RMat mu;
  RVec lambda;
  /// Reference magnitude for the lambda step; set on the first SCA step.
  double lambda_scale = 0.0;

  /// Uniform weight over the active rate constraints, zero BS power duals.
  static BsDualState initial(const Dims& d, DirectionMask mask) {
    const auto k = static_cast<Eigen::Index>(d.num_ue);
    const double active = static_cast<double>(d.num_ue) * ((mask.dl ? 1 : 0) + (mask.ul ? 1 : 0));
    BsDualState s;
    s.eta = RVec::Constant(k, mask.dl ? 1.0 / active : 0.0);
    s.zeta = RVec::Constant(k, mask.ul ? 1.0 / active : 0.0);
    s.nu = RMat::Zero(static_cast<Eigen::Index>(d.streams_per_ue), k);
    s.mu = RMat::Zero(static_cast<Eigen::Index>(d.streams_per_ue), k);
    s.lambda = RVec::Zero(static_cast<Eigen::Index>(d.num_bs));
    return s;
  }
};

// ---------------------------------------------------------------------------
// Surrogates. With x = h^H w, the ratio |x|^2 / gamma is jointly convex in
// (x, gamma), so its first-order expansion at (x0, gamma0) minorizes it.

inline double quadratic_over_linear_tangent(cplx x, cplx x0, double gamma, double gamma0) {
  if (!(gamma0 > 0)) throw DomainError("surrogate: operating-point SINR must be positive");
  return -std::norm(x0) / gamma0 * (gamma / gamma0) + 2.0 * std::real(std::conj(x0) * x) / gamma0;
}

/// p = |v^H H^H w|^2 / gamma with h = H v.
inline double exact_p(const CVec& w, double gamma, const CVec& h) {
  return std::norm(h.dot(w)) / gamma;
}

/// Tangent minorant of p at (w_op, gamma_op).
inline double surrogate_p(const CVec& w, double gamma, const CVec& w_op, double gamma_op,
                          const CVec& h) {
  return quadratic_over_linear_tangent(h.dot(w), h.dot(w_op), gamma, gamma_op);
}

/// q = |w^H H v|^2 / gamma_bar, identical in form to p with the UL SINR variable.
inline double exact_q(const CVec& w, double gamma_bar, const CVec& h) {
  return std::norm(w.dot(h)) / gamma_bar;
}

inline double surrogate_q(const CVec& w, double gamma_bar, const CVec& w_op, double gamma_bar_op,
                          const CVec& h) {
  // w^H h = conj(h^H w); only |.|^2 and Re{conj(x0) x} enter, both conjugation invariant
  return quadratic_over_linear_tangent(std::conj(w.dot(h)), std::conj(w_op.dot(h)), gamma_bar,
                                       gamma_bar_op);
}

// ---------------------------------------------------------------------------
// Rate-constraint duals.

/// Sub-gradient step eta_k - delta (alpha R_dl_k - R), zeta_k - delta ((1-alpha) R_ul_k - R),
/// without projection. Masked-out directions are held at zero.
inline void common_duals_step(RVec& eta, RVec& zeta, const RVec& rate_dl, const RVec& rate_ul,
                              double common_rate, double alpha, double delta, DirectionMask mask) {
  if (!(delta > 0)) throw DomainError("sub-gradient step must be positive");
  // a dropped direction leaves the other with weight 1 instead of alpha
  const double wdl = mask.ul ? alpha : 1.0;
  const double wul = mask.dl ? 1.0 - alpha : 1.0;
  if (mask.dl) eta.array() -= delta * (wdl * rate_dl.array() - common_rate);
  else eta.setZero();
  if (mask.ul) zeta.array() -= delta * (wul * rate_ul.array() - common_rate);
  else zeta.setZero();
}

/// Clips negatives and rescales (eta, zeta) to sum 1. An all-zero vector
/// falls back to the uniform point over the active directions.
inline void project_common_duals(RVec& eta, RVec& zeta, DirectionMask mask) {
  eta = eta.cwiseMax(0.0);
  zeta = zeta.cwiseMax(0.0);
  if (!mask.dl) eta.setZero();
  if (!mask.ul) zeta.setZero();
  const double total = eta.sum() + zeta.sum();
  if (total > 0 && std::isfinite(total)) {
    eta /= total;
    zeta /= total;
    return;
  }
  const double active =
      static_cast<double>(eta.size()) * ((mask.dl ? 1 : 0) + (mask.ul ? 1 : 0));
  if (mask.dl) eta.setConstant(1.0 / active);
  if (mask.ul) zeta.setConstant(1.0 / active);
}

inline void update_common_duals(BsDualState& state, const RVec& rate_dl, const RVec& rate_ul,
                                double common_rate, double alpha, double delta,
                                DirectionMask mask = {}) {
  common_duals_step(state.eta, state.zeta, rate_dl, rate_ul, common_rate, alpha, delta, mask);
  project_common_duals(state.eta, state.zeta, mask);
}

/// Multiplicative step on the simplex. The rate gap of each constraint is
/// measured relative to the mean weighted rate so the step is scale free;
/// the exponent is clamped to keep the weights representable.
inline void exponentiated_duals_step(RVec& eta, RVec& zeta, const RVec& rate_dl,
                                     const RVec& rate_ul, double common_rate, double alpha,
                                     double delta, DirectionMask mask) {
  if (!(delta > 0)) throw DomainError("dual step must be positive");
  const double wdl = mask.ul ? alpha : 1.0;
  const double wul = mask.dl ? 1.0 - alpha : 1.0;
  double mean = 0.0;
  int count = 0;
  if (mask.dl) {
    mean += wdl * rate_dl.sum();
    count += static_cast<int>(rate_dl.size());
  }
  if (mask.ul) {
    mean += wul * rate_ul.sum();
    count += static_cast<int>(rate_ul.size());
  }
  mean = count > 0 ? mean / count : 0.0;
  const double scale = mean > 0 && std::isfinite(mean) ? mean : 1.0;
  const auto factor = [&](double weighted_rate) {
    return std::exp(std::clamp(-delta * (weighted_rate - common_rate) / scale, -30.0, 30.0));
  };
  if (mask.dl)
    for (Eigen::Index k = 0; k < eta.size(); ++k) eta(k) *= factor(wdl * rate_dl(k));
  else
    eta.setZero();
  if (mask.ul)
    for (Eigen::Index k = 0; k < zeta.size(); ++k) zeta(k) *= factor(wul * rate_ul(k));
  else
    zeta.setZero();
}

/// One dual of a convexified SINR constraint:
/// rate_dual * weight * gamma^2 * ln 2 / ((gamma + 1) * gain), gain floored.
inline double sinr_constraint_dual(double rate_dual, double weight, double gamma, double gain,
                                   double floor) {
  if (rate_dual == 0.0 || weight == 0.0) return 0.0;
  return rate_dual * weight * gamma * gamma * std::numbers::ln2 /
         ((gamma + 1.0) * std::max(gain, floor));
}

/// nu and mu from the rate duals at the operating point. Both share the gain
/// |h_{s,k}^H w_{s,k}^(i)|^2 of the (true or estimated) effective UL channel.
inline void compute_nu_mu(BsDualState& state, const Dims& d, const OperatingPoint& op,
                          const CMat& h_eff, double alpha, double floor = 1e-18) {
  for (std::size_t k = 0; k < d.num_ue; ++k)
    for (std::size_t s = 0; s < d.streams_per_ue; ++s) {
      const auto i = static_cast<Eigen::Index>(d.stream(s, k));
      const auto si = static_cast<Eigen::Index>(s);
      const auto ki = static_cast<Eigen::Index>(k);
      const double gain = std::norm(h_eff.col(i).dot(op.w_prev.col(i)));
      state.nu(si, ki) = sinr_constraint_dual(state.eta(ki), alpha, op.gamma(si, ki), gain, floor);
      state.mu(si, ki) =
          sinr_constraint_dual(state.zeta(ki), 1.0 - alpha, op.gamma_bar(si, ki), gain, floor);
    }
}

// ---------------------------------------------------------------------------
// Closed-form BS beamformers.

struct BsSolveOptions {
  double sigma2_bs = 1.0;
  double alpha = 0.5;
  MuIndexVariant variant = MuIndexVariant::Printed;
  double ridge_rel = 1e-12;
};

/// Stationary point of the convexified BS Lagrangian for every stream:
///   w_i = (sum_{j != i} (alpha nu_j + (1-alpha) mu_i) h_j h_j^H
///          + (1-alpha) mu_i sigma2 I + sum_b lambda_b E_b^H E_b)^{-1}
///         (alpha nu_i / gamma_i + (1-alpha) mu_i / gamma_bar_i) h_i h_i^H w_i^(i).
/// Feeding LS estimates for `h_eff` gives the CPU-side trained form.
///
/// The matrix is U U^H + D with U the weighted interfering channels and D
/// diagonal with one value per BS, so the inverse is applied in the KS-dim
/// stream space through the per-BS Grams H_b^H H_b. When D is tiny compared
/// with U U^H that identity cancels badly and the dense BM x BM system is
/// factored instead.
inline CMat solve_bs_beamformers(const Dims& d, const BsDualState& duals, const OperatingPoint& op,
                                 const CMat& h_eff, const BsSolveOptions& opt) {
  const auto bm = static_cast<Eigen::Index>(d.bs_antennas());
  const auto ks = static_cast<Eigen::Index>(d.num_streams());
  const auto m = static_cast<Eigen::Index>(d.antennas_per_bs);
  const auto nb = static_cast<Eigen::Index>(d.num_bs);
  const auto sidx = [&](Eigen::Index i) { return i % static_cast<Eigen::Index>(d.streams_per_ue); };
  const auto kidx = [&](Eigen::Index i) { return i / static_cast<Eigen::Index>(d.streams_per_ue); };
  const double a = opt.alpha;
  constexpr double kWoodburyRange = 1e-7;

  RVec nu(ks), mu(ks), g(ks), gb(ks);
  for (Eigen::Index i = 0; i < ks; ++i) {
    nu(i) = duals.nu(sidx(i), kidx(i));
    mu(i) = duals.mu(sidx(i), kidx(i));
    g(i) = op.gamma(sidx(i), kidx(i));
    gb(i) = op.gamma_bar(sidx(i), kidx(i));
  }
  const RVec chan_norm2 = h_eff.colwise().squaredNorm().transpose();

  // per-BS diagonal of every stream's system, before the ridge
  RMat per_bs_all(nb, ks);
  for (Eigen::Index i = 0; i < ks; ++i)
    for (Eigen::Index b = 0; b < nb; ++b)
      per_bs_all(b, i) = duals.lambda(b) + (1.0 - a) * mu(i) * opt.sigma2_bs;

  // Grams H_b^H H_b stacked as real columns, so sum_b G_b / d_b for all
  // streams is a single real product
  RMat gram_stack(2 * ks * ks, nb);
  for (Eigen::Index b = 0; b < nb; ++b) {
    const auto hb = h_eff.middleRows(b * m, m);
    const CMat gb_mat = hb.adjoint() * hb;
    gram_stack.col(b) = Eigen::Map<const RVec>(reinterpret_cast<const double*>(gb_mat.data()),
                                               2 * ks * ks);
  }

  CMat w(bm, ks);
  RVec c(ks), per_bs(nb);
  CMat f(ks, ks);
  RVec f_real(2 * ks * ks);
  for (Eigen::Index i = 0; i < ks; ++i) {
    const double self_coef = (a * nu(i) != 0.0 ? a * nu(i) / g(i) : 0.0) +
                             ((1.0 - a) * mu(i) != 0.0 ? (1.0 - a) * mu(i) / gb(i) : 0.0);
    if (self_coef == 0.0) {
      w.col(i).setZero();
      continue;
    }
    // interference weights; stream i itself excluded explicitly
    for (Eigen::Index j = 0; j < ks; ++j) {
      const double mu_term = opt.variant == MuIndexVariant::Printed ? mu(i) : mu(j);
      c(j) = j == i ? 0.0 : std::max(a * nu(j) + (1.0 - a) * mu_term, 0.0);
    }
    const double interf_trace = c.dot(chan_norm2);
    per_bs = per_bs_all.col(i);
    const double trace = interf_trace + static_cast<double>(m) * per_bs.sum();
    if (!(trace > 0) || !std::isfinite(trace))
      throw NumericalError("BS beamformer system degenerate for stream " + std::to_string(i) +
                           " (trace " + std::to_string(trace) + ")");
    const double ridge = opt.ridge_rel * trace / static_cast<double>(bm);
    if (per_bs.minCoeff() <= ridge) per_bs.array() += ridge;
    const cplx proj = h_eff.col(i).dot(op.w_prev.col(i));

    if (per_bs.minCoeff() >= kWoodburyRange * interf_trace) {
      f_real.noalias() = gram_stack * per_bs.cwiseInverse();
      f = Eigen::Map<const CMat>(reinterpret_cast<const cplx*>(f_real.data()), ks, ks);
      const RVec sc = c.cwiseSqrt();
      CMat kmat = sc.asDiagonal() * f * sc.asDiagonal();
      kmat.diagonal().array() += 1.0;
      Eigen::LLT<CMat> llt(kmat);
      if (llt.info() != Eigen::Success)
        throw NumericalError("BS stream-space system not positive definite for stream " +
                             std::to_string(i));
      const CVec z = llt.solve(sc.cast<cplx>().cwiseProduct(f.col(i)));
      CVec x = h_eff.col(i) - h_eff * sc.cast<cplx>().cwiseProduct(z);
      for (Eigen::Index b = 0; b < nb; ++b) x.segment(b * m, m) /= per_bs(b);
      w.col(i) = (self_coef * proj) * x;
    } else {
      CMat scaled = h_eff * c.cwiseSqrt().asDiagonal();
      CMat a_mat = CMat::Zero(bm, bm);
      a_mat.selfadjointView<Eigen::Lower>().rankUpdate(scaled);
      for (Eigen::Index b = 0; b < nb; ++b)
        a_mat.diagonal().segment(b * m, m).array() += per_bs(b);
      Eigen::LLT<CMat, Eigen::Lower> llt(a_mat);
      if (llt.info() != Eigen::Success)
        throw NumericalError("BS beamformer system not positive definite for stream " +
                             std::to_string(i) + " (trace " + std::to_string(trace) + ")");
      w.col(i) = llt.solve((self_coef * proj) * h_eff.col(i));
    }
    if (!w.col(i).allFinite())
      throw NumericalError("non-finite BS beamformer for stream " + std::to_string(i));
  }
  return w;
}

/// Per-BS sum powers sum_{k,s} ||E_b w_{s,k}||^2.
inline RVec bs_powers(const Dims& d, const CMat& w) {
  const auto m = static_cast<Eigen::Index>(d.antennas_per_bs);
  RVec p(static_cast<Eigen::Index>(d.num_bs));
  for (Eigen::Index b = 0; b < p.size(); ++b) p(b) = w.middleRows(b * m, m).squaredNorm();
  return p;
}

/// Projected sub-gradient ascent max(0, lambda_b + step (P_b - rho)).
inline RVec update_lambda_bs(const RVec& lambda, const RVec& powers, double rho_bs, double step) {
  if (!(step > 0)) throw DomainError("lambda step must be positive");
  return (lambda.array() + step * (powers.array() - rho_bs)).cwiseMax(0.0);
}

/// Common scaling so the most loaded BS sits exactly at rho_bs. Without
/// `allow_increase` only violating sets are touched.
inline CMat scale_to_bs_budget(const Dims& d, const CMat& w, double rho_bs,
                               bool allow_increase = false) {
  const double worst = bs_powers(d, w).maxCoeff();
  if (!(worst > 0)) return w;
  if (worst <= rho_bs && !allow_increase) return w;
  CMat out = w * std::sqrt(rho_bs / worst);
  // rounding can leave the worst BS a few ulps above the budget
  const double after = bs_powers(d, out).maxCoeff();
  if (after > rho_bs) out *= std::sqrt(rho_bs / after) * (1.0 - 1e-15);
  return out;
}

// ---------------------------------------------------------------------------
// One SCA step at the BS side, with the nested sub-gradient loop on the rate
// duals and the per-BS power duals.

struct BsStepOptions {
  BsSolveOptions solve;
  DirectionMask mask;
  double rho_bs = 1.0;
  double sigma2_ue = 1.0;
  double delta0 = 0.05;
  DualUpdate dual_update = DualUpdate::Exponentiated;
  double eg_delta0 = 0.5;
  std::size_t inner_iters_max = 50;
  double dual_tol = 1e-4;
  double lambda_step = 0.1;
  double nu_floor = 1e-18;
};

struct BsStepResult {
  CMat w;
  double objective = 0.0;  // on the channels the step was fed
  std::size_t inner_iters = 0;
  bool improved = false;   // false when the incumbent was kept
};

namespace detail {

/// Common lambda for which the unscaled solution spends about B * rho_bs in
/// total. Power falls roughly as lambda^-2 once lambda dominates.
inline double calibrate_lambda_scale(const Dims& d, BsDualState& duals, const OperatingPoint& op,
                                     const CMat& h_eff, const BsStepOptions& o) {
  const double target = static_cast<double>(d.num_bs) * o.rho_bs;
  double scale = 1.0 / (o.rho_bs * static_cast<double>(d.num_streams()));
  for (int it = 0; it < 12; ++it) {
    duals.lambda.setConstant(scale);
    const double total = bs_powers(d, solve_bs_beamformers(d, duals, op, h_eff, o.solve)).sum();
    if (!(total > 0) || !std::isfinite(total)) break;
    const double ratio = std::sqrt(total / target);
    scale *= std::clamp(ratio, 1e-3, 1e3);
    if (std::abs(ratio - 1.0) < 0.05) break;
  }
  duals.lambda.setConstant(scale);
  return scale;
}

}  // namespace detail

/// Runs the nested dual loop at a fixed operating point and returns the best
/// budget-scaled iterate, never worse than the incumbent op.w_prev. The rate
/// duals move along the achieved rates of each inner iterate, with the common
/// rate set to the achieved objective.
inline BsStepResult bs_sca_step(const Dims& d, BsDualState& duals, const OperatingPoint& op,
                                const CMat& h_eff, const RVec& v_norm2, const BsStepOptions& o) {
  const double alpha = o.solve.alpha;
  const auto evaluate = [&](const CMat& w) {
    // streams the dual weights switched off count as rate 0 rather than undefined
    const auto sinr = sinr_from_effective(d, h_eff, w, v_norm2, o.sigma2_ue, o.solve.sigma2_bs,
                                          DeadStream::ZeroSinr);
    return compute_rates(sinr, alpha, o.mask);
  };

  BsStepResult best{op.w_prev, evaluate(op.w_prev).objective, 0, false};
  if (duals.lambda_scale <= 0.0) {
    compute_nu_mu(duals, d, op, h_eff, alpha, o.nu_floor);
    duals.lambda_scale = detail::calibrate_lambda_scale(d, duals, op, h_eff, o);
  }

  for (std::size_t j = 1; j <= o.inner_iters_max; ++j) {
    compute_nu_mu(duals, d, op, h_eff, alpha, o.nu_floor);
    const CMat w_raw = solve_bs_beamformers(d, duals, op, h_eff, o.solve);
    // violations are capped at +rho so a near-singular solve cannot blow lambda up
    const RVec powers = bs_powers(d, w_raw).cwiseMin(2.0 * o.rho_bs);
    duals.lambda = update_lambda_bs(duals.lambda, powers, o.rho_bs,
                                    o.lambda_step * duals.lambda_scale / o.rho_bs);
    const CMat w = scale_to_bs_budget(d, w_raw, o.rho_bs, true);
    const RateSummary rates = evaluate(w);
    if (rates.objective > best.objective) {
      best.w = w;
      best.objective = rates.objective;
      best.improved = true;
    }
    best.inner_iters = j;

    const RVec eta_old = duals.eta;
    const RVec zeta_old = duals.zeta;
    const double root_j = std::sqrt(static_cast<double>(j));
    if (o.dual_update == DualUpdate::Subgradient) {
      update_common_duals(duals, rates.dl, rates.ul, rates.objective, alpha, o.delta0 / root_j,
                          o.mask);
    } else {
      exponentiated_duals_step(duals.eta, duals.zeta, rates.dl, rates.ul, rates.objective, alpha,
                               o.eg_delta0 / root_j, o.mask);
      project_common_duals(duals.eta, duals.zeta, o.mask);
    }
    const double change = (duals.eta - eta_old).cwiseAbs().maxCoeff() +
                          (duals.zeta - zeta_old).cwiseAbs().maxCoeff();
    if (change < o.dual_tol) break;
  }
  return best;
}

}  // namespace cfmimo
