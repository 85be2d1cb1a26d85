// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfmimo/bs_solver.hpp"
#include "cfmimo/common.hpp"
#include "cfmimo/config.hpp"
#include "cfmimo/metrics.hpp"
#include "cfmimo/training.hpp"

#include <algorithm>
#include <cmath>

namespace cfmimo {

struct UeDualState {
  RMat nu_bar;      // [s, k]
  RMat mu_bar;      // [s, k]
  RVec lambda_bar;  // per UE

  static UeDualState zeros(const Dims& d) {
    const auto s = static_cast<Eigen::Index>(d.streams_per_ue);
    const auto k = static_cast<Eigen::Index>(d.num_ue);
    return {RMat::Zero(s, k), RMat::Zero(s, k), RVec::Zero(k)};
  }
};

/// Heuristic weights a (> 0) and b (>= 0) per stream, indexed [s, k].
struct HeuristicWeights {
  RMat a;
  RMat b;

  static HeuristicWeights constant(const Dims& d, double a, double b) {
    if (!(a > 0) || b < 0) throw DomainError("heuristic weights need a > 0 and b >= 0");
    const auto s = static_cast<Eigen::Index>(d.streams_per_ue);
    const auto k = static_cast<Eigen::Index>(d.num_ue);
    return {RMat::Constant(s, k, a), RMat::Constant(s, k, b)};
  }
};

// ---------------------------------------------------------------------------
// Surrogates, with g = H_k^H w_{s,k} so that v^H H_k^H w = v^H g.

inline double exact_r(const CVec& v, double gamma, const CVec& g) {
  return std::norm(v.dot(g)) / gamma;
}

inline double surrogate_r(const CVec& v, double gamma, const CVec& v_op, double gamma_op,
                          const CVec& g) {
  return quadratic_over_linear_tangent(g.dot(v), g.dot(v_op), gamma, gamma_op);
}

inline double exact_t(const CVec& v, double gamma_bar, const CVec& g) {
  return std::norm(g.dot(v)) / gamma_bar;
}

inline double surrogate_t(const CVec& v, double gamma_bar, const CVec& v_op, double gamma_bar_op,
                          const CVec& g) {
  return quadratic_over_linear_tangent(g.dot(v), g.dot(v_op), gamma_bar, gamma_bar_op);
}

// ---------------------------------------------------------------------------
// UE-side SINR-constraint duals.

/// Per-stream gains |(v_{s,k}^(i))^H H_k^H w_{s,k}|^2 from effective DL channels.
inline RVec ue_operating_gains(const CMat& g_eff, const CMat& v_prev) {
  RVec gain(g_eff.cols());
  for (Eigen::Index i = 0; i < g_eff.cols(); ++i) gain(i) = std::norm(v_prev.col(i).dot(g_eff.col(i)));
  return gain;
}

/// nu_bar and mu_bar from the rate duals and the per-stream operating gains.
inline void compute_nu_mu_bar(UeDualState& state, const Dims& d, const RVec& eta,
                              const RVec& zeta, const OperatingPoint& op, const RVec& gains,
                              double alpha, double floor = 1e-18) {
  for (std::size_t k = 0; k < d.num_ue; ++k)
    for (std::size_t s = 0; s < d.streams_per_ue; ++s) {
      const auto i = static_cast<Eigen::Index>(d.stream(s, k));
      const auto si = static_cast<Eigen::Index>(s);
      const auto ki = static_cast<Eigen::Index>(k);
      state.nu_bar(si, ki) =
          sinr_constraint_dual(eta(ki), alpha, op.gamma(si, ki), gains(i), floor);
      state.mu_bar(si, ki) =
          sinr_constraint_dual(zeta(ki), 1.0 - alpha, op.gamma_bar(si, ki), gains(i), floor);
    }
}

// ---------------------------------------------------------------------------
// Power-constrained solve shared by all UE closed forms. Each stream of a UE
// reads v_s(l) = (A_s + l I)^{-1} b_s with one multiplier l for the UE's budget.

struct UeStreamSystem {
  CMat a;  // Hermitian N x N
  CVec b;
};

struct BudgetSolution {
  std::vector<CVec> v;
  double lambda = 0.0;
};

namespace detail {

struct EigenSystem {
  RVec theta;
  RVec weight;  // |u_n^H b|^2
  CMat u;
  CVec ub;      // u^H b
};

/// Eigen-decomposition with the indefiniteness guard: when the smallest
/// eigenvalue is not positive the spectrum is shifted so it equals
/// ridge_rel * trace / N.
inline EigenSystem decompose(const UeStreamSystem& sys, double ridge_rel) {
  Eigen::SelfAdjointEigenSolver<CMat> es(sys.a);
  if (es.info() != Eigen::Success) throw NumericalError("UE system eigen-decomposition failed");
  EigenSystem e{es.eigenvalues(), RVec(), es.eigenvectors(), CVec()};
  const double n = static_cast<double>(sys.a.rows());
  const double scale = std::max(e.theta.cwiseAbs().sum(), std::numeric_limits<double>::min());
  const double floor = ridge_rel * scale / n;
  if (e.theta.minCoeff() <= 0.0) e.theta.array() += floor - e.theta.minCoeff();
  e.ub = e.u.adjoint() * sys.b;
  e.weight = e.ub.cwiseAbs2();
  return e;
}

inline double power_at(const std::vector<EigenSystem>& es, double lambda) {
  double p = 0.0;
  for (const auto& e : es)
    p += (e.weight.array() / (e.theta.array() + lambda).square()).sum();
  return p;
}

}  // namespace detail

/// Solves every stream of one UE and picks the smallest multiplier l >= 0
/// with sum_s ||v_s||^2 <= rho, by bisection (power decreases in l).
inline BudgetSolution solve_with_power_budget(const std::vector<UeStreamSystem>& systems,
                                              double rho_ue, double rel_tol = 1e-8,
                                              double ridge_rel = 1e-10) {
  std::vector<detail::EigenSystem> es;
  es.reserve(systems.size());
  double b_energy = 0.0;
  for (const auto& sys : systems) {
    es.push_back(detail::decompose(sys, ridge_rel));
    b_energy += sys.b.squaredNorm();
  }

  double lambda = 0.0;
  if (detail::power_at(es, 0.0) > rho_ue) {
    // (A + l I)^{-1} has norm <= 1/l, so this l already meets the budget
    double hi = std::sqrt(b_energy / rho_ue);
    int doublings = 0;
    while (detail::power_at(es, hi) > rho_ue) {
      hi *= 2.0;
      if (++doublings > 200) throw NumericalError("UE power bisection failed to bracket");
    }
    double lo = 0.0;
    for (int it = 0; it < 400; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (detail::power_at(es, mid) > rho_ue) lo = mid;
      else hi = mid;
      if (hi - lo <= 1e-15 * hi) break;
      const double p_hi = detail::power_at(es, hi);
      if (p_hi >= rho_ue * (1.0 - rel_tol)) break;
    }
    lambda = hi;
  }

  BudgetSolution out;
  out.lambda = lambda;
  out.v.reserve(es.size());
  for (const auto& e : es) {
    const CVec coeff = (e.ub.array() / (e.theta.array() + lambda).cast<cplx>()).matrix();
    out.v.push_back(e.u * coeff);
  }
  return out;
}

/// v for a fixed multiplier (no budget search).
inline CVec solve_stream_fixed(const UeStreamSystem& sys, double lambda, double ridge_rel = 1e-10) {
  const auto e = detail::decompose(sys, ridge_rel);
  const CVec coeff = (e.ub.array() / (e.theta.array() + lambda).cast<cplx>()).matrix();
  return e.u * coeff;
}

struct UeSolveOptions {
  double sigma2_ue = 1.0;
  double alpha = 0.5;
  double rho_ue = 1.0;
  MuIndexVariant variant = MuIndexVariant::Printed;
  double bisect_tol = 1e-8;
};

/// Ideal-CSI closed form for UE k:
///   v_i = (sum_{j != i} (alpha nu_bar_i + (1-alpha) mu_bar_j) g_j g_j^H
///          + alpha nu_bar_i sigma2 I + lambda_bar I)^{-1}
///         (alpha nu_bar_i / gamma_i + (1-alpha) mu_bar_i / gamma_bar_i) g_i g_i^H v_i^(i)
/// with g_j = H_k^H w_j over all KS streams (`g_at_ue` is N x KS).
inline std::vector<UeStreamSystem> ue_ideal_systems(const Dims& d, std::size_t k,
                                                    const UeDualState& duals,
                                                    const OperatingPoint& op, const CMat& g_at_ue,
                                                    const UeSolveOptions& opt) {
  const auto n = static_cast<Eigen::Index>(d.antennas_per_ue);
  const auto ks = static_cast<Eigen::Index>(d.num_streams());
  const auto sn = static_cast<Eigen::Index>(d.streams_per_ue);
  const double a = opt.alpha;
  std::vector<UeStreamSystem> out;
  for (std::size_t s = 0; s < d.streams_per_ue; ++s) {
    const auto i = static_cast<Eigen::Index>(d.stream(s, k));
    const auto si = static_cast<Eigen::Index>(s);
    const auto ki = static_cast<Eigen::Index>(k);
    const double nu_i = duals.nu_bar(si, ki);
    const double mu_i = duals.mu_bar(si, ki);
    UeStreamSystem sys{CMat::Zero(n, n), CVec::Zero(n)};
    for (Eigen::Index j = 0; j < ks; ++j) {
      if (j == i) continue;
      const double mu_j = duals.mu_bar(j % sn, j / sn);
      const double c =
          a * nu_i + (1.0 - a) * (opt.variant == MuIndexVariant::Printed ? mu_j : mu_i);
      if (c != 0.0) sys.a.noalias() += c * g_at_ue.col(j) * g_at_ue.col(j).adjoint();
    }
    sys.a.diagonal().array() += a * nu_i * opt.sigma2_ue;
    const double coef = (a * nu_i != 0.0 ? a * nu_i / op.gamma(si, ki) : 0.0) +
                        ((1.0 - a) * mu_i != 0.0 ? (1.0 - a) * mu_i / op.gamma_bar(si, ki) : 0.0);
    if (coef != 0.0)
      sys.b = coef * g_at_ue.col(i) * g_at_ue.col(i).dot(op.v_prev.col(i));
    out.push_back(std::move(sys));
  }
  return out;
}

/// Per-UE effective DL channels H_k^H W (N x KS).
inline CMat dl_channels_at_ue(const ChannelSet& ch, std::size_t k, const CMat& w) {
  return ch.H[k].adjoint() * w;
}

/// Ideal UE beamformers for all UEs; the power multipliers land in duals.lambda_bar.
inline CMat solve_ue_beamformers_ideal(const ChannelSet& ch, const CMat& w, UeDualState& duals,
                                       const OperatingPoint& op, const UeSolveOptions& opt) {
  const Dims& d = ch.dims;
  CMat v(static_cast<Eigen::Index>(d.antennas_per_ue), static_cast<Eigen::Index>(d.num_streams()));
  for (std::size_t k = 0; k < d.num_ue; ++k) {
    const auto sol = solve_with_power_budget(
        ue_ideal_systems(d, k, duals, op, dl_channels_at_ue(ch, k, w), opt), opt.rho_ue,
        opt.bisect_tol);
    duals.lambda_bar(static_cast<Eigen::Index>(k)) = sol.lambda;
    for (std::size_t s = 0; s < d.streams_per_ue; ++s)
      v.col(static_cast<Eigen::Index>(d.stream(s, k))) = sol.v[s];
  }
  return v;
}

/// Locally measured effective DL channels (1/tau) Y p_j for all streams.
inline CMat ue_estimated_dl_channels(const CMat& y_dl, const PilotBook& pilots) {
  return y_dl * pilots.p / static_cast<double>(pilots.tau);
}

/// DL SINRs of UE k's own streams from its estimated effective channels.
inline RVec ue_local_dl_sinr(const Dims& d, std::size_t k, const CMat& g_hat, const CMat& v_prev,
                             double sigma2_ue) {
  RVec out(static_cast<Eigen::Index>(d.streams_per_ue));
  for (std::size_t s = 0; s < d.streams_per_ue; ++s) {
    const auto i = static_cast<Eigen::Index>(d.stream(s, k));
    const CVec& vi = v_prev.col(i);
    double interf = 0.0;
    for (Eigen::Index j = 0; j < g_hat.cols(); ++j)
      if (j != i) interf += std::norm(vi.dot(g_hat.col(j)));
    out(static_cast<Eigen::Index>(s)) =
        std::norm(vi.dot(g_hat.col(i))) / (interf + sigma2_ue * vi.squaredNorm());
  }
  return out;
}

/// Inputs of the trained UE design at UE k. `nu_bar`, `gamma` and
/// `gamma_bar` hold UE k's S streams; `v_prev` is N x S.
struct UeTrainedInputs {
  const CMat* y_dl1 = nullptr;  // may be null when alpha == 0
  const CMat* y_dl2 = nullptr;  // may be null when alpha == 1
  double noise_var_dl1 = 0.0;
  double noise_var_dl2 = 0.0;
  RVec nu_bar;
  RVec gamma;
  RVec gamma_bar;
  CMat v_prev;
};

/// Trained UE design from the DL-1 and DL-2 pilot blocks of UE k:
///   A_i = alpha nu_i (Y1 Y1^H - Y1 p_i p_i^H Y1^H / tau - tau s1 I)
///       + (1-alpha) (Y2 Y2^H - Y2 p_i p_i^H Y2^H / tau - tau s2 I)
///       + alpha nu_i sigma2 tau I
///   b_i = alpha nu_i / gamma_i Y1 p_i p_i^H Y1^H v_i / tau
///       + (1-alpha) / gamma_bar_i Y2 p_i p_i^H Y2^H v_i / tau
/// where s1, s2 are the pilot-noise variances removed as bias. With exact
/// observations A_i and b_i are tau times the ideal system.
inline std::vector<UeStreamSystem> ue_trained_systems(const Dims& d, std::size_t k,
                                                      const PilotBook& pilots,
                                                      const UeTrainedInputs& in,
                                                      const UeSolveOptions& opt) {
  const auto n = static_cast<Eigen::Index>(d.antennas_per_ue);
  const double tau = static_cast<double>(pilots.tau);
  const double a = opt.alpha;
  const bool use_dl1 = a != 0.0;
  const bool use_dl2 = a != 1.0;
  if ((use_dl1 && !in.y_dl1) || (use_dl2 && !in.y_dl2))
    throw DomainError("trained UE design: missing DL pilot observations");

  CMat gram1, gram2;
  if (use_dl1) gram1 = (*in.y_dl1) * in.y_dl1->adjoint();
  if (use_dl2) gram2 = (*in.y_dl2) * in.y_dl2->adjoint();
  std::vector<UeStreamSystem> out;
  for (std::size_t s = 0; s < d.streams_per_ue; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    const CVec p = pilots.pilot(d.stream(s, k));
    UeStreamSystem sys{CMat::Zero(n, n), CVec::Zero(n)};
    const CVec& vprev = in.v_prev.col(si);
    if (use_dl1 && in.nu_bar(si) != 0.0) {
      const double c = a * in.nu_bar(si);
      const CVec yp = (*in.y_dl1) * p;
      sys.a += c * (gram1 - yp * yp.adjoint() / tau);
      sys.a.diagonal().array() += c * tau * (opt.sigma2_ue - in.noise_var_dl1);
      sys.b += (c / in.gamma(si)) * yp * (yp.dot(vprev) / tau);
    }
    if (use_dl2) {
      const double c = 1.0 - a;
      const CVec yp = (*in.y_dl2) * p;
      sys.a += c * (gram2 - yp * yp.adjoint() / tau);
      sys.a.diagonal().array() -= c * tau * in.noise_var_dl2;
      sys.b += (c / in.gamma_bar(si)) * yp * (yp.dot(vprev) / tau);
    }
    out.push_back(std::move(sys));
  }
  return out;
}

/// Heuristic trained design from the a-weighted DL-2 block of UE k:
///   v_i = (Y2 Y2^H + tau (b_i sigma2 - s2) I + lambda_bar I)^{-1} Y2 p_i / sqrt(a_i)
/// where s2 is the pilot-noise variance; with s2 = sigma2 this is
/// Y2 Y2^H - tau (1 - b_i) sigma2 I + lambda_bar I.
inline std::vector<UeStreamSystem> ue_heuristic_systems(const Dims& d, std::size_t k,
                                                        const CMat& y_dl2, double noise_var_dl2,
                                                        const PilotBook& pilots,
                                                        const HeuristicWeights& weights,
                                                        double sigma2_ue) {
  const double tau = static_cast<double>(pilots.tau);
  const CMat gram = y_dl2 * y_dl2.adjoint();
  std::vector<UeStreamSystem> out;
  for (std::size_t s = 0; s < d.streams_per_ue; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    const auto ki = static_cast<Eigen::Index>(k);
    const double a = weights.a(si, ki);
    const double b = weights.b(si, ki);
    if (!(a > 0) || b < 0) throw DomainError("heuristic weights need a > 0 and b >= 0");
    UeStreamSystem sys{gram, y_dl2 * pilots.pilot(d.stream(s, k)) / std::sqrt(a)};
    sys.a.diagonal().array() += tau * (b * sigma2_ue - noise_var_dl2);
    out.push_back(std::move(sys));
  }
  return out;
}

/// Heuristic form on true channels: v_i = (sum_j a_j g_j g_j^H + (b_i sigma2 + lambda_bar) I)^{-1} g_i.
inline std::vector<UeStreamSystem> ue_heuristic_ideal_systems(const Dims& d, std::size_t k,
                                                              const CMat& g_at_ue,
                                                              const HeuristicWeights& weights,
                                                              double sigma2_ue) {
  const auto n = static_cast<Eigen::Index>(d.antennas_per_ue);
  const auto sn = static_cast<Eigen::Index>(d.streams_per_ue);
  CMat gram = CMat::Zero(n, n);
  for (Eigen::Index j = 0; j < g_at_ue.cols(); ++j)
    gram.noalias() += weights.a(j % sn, j / sn) * g_at_ue.col(j) * g_at_ue.col(j).adjoint();
  std::vector<UeStreamSystem> out;
  for (std::size_t s = 0; s < d.streams_per_ue; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    const auto ki = static_cast<Eigen::Index>(k);
    UeStreamSystem sys{gram, g_at_ue.col(static_cast<Eigen::Index>(d.stream(s, k)))};
    sys.a.diagonal().array() += weights.b(si, ki) * sigma2_ue;
    out.push_back(std::move(sys));
  }
  return out;
}

/// Trained optimal design for one UE, power multiplier by bisection.
inline BudgetSolution solve_ue_beamformers_estimated(const Dims& d, std::size_t k,
                                                     const PilotBook& pilots,
                                                     const UeTrainedInputs& in,
                                                     const UeSolveOptions& opt) {
  return solve_with_power_budget(ue_trained_systems(d, k, pilots, in, opt), opt.rho_ue,
                                 opt.bisect_tol);
}

/// Heuristic trained design for one UE, power multiplier by bisection.
inline BudgetSolution solve_ue_beamformers_heuristic(const Dims& d, std::size_t k,
                                                     const CMat& y_dl2, double noise_var_dl2,
                                                     const PilotBook& pilots,
                                                     const HeuristicWeights& weights,
                                                     double sigma2_ue, double rho_ue,
                                                     double bisect_tol = 1e-8) {
  return solve_with_power_budget(
      ue_heuristic_systems(d, k, y_dl2, noise_var_dl2, pilots, weights, sigma2_ue), rho_ue,
      bisect_tol);
}

}  // namespace cfmimo
