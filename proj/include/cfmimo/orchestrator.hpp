// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfmimo/bs_solver.hpp"
#include "cfmimo/common.hpp"
#include "cfmimo/config.hpp"
#include "cfmimo/metrics.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/scheme.hpp"
#include "cfmimo/training.hpp"
#include "cfmimo/ue_solver.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

namespace cfmimo {

struct IterationRecord {
  double min_dl = 0.0;
  double min_ul = 0.0;
  double objective = 0.0;
};

struct RunResult {
  Scheme scheme = Scheme::JointOpt;
  std::size_t drop = 0;
  std::size_t iterations = 0;
  /// Entry i holds the metrics after i bi-directional iterations (0 = initialization).
  std::vector<IterationRecord> series;
  BeamformerSet final_bf;
  /// UL-phase beamformers of a separate scheme (final_bf then holds the DL phase).
  std::optional<BeamformerSet> final_bf_ul;
  PowerAudit audit;
  /// Largest relative budget excess over every reported iterate (<= 0 when feasible).
  double max_power_excess = 0.0;
  double wall_time_s = 0.0;
};

/// Solver failure annotated with the scheme and iteration it happened in.
struct SchemeError : NumericalError {
  using NumericalError::NumericalError;
};

namespace detail {

enum class Phase : std::uint64_t { Ul = 1, Dl1 = 2, Dl2 = 3 };

inline std::uint64_t phase_seed(std::uint64_t seed, Scheme s, std::size_t iteration, Phase ph) {
  return derive_seed(seed, {tag(StreamTag::PilotNoise), static_cast<std::uint64_t>(s) + 1,
                            iteration, static_cast<std::uint64_t>(ph)});
}

inline double relative_excess(const PowerAudit& a, double rho_bs, double rho_ue) {
  return std::max(a.bs.maxCoeff() / rho_bs - 1.0, a.ue.maxCoeff() / rho_ue - 1.0);
}

inline IterationRecord snapshot(const ChannelSet& ch, const BeamformerSet& bf,
                                const ScenarioConfig& sc) {
  const auto sinr = compute_sinr(ch, bf, sc.sigma2_ue, sc.sigma2_bs, DeadStream::ZeroSinr);
  const auto rates = compute_rates(sinr, sc.alpha);
  return {rates.min_dl, rates.min_ul, rates.objective};
}

/// Operating-point SINRs; entries are floored so the surrogates stay defined.
inline void refresh_operating_point(OperatingPoint& op, const SinrTable& sinr) {
  constexpr double kFloor = 1e-12;
  op.gamma = sinr.dl.cwiseMax(kFloor);
  op.gamma_bar = sinr.ul.cwiseMax(kFloor);
}

inline RVec column_norms2(const CMat& m) { return m.colwise().squaredNorm().transpose(); }

/// A UE whose rate duals are zero in every direction the scheme optimizes has
/// no term in the convexified objective; it keeps its previous beamformers.
inline bool ue_switched_off(const BsDualState& duals, std::size_t k, double alpha) {
  const auto ki = static_cast<Eigen::Index>(k);
  const bool dl_live = alpha > 0.0 && duals.eta(ki) > 0.0;
  const bool ul_live = alpha < 1.0 && duals.zeta(ki) > 0.0;
  return !dl_live && !ul_live;
}

inline void keep_switched_off(const Dims& d, const BsDualState& duals, double alpha,
                              const CMat& v_prev, CMat& v_new) {
  const auto sn = static_cast<Eigen::Index>(d.streams_per_ue);
  for (std::size_t k = 0; k < d.num_ue; ++k)
    if (ue_switched_off(duals, k, alpha)) {
      const auto first = static_cast<Eigen::Index>(d.stream(0, k));
      v_new.middleCols(first, sn) = v_prev.middleCols(first, sn);
    }
}

}  // namespace detail

/// Per-UE common scaling so every UE spends exactly rho_ue.
inline void scale_to_ue_budget(const Dims& d, CMat& v, double rho_ue) {
  const auto sn = static_cast<Eigen::Index>(d.streams_per_ue);
  for (std::size_t k = 0; k < d.num_ue; ++k) {
    auto blk = v.middleCols(static_cast<Eigen::Index>(d.stream(0, k)), sn);
    const double p = blk.squaredNorm();
    if (!(p > 0)) continue;
    blk *= std::sqrt(rho_ue / p);
    const double after = blk.squaredNorm();
    if (after > rho_ue) blk *= std::sqrt(rho_ue / after) * (1.0 - 1e-15);
  }
}

/// Random isotropic UE beamformers with rho_ue / S power per stream.
inline CMat initial_ue_beamformers(const Dims& d, double rho_ue, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {tag(StreamTag::Init)}));
  CMat v = rng.complex_normal(static_cast<Eigen::Index>(d.antennas_per_ue),
                              static_cast<Eigen::Index>(d.num_streams()), 1.0);
  const double per_stream = rho_ue / static_cast<double>(d.streams_per_ue);
  for (Eigen::Index i = 0; i < v.cols(); ++i) v.col(i) *= std::sqrt(per_stream) / v.col(i).norm();
  return v;
}

/// Unit-norm matched filters to the (estimated) effective channels, jointly
/// scaled so the most loaded BS spends exactly rho_bs.
inline CMat matched_filter_init(const Dims& d, const CMat& h_eff, double rho_bs) {
  CMat w = h_eff;
  for (Eigen::Index i = 0; i < w.cols(); ++i) {
    const double n = w.col(i).norm();
    if (n > 0) w.col(i) /= n;
  }
  return scale_to_bs_budget(d, w, rho_bs, true);
}

/// Runs one single-phase scheme (not a separate composition) for `iters`
/// bi-directional iterations. Metrics are always taken on the true channels.
inline RunResult run_scheme(Scheme scheme, const ChannelSet& ch, const SimConfig& cfg,
                            std::size_t iters, std::uint64_t seed) {
  if (is_separate(scheme))
    throw ConfigError("run_scheme: use run_separate for '" + std::string(scheme_name(scheme)) + "'");
  const auto t0 = std::chrono::steady_clock::now();
  const Dims& d = ch.dims;
  const ScenarioConfig& sc = cfg.scenario;
  const SolverConfig& so = cfg.solver;
  const bool trained = cfg.csi == CsiMode::Trained;
  const double alpha = scheme_alpha(scheme, sc.alpha);
  const DirectionMask mask = scheme_directions(scheme);
  const UeVariant ue_variant = scheme_ue_variant(scheme);

  std::optional<PilotBook> pilots;
  double ul_noise = 0.0, dl_noise = 0.0;
  if (trained) {
    pilots = make_pilots(d.num_ue, d.streams_per_ue, cfg.training.effective_tau(d),
                         cfg.training.pilot_mode, seed);
    if (cfg.training.pilot_noise) {
      ul_noise = sc.sigma2_bs;
      dl_noise = sc.sigma2_ue;
    }
  }
  const auto estimate_ul = [&](const CMat& v, std::size_t iteration) -> CMat {
    if (!trained) return effective_ul_channels(ch, v);
    const auto obs = ul_pilot_phase(ch, v, *pilots, ul_noise,
                                    detail::phase_seed(seed, scheme, iteration, detail::Phase::Ul));
    return ls_estimate_all(obs.y, *pilots);
  };

  RunResult res;
  res.scheme = scheme;
  res.iterations = iters;
  const auto fail = [&](std::size_t it, const std::exception& e) {
    return SchemeError(std::string(scheme_name(scheme)) + ", iteration " + std::to_string(it) +
                       ": " + e.what());
  };
  const auto record = [&](const BeamformerSet& b) {
    res.series.push_back(detail::snapshot(ch, b, sc));
    res.max_power_excess = std::max(
        res.max_power_excess, detail::relative_excess(power_audit(d, b), sc.rho_bs, sc.rho_ue));
  };
  res.max_power_excess = -1.0;

  BeamformerSet bf;
  CMat h_est;
  try {
    bf.v = initial_ue_beamformers(d, sc.rho_ue, seed);
    h_est = estimate_ul(bf.v, 1);
    bf.w = matched_filter_init(d, h_est, sc.rho_bs);
    record(bf);
  } catch (const std::exception& e) {
    throw fail(0, e);
  }

  BsDualState bs_duals = BsDualState::initial(d, mask);
  UeDualState ue_duals = UeDualState::zeros(d);
  BsStepOptions bs_opt;
  bs_opt.solve = {sc.sigma2_bs, alpha, so.mu_index_variant, 1e-12};
  bs_opt.mask = mask;
  bs_opt.rho_bs = sc.rho_bs;
  bs_opt.sigma2_ue = sc.sigma2_ue;
  bs_opt.delta0 = so.delta0;
  bs_opt.dual_update = so.dual_update;
  bs_opt.eg_delta0 = so.eg_delta0;
  bs_opt.inner_iters_max = so.inner_iters_max;
  bs_opt.dual_tol = so.dual_tol;
  bs_opt.lambda_step = so.lambda_step;
  bs_opt.nu_floor = so.nu_floor;
  const UeSolveOptions ue_opt{sc.sigma2_ue, alpha, sc.rho_ue, so.mu_index_variant, so.bisect_tol};

  for (std::size_t it = 1; it <= iters; ++it) {
    try {
      if (it > 1) h_est = estimate_ul(bf.v, it);
      const RVec v_norm2 = detail::column_norms2(bf.v);

      // BS step at the CPU
      OperatingPoint op{RMat(), RMat(), bf.w, bf.v};
      detail::refresh_operating_point(
          op, sinr_from_effective(d, h_est, bf.w, v_norm2, sc.sigma2_ue, sc.sigma2_bs,
                                  DeadStream::ZeroSinr));
      if (!so.dual_warm_start) {
        const auto fresh = BsDualState::initial(d, mask);
        bs_duals.eta = fresh.eta;
        bs_duals.zeta = fresh.zeta;
      }
      bf.w = bs_sca_step(d, bs_duals, op, h_est, v_norm2, bs_opt).w;

      // UE step
      OperatingPoint uop{RMat(), RMat(), bf.w, bf.v};
      const SinrTable cpu_sinr =
          sinr_from_effective(d, h_est, bf.w, v_norm2, sc.sigma2_ue, sc.sigma2_bs,
                              DeadStream::ZeroSinr);
      detail::refresh_operating_point(uop, cpu_sinr);
      CMat v_new(bf.v.rows(), bf.v.cols());

      if (!trained) {
        if (ue_variant == UeVariant::Optimal) {
          const RVec gains = ue_operating_gains(effective_dl_channels(ch, bf.w), bf.v);
          compute_nu_mu_bar(ue_duals, d, bs_duals.eta, bs_duals.zeta, uop, gains, alpha,
                            so.nu_floor);
          v_new = solve_ue_beamformers_ideal(ch, bf.w, ue_duals, uop, ue_opt);
          detail::keep_switched_off(d, bs_duals, alpha, bf.v, v_new);
        } else {
          const auto [ha, hb] = so.heuristic_weights(it - 1);
          const auto weights = HeuristicWeights::constant(d, ha, hb);
          for (std::size_t k = 0; k < d.num_ue; ++k) {
            const auto sol = solve_with_power_budget(
                ue_heuristic_ideal_systems(d, k, dl_channels_at_ue(ch, k, bf.w), weights,
                                           sc.sigma2_ue),
                sc.rho_ue, so.bisect_tol);
            ue_duals.lambda_bar(static_cast<Eigen::Index>(k)) = sol.lambda;
            for (std::size_t s = 0; s < d.streams_per_ue; ++s)
              v_new.col(static_cast<Eigen::Index>(d.stream(s, k))) = sol.v[s];
          }
        }
      } else if (ue_variant == UeVariant::Optimal) {
        // CPU-side UL duals ride on the DL-2 pilots; UE-side DL duals come from DL-1
        RVec cpu_gains(h_est.cols());
        for (Eigen::Index i = 0; i < h_est.cols(); ++i)
          cpu_gains(i) = std::norm(h_est.col(i).dot(bf.w.col(i)));
        compute_nu_mu_bar(ue_duals, d, bs_duals.eta, bs_duals.zeta, uop, cpu_gains, alpha,
                          so.nu_floor);
        std::optional<DlObservation> dl1, dl2;
        if (alpha != 0.0)
          dl1 = dl_pilot_phase(ch, bf.w, *pilots, std::nullopt, dl_noise,
                               detail::phase_seed(seed, scheme, it, detail::Phase::Dl1));
        if (alpha != 1.0) {
          RVec mu_flat(static_cast<Eigen::Index>(d.num_streams()));
          for (std::size_t k = 0; k < d.num_ue; ++k)
            for (std::size_t s = 0; s < d.streams_per_ue; ++s)
              mu_flat(static_cast<Eigen::Index>(d.stream(s, k))) =
                  ue_duals.mu_bar(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k));
          dl2 = dl_pilot_phase(ch, bf.w, *pilots, sqrt_weights(mu_flat), dl_noise,
                               detail::phase_seed(seed, scheme, it, detail::Phase::Dl2));
        }
        for (std::size_t k = 0; k < d.num_ue; ++k) {
          const auto ki = static_cast<Eigen::Index>(k);
          const auto sn = static_cast<Eigen::Index>(d.streams_per_ue);
          const auto first = static_cast<Eigen::Index>(d.stream(0, k));
          UeTrainedInputs in;
          in.v_prev = bf.v.middleCols(first, sn);
          in.gamma_bar = uop.gamma_bar.col(ki);
          in.gamma = RVec::Constant(sn, 1.0);
          in.nu_bar = RVec::Zero(sn);
          if (dl1) {
            in.y_dl1 = &dl1->y[k];
            in.noise_var_dl1 = dl1->noise_var;
            const CMat g_hat = ue_estimated_dl_channels(dl1->y[k], *pilots);
            in.gamma = ue_local_dl_sinr(d, k, g_hat, bf.v, sc.sigma2_ue).cwiseMax(1e-12);
            for (Eigen::Index s = 0; s < sn; ++s)
              in.nu_bar(s) = sinr_constraint_dual(
                  bs_duals.eta(ki), alpha, in.gamma(s),
                  std::norm(bf.v.col(first + s).dot(g_hat.col(first + s))), so.nu_floor);
          }
          if (dl2) {
            in.y_dl2 = &dl2->y[k];
            in.noise_var_dl2 = dl2->noise_var;
          }
          const auto sol = solve_ue_beamformers_estimated(d, k, *pilots, in, ue_opt);
          ue_duals.lambda_bar(ki) = sol.lambda;
          for (Eigen::Index s = 0; s < sn; ++s) v_new.col(first + s) = sol.v[static_cast<std::size_t>(s)];
        }
        detail::keep_switched_off(d, bs_duals, alpha, bf.v, v_new);
      } else {
        const auto [ha, hb] = so.heuristic_weights(it - 1);
        const auto weights = HeuristicWeights::constant(d, ha, hb);
        RVec amp(static_cast<Eigen::Index>(d.num_streams()));
        for (std::size_t k = 0; k < d.num_ue; ++k)
          for (std::size_t s = 0; s < d.streams_per_ue; ++s)
            amp(static_cast<Eigen::Index>(d.stream(s, k))) =
                weights.a(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k));
        const auto dl2 = dl_pilot_phase(ch, bf.w, *pilots, sqrt_weights(amp), dl_noise,
                                        detail::phase_seed(seed, scheme, it, detail::Phase::Dl2));
        for (std::size_t k = 0; k < d.num_ue; ++k) {
          const auto sol = solve_ue_beamformers_heuristic(d, k, dl2.y[k], dl2.noise_var, *pilots,
                                                          weights, sc.sigma2_ue, sc.rho_ue,
                                                          so.bisect_tol);
          ue_duals.lambda_bar(static_cast<Eigen::Index>(k)) = sol.lambda;
          for (std::size_t s = 0; s < d.streams_per_ue; ++s)
            v_new.col(static_cast<Eigen::Index>(d.stream(s, k))) = sol.v[s];
        }
      }
      if (so.ue_full_power) scale_to_ue_budget(d, v_new, sc.rho_ue);
      bf.v = std::move(v_new);
      record(bf);
    } catch (const std::exception& e) {
      throw fail(it, e);
    }
  }

  res.final_bf = bf;
  res.audit = power_audit(d, bf);
  res.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// Composes a separate scheme from its DL-only and UL-only runs: DL metrics
/// from the DL phase, UL metrics from the UL phase.
inline RunResult compose_separate(Scheme scheme, const RunResult& dl_run, const RunResult& ul_run,
                                  const ChannelSet& ch, const ScenarioConfig& sc) {
  if (dl_run.series.size() != ul_run.series.size())
    throw ConfigError("separate phases must run the same number of iterations");
  RunResult res;
  res.scheme = scheme;
  res.drop = dl_run.drop;
  res.iterations = dl_run.iterations;
  for (std::size_t i = 0; i < dl_run.series.size(); ++i) {
    IterationRecord r;
    r.min_dl = dl_run.series[i].min_dl;
    r.min_ul = ul_run.series[i].min_ul;
    r.objective = weighted_objective(r.min_dl, r.min_ul, sc.alpha);
    res.series.push_back(r);
  }
  res.final_bf = dl_run.final_bf;
  res.final_bf_ul = ul_run.final_bf;
  res.audit = dl_run.audit;
  res.audit.bs = res.audit.bs.cwiseMax(ul_run.audit.bs);
  res.audit.ue = res.audit.ue.cwiseMax(ul_run.audit.ue);
  res.max_power_excess = std::max(dl_run.max_power_excess, ul_run.max_power_excess);
  res.wall_time_s = dl_run.wall_time_s + ul_run.wall_time_s;
  (void)ch;
  return res;
}

inline RunResult run_separate(Scheme scheme, const ChannelSet& ch, const SimConfig& cfg,
                              std::size_t iters_per_phase, std::uint64_t seed) {
  const auto [dl, ul] = separate_parts(scheme);
  return compose_separate(scheme, run_scheme(dl, ch, cfg, iters_per_phase, seed),
                          run_scheme(ul, ch, cfg, iters_per_phase, seed), ch, cfg.scenario);
}

/// Effective-rate trajectory for one block size under the overhead model.
inline std::vector<double> effective_series(const RunResult& r, const OverheadModel& model,
                                            double block_slots) {
  std::vector<double> out;
  out.reserve(r.series.size());
  for (std::size_t i = 0; i < r.series.size(); ++i)
    out.push_back(effective_rate(r.series[i].objective, i, r.scheme, model, block_slots));
  return out;
}

/// Best effective rate over iterations >= 1 (iteration 0 has not been trained).
inline std::pair<double, std::size_t> best_effective_rate(const RunResult& r,
                                                          const OverheadModel& model,
                                                          double block_slots) {
  const auto eff = effective_series(r, model, block_slots);
  double best = 0.0;
  std::size_t arg = 0;
  for (std::size_t i = 1; i < eff.size(); ++i)
    if (eff[i] > best) {
      best = eff[i];
      arg = i;
    }
  return {best, arg};
}

struct MonteCarloResult {
  std::vector<Scheme> schemes;
  std::size_t drops = 0;
  std::size_t iterations = 0;
  std::vector<double> block_sizes;
  OverheadModel overhead;
  /// runs[scheme index][drop]
  std::vector<std::vector<RunResult>> runs;

  /// Mean objective after each iteration, over drops.
  std::vector<double> mean_objective(std::size_t scheme_idx) const {
    std::vector<double> m(iterations + 1, 0.0);
    for (const auto& r : runs[scheme_idx])
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += r.series[i].objective;
    for (auto& x : m) x /= static_cast<double>(runs[scheme_idx].size());
    return m;
  }

  /// Mean effective rate per iteration for one block size.
  std::vector<double> mean_effective(std::size_t scheme_idx, double block_slots) const {
    std::vector<double> m(iterations + 1, 0.0);
    for (const auto& r : runs[scheme_idx]) {
      const auto e = effective_series(r, overhead, block_slots);
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += e[i];
    }
    for (auto& x : m) x /= static_cast<double>(runs[scheme_idx].size());
    return m;
  }

  /// Iteration-optimal mean effective rate (iterations >= 1).
  double best_mean_effective(std::size_t scheme_idx, double block_slots) const {
    const auto m = mean_effective(scheme_idx, block_slots);
    double best = 0.0;
    for (std::size_t i = 1; i < m.size(); ++i) best = std::max(best, m[i]);
    return best;
  }

  std::size_t index_of(Scheme s) const {
    for (std::size_t i = 0; i < schemes.size(); ++i)
      if (schemes[i] == s) return i;
    throw ConfigError("scheme '" + std::string(scheme_name(s)) + "' not in this experiment");
  }
};

inline std::uint64_t drop_seed(std::uint64_t master_seed, std::size_t drop) {
  return derive_seed(master_seed, {0xd0d0ULL, drop});
}

/// All requested schemes on one drop; separate schemes reuse the
/// single-direction runs of the same drop.
inline std::vector<RunResult> run_drop(const SimConfig& cfg, const std::vector<Scheme>& schemes,
                                       std::size_t drop, std::size_t iters) {
  const std::uint64_t seed = drop_seed(cfg.scenario.seed, drop);
  const auto geometry = generate_geometry(cfg.scenario, seed);
  const auto channels = draw_channels(geometry, cfg.scenario, seed);

  std::map<Scheme, RunResult> base;
  const auto get = [&](Scheme s) -> const RunResult& {
    auto it = base.find(s);
    if (it == base.end()) it = base.emplace(s, run_scheme(s, channels, cfg, iters, seed)).first;
    return it->second;
  };
  std::vector<RunResult> out;
  for (Scheme s : schemes) {
    RunResult r;
    if (is_separate(s)) {
      const auto [dl, ul] = separate_parts(s);
      r = compose_separate(s, get(dl), get(ul), channels, cfg.scenario);
    } else {
      r = get(s);
    }
    r.drop = drop;
    out.push_back(std::move(r));
  }
  return out;
}

/// Independent drops on a worker pool; results are placed by drop index so
/// the outcome does not depend on scheduling.
inline MonteCarloResult monte_carlo(const SimConfig& cfg, const std::vector<Scheme>& schemes,
                                    std::size_t drops, std::size_t iters,
                                    const std::vector<double>& block_sizes,
                                    std::size_t threads = 0) {
  if (drops < 1) throw ConfigError("monte_carlo needs at least one drop");
  MonteCarloResult mc;
  mc.schemes = schemes;
  mc.drops = drops;
  mc.iterations = iters;
  mc.block_sizes = block_sizes;
  mc.overhead = OverheadModel::from_config(cfg.training);
  std::vector<std::vector<RunResult>> per_drop(drops);

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, drops);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t drop = next++; drop < drops; drop = next++) {
      try {
        per_drop[drop] = run_drop(cfg, schemes, drop, iters);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  mc.runs.assign(schemes.size(), {});
  for (std::size_t si = 0; si < schemes.size(); ++si)
    for (std::size_t drop = 0; drop < drops; ++drop) mc.runs[si].push_back(per_drop[drop][si]);
  return mc;
}

inline constexpr const char* kCsvHeader =
    "scheme,drop,iteration,min_dl_rate,min_ul_rate,objective,block_slots,effective_rate";

/// One row per (scheme, drop, iteration, block size), sorted in that order
/// with schemes by name; values with 9 significant digits.
inline void emit_csv(const std::vector<RunResult>& results, const std::vector<double>& block_sizes,
                     const OverheadModel& model, std::ostream& out) {
  std::vector<const RunResult*> order;
  for (const auto& r : results) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const RunResult* a, const RunResult* b) {
    const auto na = scheme_name(a->scheme), nb = scheme_name(b->scheme);
    if (na != nb) return na < nb;
    return a->drop < b->drop;
  });
  std::vector<double> blocks = block_sizes;
  std::sort(blocks.begin(), blocks.end());
  out << kCsvHeader << '\n';
  char buf[512];
  for (const RunResult* r : order)
    for (std::size_t i = 0; i < r->series.size(); ++i)
      for (double block : blocks) {
        const auto& rec = r->series[i];
        std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      std::string(scheme_name(r->scheme)).c_str(), r->drop, i, rec.min_dl,
                      rec.min_ul, rec.objective, block,
                      effective_rate(rec.objective, i, r->scheme, model, block));
        out << buf;
      }
}

inline void emit_csv(const std::vector<RunResult>& results, const std::vector<double>& block_sizes,
                     const OverheadModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  emit_csv(results, block_sizes, model, out);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::vector<RunResult> flatten(const MonteCarloResult& mc) {
  std::vector<RunResult> all;
  for (const auto& per_scheme : mc.runs)
    for (const auto& r : per_scheme) all.push_back(r);
  return all;
}

}  // namespace cfmimo
