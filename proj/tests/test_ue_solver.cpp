// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "cfmimo/ue_solver.hpp"
#include "oracles.hpp"

#include <numbers>

using namespace cfmimo;
using namespace cfmimo::test;
using namespace cfmimo::test::ue_oracle;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("surrogate r and t minorize and touch") {
  Rng rng(2);
  for (int inst = 0; inst < 10; ++inst) {
    const CVec g = random_cvec(3, 300 + inst);
    const CVec v0 = random_cvec(3, 400 + inst);
    const double g0 = rng.uniform(0.1, 5.0);
    CHECK_THAT(surrogate_r(v0, g0, v0, g0, g), WithinRel(exact_r(v0, g0, g), 1e-12));
    CHECK_THAT(surrogate_t(v0, g0, v0, g0, g), WithinRel(exact_t(v0, g0, g), 1e-12));
    for (int s = 0; s < 100; ++s) {
      const CVec v = random_cvec(3, 5000 * inst + s, rng.uniform(0.01, 10.0));
      const double gm = rng.uniform(1e-3, 20.0);
      CHECK(surrogate_r(v, gm, v0, g0, g) - exact_r(v, gm, g) <= 1e-9 * std::max(1.0, exact_r(v, gm, g)));
      CHECK(surrogate_t(v, gm, v0, g0, g) - exact_t(v, gm, g) <= 1e-9 * std::max(1.0, exact_t(v, gm, g)));
    }
  }
  CHECK(surrogate_r(random_cvec(3, 1), 1.0, random_cvec(3, 2), 1.0, CVec::Zero(3)) == 0.0);
  CHECK(surrogate_t(random_cvec(3, 1), 1.0, random_cvec(3, 2), 1.0, CVec::Zero(3)) == 0.0);
  CHECK_THROWS_AS(surrogate_r(CVec::Zero(3), 1.0, CVec::Zero(3), 0.0, CVec::Zero(3)), DomainError);
}

TEST_CASE("UE-side SINR-constraint duals") {
  const Dims d{1, 1, 2, 1, 1};
  OperatingPoint op{RMat::Ones(1, 2), RMat::Ones(1, 2), CMat(), CMat()};
  UeDualState s = UeDualState::zeros(d);
  RVec eta(2), zeta(2);
  eta << 1.0, 1.0;
  zeta << 0.0, 0.5;
  compute_nu_mu_bar(s, d, eta, zeta, op, RVec::Ones(2), 0.5);
  CHECK_THAT(s.nu_bar(0, 0), WithinAbs(0.17329, 1e-5));
  CHECK_THAT(s.nu_bar(0, 0), WithinRel(0.25 * std::numbers::ln2, 1e-15));
  CHECK(s.mu_bar(0, 0) == 0.0);
  CHECK(s.mu_bar(0, 1) > 0.0);
  compute_nu_mu_bar(s, d, eta, zeta, op, RVec::Ones(2), 0.0);
  CHECK(s.nu_bar.isZero(0.0));
}

TEST_CASE("ideal UE beamformers: stationarity and the power budget") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dims d = seed % 2 ? Dims{4, 2, 3, 2, 2} : Dims{4, 2, 4, 3, 2};
    // small budget: constraint active; huge budget: multiplier zero
    for (const double rho : {1e-3, 1e6}) {
      auto in = random_instance(d, seed, rho);
      const CMat v = solve_ue_beamformers_ideal(in.ch, in.w, in.duals, in.op, in.opt);
      for (std::size_t k = 0; k < d.num_ue; ++k) {
        const double lambda = in.duals.lambda_bar(static_cast<Eigen::Index>(k));
        const auto sn = static_cast<Eigen::Index>(d.streams_per_ue);
        const double power = v.middleCols(static_cast<Eigen::Index>(k) * sn, sn).squaredNorm();
        CHECK(power <= rho * (1 + 1e-9));
        CHECK(lambda * (rho - power) <= 1e-6 * rho * std::max(1.0, lambda));
        if (rho > 1.0) {
          CHECK(lambda == 0.0);
        } else {
          CHECK(lambda > 0.0);
          CHECK_THAT(power, WithinRel(rho, 1e-6));
        }
        for (std::size_t s = 0; s < d.streams_per_ue; ++s) {
          const CVec vi = v.col(static_cast<Eigen::Index>(d.stream(s, k)));
          CHECK(ue_gradient(in, k, s, vi, lambda).norm() / vi.norm() < 1e-8);
        }
      }
    }
  }
}

TEST_CASE("budget solve on a hand-checkable system") {
  // A = diag(1, 3), b = (1, 1): power(l) = 1/(1+l)^2 + 1/(3+l)^2
  UeStreamSystem sys{CMat::Zero(2, 2), CVec::Ones(2)};
  sys.a(0, 0) = 1.0;
  sys.a(1, 1) = 3.0;
  const auto free = solve_with_power_budget({sys}, 2.0);
  CHECK(free.lambda == 0.0);
  CHECK_THAT(free.v[0](0).real(), WithinRel(1.0, 1e-14));
  CHECK_THAT(free.v[0](1).real(), WithinRel(1.0 / 3.0, 1e-14));
  // at l = 1 the power is 1/4 + 1/16
  const auto tight = solve_with_power_budget({sys}, 0.3125, 1e-12);
  CHECK_THAT(tight.lambda, WithinRel(1.0, 1e-8));
  CHECK(tight.v[0].squaredNorm() <= 0.3125 * (1 + 1e-9));
}

TEST_CASE("trained UE design reproduces the ideal one without pilot noise") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Dims d{4, 2, 3, 2, 2};
    for (const double rho : {1e-3, 1e6}) {
      auto in = random_instance(d, seed + 50, rho);
      const auto pilots = make_pilots(3, 2, 6, PilotMode::Orthogonal, 0);
      const auto dl1 = dl_pilot_phase(in.ch, in.w, pilots, std::nullopt, 0.0, 0);
      const auto dl2 = dl_pilot_phase(in.ch, in.w, pilots, sqrt_weights(flat(in.duals.mu_bar)), 0.0, 0);
      const CMat ideal = solve_ue_beamformers_ideal(in.ch, in.w, in.duals, in.op, in.opt);
      for (std::size_t k = 0; k < 3; ++k) {
        const auto sol = solve_ue_beamformers_estimated(d, k, pilots, trained_inputs(in, k, &dl1, &dl2), in.opt);
        for (std::size_t s = 0; s < 2; ++s)
          CHECK(rel_diff(sol.v[s], ideal.col(static_cast<Eigen::Index>(d.stream(s, k)))) < 1e-10);
      }
    }
  }
}

TEST_CASE("alpha = 1 gives the MMSE receiver") {
  const Dims d{4, 2, 3, 2, 2};
  auto in = random_instance(d, 90, 1e9);
  in.opt.alpha = 1.0;
  const auto pilots = make_pilots(3, 2, 8, PilotMode::Orthogonal, 0);
  const auto dl1 = dl_pilot_phase(in.ch, in.w, pilots, std::nullopt, 0.0, 0);
  const double tau = 8.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto sol = solve_ue_beamformers_estimated(d, k, pilots, trained_inputs(in, k, &dl1, nullptr), in.opt);
    CHECK(sol.lambda == 0.0);
    const CMat& y = dl1.y[k];
    CMat cov = y * y.adjoint() / tau;
    cov.diagonal().array() += in.opt.sigma2_ue;
    for (std::size_t s = 0; s < 2; ++s) {
      const CVec mmse = cov.ldlt().solve(y * pilots.pilot(d.stream(s, k)) / tau);
      CHECK(cosine_distance(sol.v[s], mmse) < 1e-8);
    }
  }
}

TEST_CASE("alpha = 0 ignores the first DL pilot block") {
  const Dims d{4, 2, 3, 2, 2};
  auto in = random_instance(d, 91, 1e-2);
  in.opt.alpha = 0.0;
  const auto pilots = make_pilots(3, 2, 6, PilotMode::Orthogonal, 0);
  const auto dl1 = dl_pilot_phase(in.ch, in.w, pilots, std::nullopt, 0.0, 0);
  const auto dl2 = dl_pilot_phase(in.ch, in.w, pilots, sqrt_weights(flat(in.duals.mu_bar)), 0.3, 4);
  DlObservation garbage = dl1;
  for (auto& y : garbage.y) y = random_cmat(y.rows(), y.cols(), 1234, 1e6);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto a = solve_ue_beamformers_estimated(d, k, pilots, trained_inputs(in, k, &dl1, &dl2), in.opt);
    const auto b = solve_ue_beamformers_estimated(d, k, pilots, trained_inputs(in, k, &garbage, &dl2), in.opt);
    auto no_dl1 = trained_inputs(in, k, nullptr, &dl2);
    const auto c = solve_ue_beamformers_estimated(d, k, pilots, no_dl1, in.opt);
    for (std::size_t s = 0; s < 2; ++s) {
      CHECK(a.v[s] == b.v[s]);
      CHECK(a.v[s] == c.v[s]);
    }
  }
}

TEST_CASE("heuristic design against its true-channel form") {
  const Dims d{4, 2, 3, 2, 2};
  auto in = random_instance(d, 92, 1e9);
  const auto weights = HeuristicWeights::constant(d, 1.0, 0.0);
  const auto pilots = make_pilots(3, 2, 6, PilotMode::Orthogonal, 0);
  const auto dl2 = dl_pilot_phase(in.ch, in.w, pilots, RVec::Ones(6), 0.0, 0);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto got = ue_heuristic_systems(d, k, dl2.y[k], 0.0, pilots, weights, in.opt.sigma2_ue);
    const auto want = ue_heuristic_ideal_systems(d, k, dl_channels_at_ue(in.ch, k, in.w), weights, in.opt.sigma2_ue);
    for (std::size_t s = 0; s < 2; ++s)
      CHECK(rel_diff(solve_stream_fixed(got[s], 0.0), solve_stream_fixed(want[s], 0.0)) < 1e-8);
  }

  SECTION("noisy pilots converge as tau grows") {
    const double sigma2 = 0.05;
    const std::size_t k = 1, s = 0;
    const CVec oracle = solve_stream_fixed(
        ue_heuristic_ideal_systems(d, k, dl_channels_at_ue(in.ch, k, in.w), weights, sigma2)[s], 0.0);
    std::vector<double> err;
    for (std::size_t tau : {32u, 128u, 512u}) {
      const auto book = make_pilots(3, 2, tau, PilotMode::Orthogonal, 0);
      double acc = 0.0;
      for (std::uint64_t t = 0; t < 20; ++t) {
        const auto obs = dl_pilot_phase(in.ch, in.w, book, RVec::Ones(6), sigma2, 700 + t);
        const auto sys = ue_heuristic_systems(d, k, obs.y[k], obs.noise_var, book, weights, sigma2);
        // the trained system is tau times the ideal one
        acc += rel_diff(solve_stream_fixed(sys[s], 0.0), oracle);
      }
      err.push_back(acc / 20);
    }
    CHECK(err[1] < err[0]);
    CHECK(err[2] < err[1]);
  }

  SECTION("b = 1 cancels the noise correction") {
    const auto ones = HeuristicWeights::constant(d, 1.0, 1.0);
    const auto obs = dl_pilot_phase(in.ch, in.w, pilots, RVec::Ones(6), in.opt.sigma2_ue, 3);
    const auto sys = ue_heuristic_systems(d, 0, obs.y[0], in.opt.sigma2_ue, pilots, ones, in.opt.sigma2_ue);
    CHECK(sys[0].a == obs.y[0] * obs.y[0].adjoint());
  }
}

TEST_CASE("heuristic with dual-matched weights is collinear with the optimal design") {
  const Dims d{4, 2, 3, 2, 2};
  auto in = random_instance(d, 93, 1e9);
  in.duals.nu_bar.setConstant(0.8);
  in.duals.mu_bar.setConstant(0.3);
  const double a = in.opt.alpha;
  const auto weights = HeuristicWeights::constant(d, a * 0.8 + (1 - a) * 0.3, a * 0.8);
  for (std::size_t k = 0; k < 3; ++k) {
    const CMat g = dl_channels_at_ue(in.ch, k, in.w);
    const auto opt = ue_ideal_systems(d, k, in.duals, in.op, g, in.opt);
    // b_i sigma2 with b = alpha nu matches the optimal noise term once divided by a
    auto heur = ue_heuristic_ideal_systems(d, k, g, weights, in.opt.sigma2_ue);
    for (std::size_t s = 0; s < 2; ++s)
      CHECK(cosine_distance(solve_stream_fixed(opt[s], 0.0), solve_stream_fixed(heur[s], 0.0)) < 1e-10);
  }
}
