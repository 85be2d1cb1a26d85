// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "cfmimo/bs_solver.hpp"
#include "cfmimo/training.hpp"
#include "oracles.hpp"

#include <numbers>

using namespace cfmimo;
using namespace cfmimo::test;
using namespace cfmimo::test::bs_oracle;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("surrogate p and q minorize and touch") {
  Rng rng(1);
  for (int inst = 0; inst < 10; ++inst) {
    const CVec h = random_cvec(8, 100 + inst);
    const CVec w0 = random_cvec(8, 200 + inst);
    const double g0 = rng.uniform(0.1, 5.0), gb0 = rng.uniform(0.1, 5.0);
    CHECK_THAT(surrogate_p(w0, g0, w0, g0, h), WithinRel(exact_p(w0, g0, h), 1e-12));
    CHECK_THAT(surrogate_q(w0, gb0, w0, gb0, h), WithinRel(exact_q(w0, gb0, h), 1e-12));
    for (int s = 0; s < 100; ++s) {
      const CVec w = random_cvec(8, 1000 * inst + s, rng.uniform(0.01, 10.0));
      const double g = rng.uniform(1e-3, 20.0);
      const double pe = exact_p(w, g, h), qe = exact_q(w, g, h);
      CHECK(surrogate_p(w, g, w0, g0, h) - pe <= 1e-9 * std::max(1.0, pe));
      CHECK(surrogate_q(w, g, w0, gb0, h) - qe <= 1e-9 * std::max(1.0, qe));
    }
  }
  const CVec zero = CVec::Zero(4);
  CHECK(surrogate_p(random_cvec(4, 1), 2.0, random_cvec(4, 2), 1.0, zero) == 0.0);
  CHECK(surrogate_q(random_cvec(4, 1), 2.0, random_cvec(4, 2), 1.0, zero) == 0.0);
  CHECK_THROWS_AS(surrogate_p(zero, 1.0, zero, 0.0, zero), DomainError);
}

TEST_CASE("common-dual sub-gradient step") {
  RVec eta = RVec::Constant(2, 0.25), zeta = RVec::Constant(2, 0.25);
  RVec rdl(2), rul(2);
  rdl << 2.0, 4.0;  // alpha * rate = 1 (tight) and 2 (slack by 1)
  rul << 2.0, 2.0;
  common_duals_step(eta, zeta, rdl, rul, 1.0, 0.5, 0.1, {});
  CHECK(eta(0) == 0.25);
  CHECK_THAT(eta(1), WithinAbs(0.15, 1e-15));
  CHECK(zeta(0) == 0.25);

  BsDualState s = BsDualState::initial({1, 1, 4, 1, 1}, {});
  CHECK(s.eta.isApprox(RVec::Constant(4, 0.125)));
  update_common_duals(s, RVec::Constant(4, 3.0), RVec::Constant(4, 3.0), 1.0, 0.5, 0.05);
  CHECK(s.eta.isApprox(RVec::Constant(4, 0.125), 1e-14));
  CHECK(s.zeta.isApprox(RVec::Constant(4, 0.125), 1e-14));

  RVec e(3), z(3);
  e << -0.2, 0.3, 0.1;
  z << 0.2, -0.1, 0.4;
  project_common_duals(e, z, {});
  CHECK((e.array() >= 0).all());
  CHECK((z.array() >= 0).all());
  CHECK_THAT(e.sum() + z.sum(), WithinAbs(1.0, 1e-15));
  RVec e2 = RVec::Constant(3, 0.3), z2 = RVec::Constant(3, 0.3);
  project_common_duals(e2, z2, {true, false});
  CHECK(z2.isZero(0.0));
  CHECK_THAT(e2.sum(), WithinAbs(1.0, 1e-15));
}

TEST_CASE("exponentiated dual step keeps the simplex and favours the weakest") {
  RVec eta = RVec::Constant(3, 1.0 / 6), zeta = RVec::Constant(3, 1.0 / 6);
  RVec rdl(3), rul(3);
  rdl << 1.0, 2.0, 3.0;
  rul << 2.0, 2.0, 2.0;
  exponentiated_duals_step(eta, zeta, rdl, rul, 0.5, 0.5, 0.5, {});
  project_common_duals(eta, zeta, {});
  CHECK_THAT(eta.sum() + zeta.sum(), WithinAbs(1.0, 1e-14));
  CHECK(eta(0) > eta(1));
  CHECK(eta(1) > eta(2));
  CHECK((eta.array() > 0).all());
}

TEST_CASE("SINR-constraint duals") {
  CHECK_THAT(sinr_constraint_dual(1.0, 0.5, 1.0, 1.0, 1e-18),
             WithinRel(0.5 * std::numbers::ln2 / 2.0, 1e-15));
  CHECK_THAT(sinr_constraint_dual(1.0, 0.5, 1.0, 1.0, 1e-18), WithinAbs(0.17329, 1e-5));
  CHECK(sinr_constraint_dual(0.0, 0.5, 1.0, 1.0, 1e-18) == 0.0);
  CHECK(std::isfinite(sinr_constraint_dual(1.0, 0.5, 1.0, 0.0, 1e-18)));

  auto in = random_instance({2, 2, 2, 2, 2}, 5);
  in.duals.eta << 0.0, 0.4;
  in.duals.zeta << 0.3, 0.3;
  compute_nu_mu(in.duals, in.d, in.op, in.h, 1.0);
  CHECK(in.duals.mu.isZero(0.0));
  CHECK(in.duals.nu.col(0).isZero(0.0));
  CHECK((in.duals.nu.col(1).array() > 0).all());
  compute_nu_mu(in.duals, in.d, in.op, in.h, 0.5);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double gain = std::norm(in.h.col(i).dot(in.op.w_prev.col(i)));
    const double g = in.op.gamma(i);
    CHECK_THAT(in.duals.nu(i),
               WithinRel(in.duals.eta(i / 2) * 0.5 * g * g * std::log(2.0) / ((g + 1) * gain), 1e-13)
                   || WithinAbs(0.0, 0.0));
  }
}

TEST_CASE("BS beamformers are stationary points of the Lagrangian") {
  // the oracle gradient itself against central differences of the Lagrangian
  {
    auto in = random_instance({4, 2, 2, 2, 2}, 77);
    const CMat w = random_cmat(8, 4, 78);
    const CMat g = lagrangian_gradient(in, w);
    const double step = 1e-6;
    for (Eigen::Index r = 0; r < 8; r += 3)
      for (Eigen::Index c = 0; c < 4; ++c) {
        CMat wp = w, wm = w;
        wp(r, c) += step;
        wm(r, c) -= step;
        const double d_re = (lagrangian(in, wp) - lagrangian(in, wm)) / (2 * step);
        wp = w;
        wm = w;
        wp(r, c) += cplx(0, step);
        wm(r, c) -= cplx(0, step);
        const double d_im = (lagrangian(in, wp) - lagrangian(in, wm)) / (2 * step);
        // dL/dRe = 2 Re(g), dL/dIm = 2 Im(g)
        CHECK_THAT(d_re, WithinAbs(2 * g(r, c).real(), 1e-5));
        CHECK_THAT(d_im, WithinAbs(2 * g(r, c).imag(), 1e-5));
      }
  }

  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const Dims d = seed % 2 ? Dims{4, 2, 3, 2, 2} : Dims{9, 3, 4, 2, 1};
    SECTION("stream-space solve, instance " + std::to_string(seed)) {
      const auto in = random_instance(d, seed);
      const CMat w = solve_bs_beamformers(d, in.duals, in.op, in.h, in.opt);
      const CMat grad = lagrangian_gradient(in, w);
      for (Eigen::Index i = 0; i < w.cols(); ++i)
        CHECK(grad.col(i).norm() / w.col(i).norm() < 1e-8);
    }
    SECTION("dense solve, instance " + std::to_string(seed)) {
      // tiny per-BS regularizers push the solver onto the full-size factorization
      auto in = random_instance(d, seed + 1000, 1e-9);
      in.duals.mu *= 1e-9;
      const CMat w = solve_bs_beamformers(d, in.duals, in.op, in.h, in.opt);
      const CMat grad = lagrangian_gradient(in, w);
      for (Eigen::Index i = 0; i < w.cols(); ++i)
        CHECK(grad.col(i).norm() / w.col(i).norm() < 1e-8);
    }
  }
}

TEST_CASE("solver agrees with a dense per-stream solve") {
  const Dims d{4, 2, 3, 2, 2};
  auto in = random_instance(d, 31);
  const CMat ws = solve_bs_beamformers(d, in.duals, in.op, in.h, in.opt);
  // direct oracle: dense Hermitian solve per stream
  for (Eigen::Index i = 0; i < ws.cols(); ++i) {
    CMat a = CMat::Zero(8, 8);
    const double al = in.opt.alpha;
    for (Eigen::Index j = 0; j < ws.cols(); ++j)
      if (j != i) a += (al * in.duals.nu(j) + (1 - al) * in.duals.mu(i)) * in.h.col(j) * in.h.col(j).adjoint();
    a.diagonal().array() += (1 - al) * in.duals.mu(i) * in.opt.sigma2_bs;
    for (Eigen::Index b = 0; b < 4; ++b) a.diagonal().segment(b * 2, 2).array() += in.duals.lambda(b);
    const double c = al * in.duals.nu(i) / in.op.gamma(i) + (1 - al) * in.duals.mu(i) / in.op.gamma_bar(i);
    const CVec rhs = c * in.h.col(i) * in.h.col(i).dot(in.op.w_prev.col(i));
    const CVec want = a.fullPivLu().solve(rhs);
    CHECK(rel_diff(ws.col(i), want) < 1e-10);
  }
}

TEST_CASE("swapped mu index changes the interference weights") {
  const Dims d{4, 2, 3, 2, 2};
  auto in = random_instance(d, 41);
  const CMat printed = solve_bs_beamformers(d, in.duals, in.op, in.h, in.opt);
  auto opt = in.opt;
  opt.variant = MuIndexVariant::Swapped;
  const CMat swapped = solve_bs_beamformers(d, in.duals, in.op, in.h, opt);
  CHECK(rel_diff(printed, swapped) > 1e-6);
  in.duals.mu.setConstant(0.7);  // equal mu makes the two readings coincide
  CHECK(rel_diff(solve_bs_beamformers(d, in.duals, in.op, in.h, in.opt),
                 solve_bs_beamformers(d, in.duals, in.op, in.h, opt)) < 1e-12);
}

TEST_CASE("noise-free orthogonal-pilot estimates reproduce ideal BS beamformers") {
  const Dims d{4, 2, 3, 2, 2};
  const auto ch = random_channels(d, 50);
  const CMat v = random_cmat(2, 6, 51);
  const CMat h = effective_ul_channels(ch, v);
  const auto pilots = make_pilots(3, 2, 6, PilotMode::Orthogonal, 0);
  const CMat h_hat = ls_estimate_all(ul_pilot_phase(ch, v, pilots, 0.0, 0).y, pilots);
  auto in = random_instance(d, 52);
  const CMat ideal = solve_bs_beamformers(d, in.duals, in.op, h, in.opt);
  const CMat trained = solve_bs_beamformers(d, in.duals, in.op, h_hat, in.opt);
  CHECK(rel_diff(ideal, trained) < 1e-10);
}

TEST_CASE("isotropic regularizer gives a beamformer along the channel") {
  const Dims d{3, 2, 1, 1, 1};
  auto in = random_instance(d, 60);
  in.duals.lambda.setConstant(0.8);
  const CMat w = solve_bs_beamformers(d, in.duals, in.op, in.h, in.opt);
  CHECK(cosine_distance(w.col(0), in.h.col(0)) < 1e-12);
}

TEST_CASE("per-BS power duals and budget scaling") {
  RVec lambda(3);
  lambda << 0.3, 0.3, 0.5;
  RVec powers(3);
  powers << 1.0, 2.0, 0.0;
  const RVec next = update_lambda_bs(lambda, powers, 1.0, 0.1);
  CHECK(next(0) == 0.3);
  CHECK_THAT(next(1), WithinAbs(0.4, 1e-15));
  CHECK_THAT(next(2), WithinAbs(0.4, 1e-15));
  CHECK(update_lambda_bs(RVec::Constant(1, 0.05), RVec::Zero(1), 1.0, 0.1)(0) == 0.0);
  CHECK_THROWS_AS(update_lambda_bs(lambda, powers, 1.0, 0.0), DomainError);

  const Dims d{4, 2, 3, 2, 2};
  const CMat w = random_cmat(8, 6, 70, 3.0);
  const CMat s = scale_to_bs_budget(d, w, 1.0);
  CHECK(bs_powers(d, s).maxCoeff() <= 1.0 * (1 + 1e-9));
  CHECK_THAT(bs_powers(d, s).maxCoeff(), WithinRel(1.0, 1e-12));
  const CMat small = w * 1e-3;
  CHECK(scale_to_bs_budget(d, small, 1.0) == small);
  CHECK_THAT(bs_powers(d, scale_to_bs_budget(d, small, 1.0, true)).maxCoeff(), WithinRel(1.0, 1e-12));
}

TEST_CASE("one SCA step stays feasible and never loses the incumbent") {
  const Dims d{4, 2, 3, 2, 2};
  const auto ch = random_channels(d, 80);
  const CMat v = random_cmat(2, 6, 81);
  const CMat h = effective_ul_channels(ch, v);
  const RVec v_norm2 = v.colwise().squaredNorm().transpose();
  CMat w = scale_to_bs_budget(d, h, 1.0, true);
  for (const auto mask : {DirectionMask{true, true}, DirectionMask{true, false}, DirectionMask{false, true}}) {
    BsStepOptions o;
    o.solve.sigma2_bs = 0.1;
    o.solve.alpha = mask.dl && mask.ul ? 0.5 : (mask.dl ? 1.0 : 0.0);
    o.sigma2_ue = 0.1;
    o.mask = mask;
    const auto before = compute_rates(sinr_from_effective(d, h, w, v_norm2, 0.1, 0.1), o.solve.alpha, mask);
    OperatingPoint op{before.dl.size() ? RMat() : RMat(), RMat(), w, v};
    const auto sinr = sinr_from_effective(d, h, w, v_norm2, 0.1, 0.1);
    op.gamma = sinr.dl;
    op.gamma_bar = sinr.ul;
    auto duals = BsDualState::initial(d, mask);
    const auto step = bs_sca_step(d, duals, op, h, v_norm2, o);
    CHECK(bs_powers(d, step.w).maxCoeff() <= 1.0 * (1 + 1e-9));
    CHECK(step.objective >= before.objective);
    CHECK(step.improved);
    CHECK((duals.eta.array() >= 0).all());
    CHECK((duals.zeta.array() >= 0).all());
    CHECK_THAT(duals.eta.sum() + duals.zeta.sum(), WithinAbs(1.0, 1e-12));
    CHECK((duals.lambda.array() >= 0).all());
  }
}
