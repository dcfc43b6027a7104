#include <gtest/gtest.h>

#include "bfdca/lower_admm.hpp"
#include "bfdca/subgrad.hpp"
#include "oracles.hpp"

using namespace bfdca;

namespace {

Image random_image(int h, int w, Rng& rng) {
  Image x(h, w);
  for (auto& p : x.pixels) p = rng.uniform01();
  return x;
}

SamplingMask random_mask(int h, int w, double rate, Rng& rng) {
  SamplingMask mk(h, w);
  for (auto& s : mk.selected) s = rng.uniform01() < rate ? 1 : 0;
  mk.selected[0] = 1;
  mk.recount();
  return mk;
}

Dataset make_instance(int size, double rate, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.ground_truth = random_image(size, size, rng);
  d.mask_tr = random_mask(size, size, rate, rng);
  d.mask_val = d.mask_tr;
  d.b_tr = fourier_forward(*d.ground_truth, d.mask_tr);
  d.b_val = d.b_tr;
  return d;
}

AdmmConfig tight_cfg() {
  AdmmConfig cfg;
  cfg.primal_tol = 1e-10;
  cfg.dual_tol = 1e-10;
  cfg.max_iter = 20000;
  return cfg;
}

}  // namespace

TEST(SolveLower, InactiveConstraintsGiveLeastSquares) {
  Rng rng(31);
  Image truth = random_image(8, 8, rng);
  Dataset d;
  d.mask_tr = SamplingMask::full(8, 8);
  d.b_tr = fourier_forward(truth, d.mask_tr);
  // radii strictly larger than the least-squares solution's seminorms
  const double R1 = psi_l1(truth) * 2.0 + 1.0;
  const double R2 = psi_tv(truth) * 2.0 + 1.0;
  LowerSolution sol = solve_lower(d, Hyperparams::radii(R1, R2), tight_cfg());
  ASSERT_TRUE(sol.converged);
  for (int i = 0; i < 64; ++i) EXPECT_NEAR(sol.x_bar.pixels[i], truth.pixels[i], 1e-6);
  EXPECT_NEAR(sol.xi1, 0.0, 1e-8);
  EXPECT_NEAR(sol.xi2, 0.0, 1e-8);
  EXPECT_NEAR(sol.value, 0.0, 1e-10);
}

TEST(SolveLower, ZeroRadiiForceZeroImage) {
  Dataset d = make_instance(8, 0.5, 32);
  LowerSolution sol = solve_lower(d, Hyperparams::radii(0.0, 0.0), tight_cfg());
  EXPECT_NEAR(norm2(sol.x_bar.pixels), 0.0, 1e-8);
  const double expect = 0.5 * cnorm2sq(d.b_tr) / d.mask_tr.m;
  EXPECT_NEAR(sol.value, expect, 1e-8 * (1.0 + expect));
}

TEST(SolveLower, NegativeRadiusThrows) {
  Dataset d = make_instance(8, 0.5, 33);
  EXPECT_THROW(solve_lower(d, Hyperparams::radii(-1.0, 1.0)), std::invalid_argument);
}

TEST(SolveLower, ValueMatchesDenseReferenceSolver) {
  Dataset d = make_instance(8, 0.6, 34);
  const double r1 = 0.05, r2 = 0.07;  // per-pixel radii; raw radii are n * r
  LowerSolution sol = solve_lower(d, Hyperparams::radii(r1, r2), tight_cfg());
  ASSERT_TRUE(sol.converged);

  oracle::ReferenceProblem ref(d.mask_tr, d.b_tr);
  const int n = d.mask_tr.n();
  Eigen::VectorXd xr = ref.solve(true, r1 * n, r2 * n, 120000);
  const double h_ref = ref.fid(xr) / d.mask_tr.m;
  EXPECT_NEAR(sol.value, h_ref, 1e-4 * (1.0 + std::abs(h_ref)));
}

TEST(SolveLower, FeasibilityAtConvergence) {
  Dataset d = make_instance(8, 0.5, 35);
  for (double r1 : {0.02, 0.15}) {
    for (double r2 : {0.03, 0.25}) {
      LowerSolution sol = solve_lower(d, Hyperparams::radii(r1, r2), tight_cfg());
      EXPECT_LE(psi_l1(sol.x_bar), r1 + 1e-5 * (1.0 + r1));
      EXPECT_LE(psi_tv(sol.x_bar), r2 + 1e-5 * (1.0 + r2));
      // complementarity
      EXPECT_LE(std::abs(sol.xi1 * (psi_l1(sol.x_bar) - r1)), 1e-4 * (1.0 + sol.xi1));
      EXPECT_LE(std::abs(sol.xi2 * (psi_tv(sol.x_bar) - r2)), 1e-4 * (1.0 + sol.xi2));
    }
  }
}

TEST(SolveLower, ValueFunctionMonotoneAndConvex) {
  Dataset d = make_instance(8, 0.5, 36);
  Rng rng(37);
  for (int trial = 0; trial < 4; ++trial) {
    const double r1 = rng.uniform(0.01, 0.2), r2 = rng.uniform(0.01, 0.2);
    const double s1 = rng.uniform(0.01, 0.2), s2 = rng.uniform(0.01, 0.2);
    const double ha = solve_lower(d, Hyperparams::radii(r1, r2), tight_cfg()).value;
    const double hb = solve_lower(d, Hyperparams::radii(s1, s2), tight_cfg()).value;
    const double hup = solve_lower(d, Hyperparams::radii(r1 + 0.05, r2 + 0.08), tight_cfg()).value;
    const double hmid =
        solve_lower(d, Hyperparams::radii(0.5 * (r1 + s1), 0.5 * (r2 + s2)), tight_cfg()).value;
    EXPECT_LE(hup, ha + 1e-6);                  // monotone nonincreasing
    EXPECT_LE(hmid, 0.5 * ha + 0.5 * hb + 1e-6);  // convexity probe
  }
}

TEST(RecoverMultipliers, OneDimensionalKktToy) {
  // min 0.5 (x - 2)^2 s.t. |x| <= 1 has solution x = 1 with multiplier 1.
  Dataset d;
  d.mask_tr = SamplingMask::full(1, 1);
  d.b_tr = {std::complex<double>(2.0, 0.0)};
  LowerSolution sol = solve_lower(d, Hyperparams::radii(1.0, 5.0), tight_cfg());
  EXPECT_NEAR(sol.x_bar.pixels[0], 1.0, 1e-6);
  EXPECT_NEAR(sol.xi1, 1.0, 1e-4);
  EXPECT_NEAR(sol.xi2, 0.0, 1e-8);
}

TEST(RecoverMultipliers, SubgradientInequalityForValueFunction) {
  Dataset d = make_instance(8, 0.5, 38);
  Rng rng(39);
  for (int trial = 0; trial < 3; ++trial) {
    const double r1 = rng.uniform(0.02, 0.15), r2 = rng.uniform(0.02, 0.15);
    LowerSolution sol = solve_lower(d, Hyperparams::radii(r1, r2), tight_cfg());
    const double h0 = sol.value;
    for (int coord = 0; coord < 2; ++coord) {
      for (double delta : {1e-3, -1e-3}) {
        double nr1 = r1 + (coord == 0 ? delta : 0.0);
        double nr2 = r2 + (coord == 1 ? delta : 0.0);
        if (nr1 < 0 || nr2 < 0) continue;
        const double hd = solve_lower(d, Hyperparams::radii(nr1, nr2), tight_cfg()).value;
        const double xi = coord == 0 ? sol.xi1 : sol.xi2;
        EXPECT_GE(hd, h0 - xi * delta - 1e-6);
      }
    }
  }
}

TEST(SolveLower, KktStationarityResidual) {
  Dataset d = make_instance(8, 0.5, 40);
  LowerSolution sol = solve_lower(d, Hyperparams::radii(0.04, 0.06), tight_cfg());
  ASSERT_TRUE(sol.converged);
  const double gf = 1.0 / d.mask_tr.m;
  const double gr = 1.0 / sol.x_bar.n();
  KSpaceData fx = fourier_forward(sol.x_bar, d.mask_tr);
  for (size_t i = 0; i < fx.size(); ++i) fx[i] -= d.b_tr[i];
  Image grad = fourier_adjoint(fx, d.mask_tr);
  for (auto& g : grad.pixels) g *= gf;
  const double dist =
      dist_to_reg_subdifferential(grad, sol.x_bar, sol.xi1 * gr, sol.xi2 * gr);
  const double scale = 1.0 + gf * norm2(fourier_adjoint(d.b_tr, d.mask_tr).pixels);
  EXPECT_LE(dist, 1e-4 * scale);
}

TEST(SolveLower, WarmStartReconvergesFast) {
  Dataset d = make_instance(8, 0.5, 41);
  LowerSolver solver(d.mask_tr, d.b_tr);
  AdmmConfig cfg = tight_cfg();
  LowerSolution cold = solver.solve(Hyperparams::radii(0.05, 0.08), cfg);
  LowerSolution warm = solver.solve(Hyperparams::radii(0.0505, 0.0805), cfg);
  EXPECT_TRUE(warm.converged);
  EXPECT_LT(warm.iterations, cold.iterations);
}
