// Constrained lower-level restoration
//   h(r) = min_x fid(x)  s.t.  psi1(x) <= r1,  psi2(x) <= r2
// where fid(x) = 0.5 ||Phi_tr x - b_tr||^2 / m (per-sample reduction) and
// psi1(x) = ||Psi x||_1 / n, psi2(x) = TV(x) / n (per-pixel reductions), so
// radii and multipliers are resolution-independent. Solved by two-block ADMM
// on the splitting u = Phi x - b, v = Psi x, w = Dx with l1-ball indicator
// blocks; the x-update is a single Fourier-diagonal solve. Returns the
// optimum, its value, and the constraint multipliers recovered from the
// converged ADMM duals, so the result is a member of the lower-level KKT
// set M(r).
#pragma once

#include "bfdca/operators.hpp"
#include "bfdca/proj.hpp"

namespace bfdca {

struct AdmmConfig {
  double sigma = 1.0;       // initial penalty, residual-balanced afterwards
  int max_iter = 2000;
  double primal_tol = 1e-6;
  double dual_tol = 1e-6;
  double feas_tol = 1e-5;
  double comp_tol = 1e-5;
  bool adapt_sigma = true;

  void validate() const {
    require(sigma > 0 && max_iter > 0 && primal_tol > 0 && dual_tol > 0,
            "AdmmConfig: all parameters must be positive");
  }
};

struct LowerSolution {
  Image x_bar;
  double xi1 = 0.0;
  double xi2 = 0.0;
  double value = 0.0;  // h(r) = 0.5 ||Phi_tr x_bar - b_tr||^2
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Per-pixel model seminorms.
inline double psi_l1(const Image& x) {
  return norm1(haar_forward(x).coeffs) / x.n();
}
inline double psi_tv(const Image& x) { return tv_value(x) / x.n(); }

/// Per-sample data fidelity.
inline double fid_value(const Image& x, const SamplingMask& mask, const KSpaceData& b) {
  KSpaceData fx = fourier_forward(x, mask);
  double s = 0.0;
  for (size_t i = 0; i < fx.size(); ++i) s += std::norm(fx[i] - b[i]);
  return 0.5 * s / mask.m;
}

/// Multiplier recovery from converged (unscaled) ADMM duals: the dual of the
/// v-constraint lies in the normal cone of the l1 ball (the cone of scaled
/// sign vectors), so ||y||_inf is the multiplier of the raw-radius
/// constraint; scaling by n converts it to the per-pixel constraint.
inline std::pair<double, double> recover_multipliers(const RVec& dual_v,
                                                     const RVec& dual_w,
                                                     const Image& x_bar,
                                                     const Hyperparams& r,
                                                     double feas_tol = 1e-5) {
  const double l1 = psi_l1(x_bar);
  const double tv = psi_tv(x_bar);
  const double n = static_cast<double>(x_bar.n());
  double xi1 = 0.0, xi2 = 0.0;
  if (l1 >= r.v1 - feas_tol * (1.0 + r.v1)) xi1 = n * norm_inf(dual_v);
  if (tv >= r.v2 - feas_tol * (1.0 + r.v2)) xi2 = n * norm_inf(dual_w);
  return {xi1, xi2};
}

/// Warm-startable solver bound to one training dataset.
class LowerSolver {
 public:
  LowerSolver(const SamplingMask& mask_tr, const KSpaceData& b_tr)
      : mask_(mask_tr), b_(b_tr) {
    require(static_cast<int>(b_tr.size()) == mask_tr.m, "LowerSolver: data/mask mismatch");
    const RVec lap = laplace_symbol(mask_.height, mask_.width);
    symbol_ = mask_symbol(mask_);
    for (size_t i = 0; i < symbol_.size(); ++i) symbol_[i] += 1.0 + lap[i];
    reset();
  }

  void reset() {
    const int n = mask_.n();
    x_ = Image(mask_.height, mask_.width);
    u_.assign(b_.size(), {0.0, 0.0});
    v_.assign(n, 0.0);
    w_.assign(2 * static_cast<size_t>(n), 0.0);
    ub_.assign(b_.size(), {0.0, 0.0});
    vb_.assign(n, 0.0);
    wb_.assign(2 * static_cast<size_t>(n), 0.0);
    sigma_ = 0.0;  // set from config on next solve
  }

  LowerSolution solve(const Hyperparams& r, const AdmmConfig& cfg) {
    cfg.validate();
    require(r.v1 >= 0.0 && r.v2 >= 0.0, "solve_lower: negative radius");
    if (sigma_ <= 0.0) sigma_ = cfg.sigma;
    const int n = mask_.n();
    const double bscale = 1.0 + cnorm2(b_);

    LowerSolution sol;
    int it = 0;
    for (; it < cfg.max_iter; ++it) {
      // (u, v, w) block, separable closed forms
      KSpaceData fx = fourier_forward(x_, mask_);
      CVec u_old = u_;
      RVec v_old = v_, w_old = w_;
      const double gf = 1.0 / mask_.m;
      for (size_t i = 0; i < u_.size(); ++i)
        u_[i] = sigma_ / (gf + sigma_) * (fx[i] - b_[i] + ub_[i]);
      WaveletCoeffs px = haar_forward(x_);
      RVec varg(n);
      for (int i = 0; i < n; ++i) varg[i] = px.coeffs[i] + vb_[i];
      v_ = project_l1_ball(varg, r.v1 * n);
      GradientField dxf = diff_forward(x_);
      RVec warg(2 * static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        warg[i] = dxf.dx[i] + wb_[i];
        warg[n + i] = dxf.dy[i] + wb_[n + i];
      }
      w_ = project_l1_ball(warg, r.v2 * n);

      // x block: Fourier-diagonal normal solve
      KSpaceData crhs(u_.size());
      for (size_t i = 0; i < u_.size(); ++i) crhs[i] = u_[i] + b_[i] - ub_[i];
      Image rhs = fourier_adjoint(crhs, mask_);
      WaveletCoeffs vc{mask_.height, mask_.width, RVec(n)};
      for (int i = 0; i < n; ++i) vc.coeffs[i] = v_[i] - vb_[i];
      Image vt = haar_adjoint(vc);
      GradientField wf{mask_.height, mask_.width, RVec(n), RVec(n)};
      for (int i = 0; i < n; ++i) {
        wf.dx[i] = w_[i] - wb_[i];
        wf.dy[i] = w_[n + i] - wb_[n + i];
      }
      Image wt = diff_adjoint(wf);
      for (int i = 0; i < n; ++i) rhs.pixels[i] += vt.pixels[i] + wt.pixels[i];
      x_ = fourier_diag_solve(rhs, symbol_);

      // dual ascent
      fx = fourier_forward(x_, mask_);
      px = haar_forward(x_);
      dxf = diff_forward(x_);
      double pr = 0.0;
      for (size_t i = 0; i < u_.size(); ++i) {
        const auto res = fx[i] - u_[i] - b_[i];
        ub_[i] += res;
        pr += std::norm(res);
      }
      for (int i = 0; i < n; ++i) {
        const double rv = px.coeffs[i] - v_[i];
        vb_[i] += rv;
        pr += rv * rv;
        const double rx = dxf.dx[i] - w_[i];
        const double ry = dxf.dy[i] - w_[n + i];
        wb_[i] += rx;
        wb_[n + i] += ry;
        pr += rx * rx + ry * ry;
      }
      sol.primal_residual = std::sqrt(pr) / bscale;

      // dual residual: sigma * || A^T (Y_new - Y_old) ||; only computed when
      // it can matter (termination candidate or penalty adaptation step)
      if (sol.primal_residual <= cfg.primal_tol || it % 10 == 9) {
        for (size_t i = 0; i < u_.size(); ++i) u_old[i] = u_[i] - u_old[i];
        Image du = fourier_adjoint(u_old, mask_);
        for (int i = 0; i < n; ++i) {
          vc.coeffs[i] = v_[i] - v_old[i];
          wf.dx[i] = w_[i] - w_old[i];
          wf.dy[i] = w_[n + i] - w_old[n + i];
        }
        Image dv = haar_adjoint(vc);
        Image dw = diff_adjoint(wf);
        double dr = 0.0;
        for (int i = 0; i < n; ++i) {
          const double d = du.pixels[i] + dv.pixels[i] + dw.pixels[i];
          dr += d * d;
        }
        sol.dual_residual = sigma_ * std::sqrt(dr) / bscale;
        if (sol.primal_residual <= cfg.primal_tol && sol.dual_residual <= cfg.dual_tol) {
          ++it;
          sol.converged = true;
          break;
        }
      }

      if (cfg.adapt_sigma && (it % 10 == 9)) {
        if (sol.primal_residual > 10.0 * sol.dual_residual && sigma_ < 1e4) {
          sigma_ *= 2.0;
          rescale_duals(0.5);
        } else if (sol.dual_residual > 10.0 * sol.primal_residual && sigma_ > 1e-4) {
          sigma_ *= 0.5;
          rescale_duals(2.0);
        }
      }
    }
    sol.iterations = it;
    sol.x_bar = x_;
    sol.value = fid_value(x_, mask_, b_);
    auto [xi1, xi2] = recover_multipliers(dual_v(), dual_w(), x_, r, cfg.feas_tol);
    sol.xi1 = xi1;
    sol.xi2 = xi2;
    return sol;
  }

  RVec dual_v() const {
    RVec y(vb_.size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = sigma_ * vb_[i];
    return y;
  }
  RVec dual_w() const {
    RVec y(wb_.size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = sigma_ * wb_[i];
    return y;
  }

 private:
  void rescale_duals(double f) {
    for (auto& z : ub_) z *= f;
    for (auto& v : vb_) v *= f;
    for (auto& v : wb_) v *= f;
  }

  SamplingMask mask_;
  KSpaceData b_;
  RVec symbol_;
  Image x_;
  CVec u_, ub_;
  RVec v_, w_, vb_, wb_;
  double sigma_ = 0.0;
};

/// One-shot solve of the lower-level problem on the training split.
inline LowerSolution solve_lower(const Dataset& dataset, const Hyperparams& r,
                                 const AdmmConfig& cfg = {}) {
  require(r.kind == Hyperparams::Kind::radii, "solve_lower: expects radii");
  LowerSolver solver(dataset.mask_tr, dataset.b_tr);
  return solver.solve(r, cfg);
}

}  // namespace bfdca
