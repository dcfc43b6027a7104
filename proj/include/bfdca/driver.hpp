// Outer loop: alternate lower-level solves with penalty subproblems, grow
// the penalty weight alpha when progress stalls on an infeasible iterate,
// and stop once both the step length and the feasibility residual are small.
#pragma once

#include <chrono>

#include "bfdca/metrics.hpp"
#include "bfdca/penalty.hpp"

namespace bfdca {

struct BfdcaConfig {
  double c_alpha = 1.0;
  double c_rho = 1.0;
  double delta_alpha = 0.005;
  double delta_rho = 0.0;
  double alpha0 = 0.0;
  double alpha_max = 10.0;
  double rho0 = 1e-3;
  double rho_max = 1e-3;
  double tol = 1e-3;
  int max_outer = 500;
  int inner_cap = 5000;
  // Initial radii. With r0_relative the configured values are fractions of
  // the adjoint reconstruction's seminorms, which keeps the start binding
  // across image scales and noise levels; absolute radii otherwise.
  double r0_1 = 0.1;
  double r0_2 = 0.5;
  bool r0_relative = true;
  Image x0;  // empty = zero image at dataset dimensions
  AdmmConfig lower_cfg;

  void validate() const {
    require(c_alpha > 0 && c_rho > 0 && delta_alpha >= 0 && delta_rho >= 0,
            "BfdcaConfig: increments must be nonnegative");
    require(alpha_max > alpha0 && alpha0 >= 0, "BfdcaConfig: need alpha_max > alpha0 >= 0");
    require(rho_max >= rho0 && rho0 > 0, "BfdcaConfig: need rho_max >= rho0 > 0");
    require(tol > 0 && max_outer > 0, "BfdcaConfig: tol and max_outer positive");
    require(r0_1 >= 0 && r0_2 >= 0, "BfdcaConfig: initial radii nonnegative");
  }
};

struct TraceRecord {
  int k = 0;
  double r1 = 0, r2 = 0;
  double alpha = 0, rho = 0;
  double eta = 0, delta = 0;
  double phi_value = 0;
  double h_value = 0;
  double xi1 = 0, xi2 = 0;
  double val_err = 0;  // 0.5||Phi_val x^{k+1} - b_val||^2
  double energy = 0;       // E_{alpha_k}(z^{k+1}, z^k, xi^k)
  double energy_prev = 0;  // E_{alpha_k}(z^k, z^{k-1}, xi^{k-1}); NaN at k = 0
  double wall_time = 0;    // seconds since run start
  double rlne = 0, psnr = 0;  // vs ground truth when available, else NaN
  int lower_iterations = 0;
  int inner_iterations = 0;
  double subproblem_residual = 0;
  bool subproblem_converged = true;
};

struct OuterTrace {
  std::vector<TraceRecord> records;
  OuterPoint z_final;
  LowerSolution lower_final;  // lower solve at the terminal radii
  int iterations = 0;
  bool converged = false;
  bool lower_warning = false;
  bool small_radius_warning = false;
};

/// alpha growth rule: grow when max(alpha_k, 1/eta) < c_alpha / Delta.
/// eta = 0 never grows (1/eta = +inf); Delta = 0 with eta > 0 grows
/// (c_alpha / 0 = +inf), so a stalled infeasible iterate still escalates.
inline double update_alpha(double alpha_k, double delta, double eta,
                           const BfdcaConfig& cfg) {
  if (eta <= 0.0) return alpha_k;
  const double lhs = std::max(alpha_k, 1.0 / eta);
  const double rhs = delta > 0.0 ? cfg.c_alpha / delta
                                 : std::numeric_limits<double>::infinity();
  if (lhs < rhs) return std::min(alpha_k + cfg.delta_alpha, cfg.alpha_max);
  return alpha_k;
}

inline double update_rho(double rho_k, double delta, const BfdcaConfig& cfg) {
  if (delta > cfg.c_rho) return std::min(rho_k + cfg.delta_rho, cfg.rho_max);
  return rho_k;
}

inline OuterTrace run_bfdca(const Dataset& dataset, const BfdcaConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  OuterTrace trace;
  OuterPoint z;
  z.x = cfg.x0.pixels.empty() ? Image(dataset.mask_tr.height, dataset.mask_tr.width)
                              : cfg.x0;
  z.r1 = cfg.r0_1;
  z.r2 = cfg.r0_2;
  if (cfg.r0_relative) {
    const Image zf = fourier_adjoint(dataset.b_tr, dataset.mask_tr);
    z.r1 = cfg.r0_1 * psi_l1(zf);
    z.r2 = cfg.r0_2 * psi_tv(zf);
  }

  LowerSolver lower_solver(dataset.mask_tr, dataset.b_tr);
  PenaltySolver subsolver(dataset);

  double alpha = cfg.alpha0, rho = cfg.rho0;
  double prev_step = -1.0;
  OuterPoint z_before;  // z^{k-1}
  double xi1_prev = 0, xi2_prev = 0, h_prev = 0;

  for (int k = 0; k < cfg.max_outer; ++k) {
    LowerSolution lower = lower_solver.solve(Hyperparams::radii(z.r1, z.r2), cfg.lower_cfg);
    if (!lower.converged) trace.lower_warning = true;

    PenaltyState st;
    st.data = &dataset;
    st.z_prev = z;
    st.lower = lower;
    st.alpha = alpha;
    st.rho = rho;
    st.prev_step = prev_step;

    SubproblemResult res = subsolver.solve(st, cfg.inner_cap);
    const double eta = eval_eta(res.z_next, st);
    const double delta = z_dist(res.z_next, z);

    TraceRecord rec;
    rec.k = k;
    rec.r1 = res.z_next.r1;
    rec.r2 = res.z_next.r2;
    rec.alpha = alpha;
    rec.rho = rho;
    rec.eta = eta;
    rec.delta = delta;
    rec.phi_value = res.phi_value;
    rec.h_value = lower.value;
    rec.xi1 = lower.xi1;
    rec.xi2 = lower.xi2;
    rec.val_err = fid_value(res.z_next.x, dataset.mask_val, dataset.b_val);
    rec.energy = eval_energy(res.z_next, z, lower.xi1, lower.xi2, alpha, rho,
                             lower.value, dataset);
    rec.energy_prev =
        k > 0 ? eval_energy(z, z_before, xi1_prev, xi2_prev, alpha, rho, h_prev, dataset)
              : std::numeric_limits<double>::quiet_NaN();
    rec.lower_iterations = lower.iterations;
    rec.inner_iterations = res.inner_iterations;
    rec.subproblem_residual = res.residual_norm;
    rec.subproblem_converged = res.converged;
    if (dataset.ground_truth) {
      rec.rlne = rlne(res.z_next.x, *dataset.ground_truth);
      rec.psnr = psnr(res.z_next.x, *dataset.ground_truth);
    } else {
      rec.rlne = std::numeric_limits<double>::quiet_NaN();
      rec.psnr = std::numeric_limits<double>::quiet_NaN();
    }
    rec.wall_time = elapsed();
    trace.records.push_back(std::move(rec));

    z_before = z;
    xi1_prev = lower.xi1;
    xi2_prev = lower.xi2;
    h_prev = lower.value;
    z = res.z_next;
    prev_step = delta;
    if (std::min(z.r1, z.r2) < 1e-8) trace.small_radius_warning = true;

    if (std::max(delta, eta) < cfg.tol) {
      trace.converged = true;
      break;
    }
    alpha = update_alpha(alpha, delta, eta, cfg);
    rho = update_rho(rho, delta, cfg);
  }

  trace.iterations = static_cast<int>(trace.records.size());
  trace.z_final = z;
  trace.lower_final = lower_solver.solve(Hyperparams::radii(z.r1, z.r2), cfg.lower_cfg);
  return trace;
}

}  // namespace bfdca
