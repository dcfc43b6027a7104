// Quality metrics (RLNE, PSNR, NRE) and theory diagnostics: the KKT residual
// of the single-level reformulation at an outer iterate, and the round trip
// between the penalized and constrained solvers.
#pragma once

#include "bfdca/baselines.hpp"
#include "bfdca/penalty.hpp"

namespace bfdca {

/// ||x_bar - x_star||_2 / ||x_bar||_2 (denominator is the reconstruction).
inline double rlne(const Image& x_bar, const Image& x_star) {
  require(x_bar.same_shape(x_star), "rlne: dimension mismatch");
  const double den = norm2(x_bar.pixels);
  require(den > 0.0, "rlne: zero reconstruction norm");
  double s = 0.0;
  for (size_t i = 0; i < x_bar.pixels.size(); ++i) {
    const double d = x_bar.pixels[i] - x_star.pixels[i];
    s += d * d;
  }
  return std::sqrt(s) / den;
}

/// 20 log10( sqrt(n) / ||x_bar - x_star||_2 ) in dB; +inf on exact recovery.
inline double psnr(const Image& x_bar, const Image& x_star) {
  require(x_bar.same_shape(x_star), "psnr: dimension mismatch");
  double s = 0.0;
  for (size_t i = 0; i < x_bar.pixels.size(); ++i) {
    const double d = x_bar.pixels[i] - x_star.pixels[i];
    s += d * d;
  }
  if (s == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(std::sqrt(static_cast<double>(x_bar.n())) / std::sqrt(s));
}

/// ||Phi x_star - b||_2 / (1 + ||b||_2), the data-consistency residual.
inline double nre(const Image& x_star, const KSpaceData& b, const SamplingMask& mask) {
  KSpaceData fx = fourier_forward(x_star, mask);
  require(fx.size() == b.size(), "nre: dimension mismatch");
  double s = 0.0;
  for (size_t i = 0; i < fx.size(); ++i) s += std::norm(fx[i] - b[i]);
  return std::sqrt(s) / (1.0 + cnorm2(b));
}

/// Relative KKT residuals of the inequality-constrained single-level problem
/// at (z, multipliers from the lower solve). All components are normalized.
struct KktResidual {
  double stationarity_x = 0.0;
  double stationarity_r = 0.0;
  double complementarity = 0.0;
  double feasibility = 0.0;
  double xi0 = 0.0, xi1 = 0.0, xi2 = 0.0;

  double max_component() const {
    return std::max({stationarity_x, stationarity_r, complementarity, feasibility});
  }
};

/// Candidate multipliers: (xi1, xi2) = xi0 * lower multipliers; the scalar
/// xi0 >= 0 is fitted to minimize the x-stationarity distance.
inline KktResidual kkt_residual(const OuterPoint& z, const LowerSolution& lower,
                                const Dataset& dataset) {
  KktResidual out;
  const double gf_val = 1.0 / dataset.mask_val.m;
  const double gf_tr = 1.0 / dataset.mask_tr.m;
  const double gr = 1.0 / static_cast<double>(z.x.n());
  Image grad_val = detail::grad_fidelity(z.x, dataset.mask_val, dataset.b_val);
  Image grad_tr = detail::grad_fidelity(z.x, dataset.mask_tr, dataset.b_tr);
  const double scale =
      1.0 + gf_val * norm2(fourier_adjoint(dataset.b_val, dataset.mask_val).pixels);

  auto dist_at = [&](double xi0, int passes) {
    Image g(z.x.height, z.x.width);
    for (size_t i = 0; i < g.pixels.size(); ++i)
      g.pixels[i] = gf_val * grad_val.pixels[i] + xi0 * gf_tr * grad_tr.pixels[i];
    return dist_to_reg_subdifferential(g, z.x, xi0 * lower.xi1 * gr,
                                       xi0 * lower.xi2 * gr, nullptr, passes);
  };

  // golden-section on xi0 over a bracket, then refine
  double lo = 0.0, hi = 4.0;
  while (dist_at(hi, 6) < dist_at(0.75 * hi, 6) && hi < 1e4) hi *= 2.0;
  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - golden * (hi - lo), b = lo + golden * (hi - lo);
  double fa = dist_at(a, 10), fb = dist_at(b, 10);
  for (int it = 0; it < 30; ++it) {
    if (fa <= fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - golden * (hi - lo);
      fa = dist_at(a, 10);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + golden * (hi - lo);
      fb = dist_at(b, 10);
    }
  }
  const double xi0 = std::max(0.0, 0.5 * (lo + hi));
  out.xi0 = xi0;
  out.xi1 = xi0 * lower.xi1;
  out.xi2 = xi0 * lower.xi2;
  out.stationarity_x = dist_at(xi0, 60) / scale;

  // r-stationarity: xi0 * (-dh(r)) - (xi1, xi2) against the normal cone
  {
    double e1 = xi0 * lower.xi1 - out.xi1;
    double e2 = xi0 * lower.xi2 - out.xi2;
    if (z.r1 <= 1e-14 && e1 > 0.0) e1 = 0.0;
    if (z.r2 <= 1e-14 && e2 > 0.0) e2 = 0.0;
    out.stationarity_r = std::hypot(e1, e2) / (1.0 + std::abs(out.xi1) + std::abs(out.xi2));
  }

  const double fid_tr = fid_value(z.x, dataset.mask_tr, dataset.b_tr);
  const double c0 = fid_tr - lower.value;
  const double c1 = psi_l1(z.x) - z.r1;
  const double c2 = psi_tv(z.x) - z.r2;
  const double cs = 1.0 + std::abs(lower.value);
  out.complementarity = std::max({std::abs(xi0 * c0) / (cs * (1.0 + xi0)),
                                  std::abs(out.xi1 * c1) / (1.0 + out.xi1),
                                  std::abs(out.xi2 * c2) / (1.0 + out.xi2)});
  out.feasibility =
      std::max({0.0, c0 / cs, c1 / (1.0 + z.r1), c2 / (1.0 + z.r2), -z.r1, -z.r2});
  return out;
}

/// Both directions of the penalized/constrained equivalence.
struct RoundTripReport {
  double disc_penalized_to_constrained = 0.0;  // Lemma: S_p -> S_c
  double disc_constrained_to_penalized = 0.0;  // Lemma: S_c -> S_p
  double x_norm = 0.0;
  Hyperparams radii = Hyperparams::radii(0, 0);
  Hyperparams recovered_weights = Hyperparams::weights(0, 0);
};

inline RoundTripReport equivalence_roundtrip(const Dataset& dataset,
                                             const Hyperparams& lam,
                                             const AdmmConfig& cfg = {}) {
  require(lam.kind == Hyperparams::Kind::weights && lam.v1 >= 0 && lam.v2 >= 0,
          "equivalence_roundtrip: nonnegative weights expected");
  RoundTripReport rep;
  Image x_pen = solve_penalized(dataset, lam, cfg);
  rep.x_norm = norm2(x_pen.pixels);
  rep.radii = Hyperparams::radii(psi_l1(x_pen), psi_tv(x_pen));

  LowerSolution con = solve_lower(dataset, rep.radii, cfg);
  {
    double s = 0.0;
    for (size_t i = 0; i < x_pen.pixels.size(); ++i) {
      const double d = con.x_bar.pixels[i] - x_pen.pixels[i];
      s += d * d;
    }
    rep.disc_penalized_to_constrained = std::sqrt(s);
  }

  rep.recovered_weights = Hyperparams::weights(con.xi1, con.xi2);
  Image x_back = solve_penalized(dataset, rep.recovered_weights, cfg);
  {
    double s = 0.0;
    for (size_t i = 0; i < x_back.pixels.size(); ++i) {
      const double d = x_back.pixels[i] - con.x_bar.pixels[i];
      s += d * d;
    }
    rep.disc_constrained_to_penalized = std::sqrt(s);
  }
  return rep;
}

}  // namespace bfdca
