// Proximal building blocks: soft thresholding, exact sort-based projection
// onto the l1 ball and onto the l1-norm epigraph, and projection onto the
// epigraph of the quadratic fidelity 0.5*||c - b||^2 <= s.
#pragma once

#include <numeric>

#include "bfdca/types.hpp"

namespace bfdca {

inline double soft(double v, double tau) {
  if (v > tau) return v - tau;
  if (v < -tau) return v + tau;
  return 0.0;
}

inline void soft_threshold(RVec& v, double tau) {
  for (double& x : v) x = soft(x, tau);
}

/// argmin_{||w||_1 <= radius} ||w - v||_2, by sort and threshold.
inline RVec project_l1_ball(const RVec& v, double radius) {
  require(radius >= 0.0, "project_l1_ball: negative radius");
  if (radius == 0.0) return RVec(v.size(), 0.0);
  if (norm1(v) <= radius) return v;
  RVec mag(v.size());
  for (size_t i = 0; i < v.size(); ++i) mag[i] = std::abs(v[i]);
  std::sort(mag.begin(), mag.end(), std::greater<double>());
  double cum = 0.0, tau = 0.0;
  for (size_t k = 0; k < mag.size(); ++k) {
    cum += mag[k];
    const double t = (cum - radius) / static_cast<double>(k + 1);
    if (k + 1 == mag.size() || mag[k + 1] <= t) {
      tau = t;
      break;
    }
  }
  RVec w(v.size());
  for (size_t i = 0; i < v.size(); ++i) w[i] = soft(v[i], tau);
  return w;
}

/// Projection onto {(v, t) : w ||v||_1 <= t}, w > 0. Returns the multiplier
/// beta >= 0 with v_out = soft(v, w beta), t_out = t + beta.
inline double project_l1_epigraph(RVec& v, double& t, double w = 1.0) {
  const double l1 = w * norm1(v);
  if (l1 <= t) return 0.0;
  const double linf = norm_inf(v);
  if (linf <= -w * t) {
    const double beta = -t;
    std::fill(v.begin(), v.end(), 0.0);
    t = 0.0;
    return beta;
  }
  // Find beta solving w sum_i max(|v_i| - w beta, 0) = t + beta.
  RVec mag(v.size());
  for (size_t i = 0; i < v.size(); ++i) mag[i] = std::abs(v[i]);
  std::sort(mag.begin(), mag.end(), std::greater<double>());
  double cum = 0.0, beta = linf / w;
  for (size_t k = 0; k < mag.size(); ++k) {
    cum += mag[k];
    // segment w beta in [mag[k+1], mag[k]]:
    //   w (cum - (k+1) w beta) = t + beta
    const double cand = (w * cum - t) / (1.0 + static_cast<double>(k + 1) * w * w);
    const double lo = (k + 1 == mag.size()) ? 0.0 : mag[k + 1];
    if (w * cand >= lo && w * cand <= mag[k]) {
      beta = cand;
      break;
    }
  }
  soft_threshold(v, w * beta);
  t += beta;
  return beta;
}

/// Projection onto {(c, s) : w * 0.5 ||c - b||^2 <= s} for complex c, w > 0.
/// Safeguarded Newton on the multiplier; exact to machine precision.
inline void project_quad_epigraph(CVec& c, double& s, const CVec& b, double w = 1.0) {
  require(c.size() == b.size(), "project_quad_epigraph: size mismatch");
  double d2 = 0.0;
  for (size_t i = 0; i < c.size(); ++i) d2 += std::norm(c[i] - b[i]);
  if (w * 0.5 * d2 <= s) return;
  // d = c - b scales by 2/(2 + beta w); s = s_hat + beta/2; solve
  // g(beta) = 2 w d2 / (2 + beta w)^2 - beta/2 - s = 0, beta > 0.
  auto g = [&](double beta) {
    const double q = 2.0 + beta * w;
    return 2.0 * w * d2 / (q * q) - 0.5 * beta - s;
  };
  double lo = 0.0;
  double hi = std::max(1.0, 2.0 * (w * 0.5 * d2 - s));
  while (g(hi) > 0.0) hi *= 2.0;
  double beta = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double q = 2.0 + beta * w;
    const double val = 2.0 * w * d2 / (q * q) - 0.5 * beta - s;
    if (val > 0.0)
      lo = beta;
    else
      hi = beta;
    const double deriv = -4.0 * w * w * d2 / (q * q * q) - 0.5;
    double next = beta - val / deriv;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - beta) <= 1e-16 * (1.0 + beta)) {
      beta = next;
      break;
    }
    beta = next;
  }
  const double scale = 2.0 / (2.0 + beta * w);
  for (size_t i = 0; i < c.size(); ++i) c[i] = b[i] + scale * (c[i] - b[i]);
  s += 0.5 * beta;
}

}  // namespace bfdca
