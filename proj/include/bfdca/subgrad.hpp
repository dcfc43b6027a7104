// Distance estimation to weighted subdifferential sets of the regularizers,
//   xi1 * Psi^T d||Psi x||_1 + xi2 * D^T dTV(x).
// Sign coordinates on the (thresholded) supports are fixed; the remaining box
// coordinates are optimized: exactly for the orthonormal Haar side, by
// projected gradient for the difference side. The result is an upper bound on
// the true distance under the chosen support.
#pragma once

#include "bfdca/operators.hpp"
#include "bfdca/proj.hpp"

namespace bfdca {

struct RegSubgradient {
  RVec p;   // in wavelet domain, |p_i| <= 1
  RVec qx;  // dx box
  RVec qy;  // dy box
};

/// min over admissible (p,q) of || g + xi1 Psi^T p + xi2 D^T q ||_2 where the
/// subdifferentials are taken at x. Returns the bound and the minimizing pair.
inline double dist_to_reg_subdifferential(const Image& g, const Image& x,
                                          double xi1, double xi2,
                                          RegSubgradient* out = nullptr,
                                          int passes = 40) {
  const size_t n = g.pixels.size();
  const WaveletCoeffs wx = haar_forward(x);
  const GradientField dx = diff_forward(x);
  const double supp_w = 1e-7 * (1.0 + norm_inf(wx.coeffs));
  const double supp_d = 1e-7 * (1.0 + std::max(norm_inf(dx.dx), norm_inf(dx.dy)));

  RVec p(n, 0.0), qx(n, 0.0), qy(n, 0.0);
  std::vector<std::uint8_t> p_fixed(n, 0), qx_fixed(n, 0), qy_fixed(n, 0);
  for (size_t i = 0; i < n; ++i) {
    if (std::abs(wx.coeffs[i]) > supp_w) {
      p[i] = wx.coeffs[i] > 0 ? 1.0 : -1.0;
      p_fixed[i] = 1;
    }
    if (std::abs(dx.dx[i]) > supp_d) {
      qx[i] = dx.dx[i] > 0 ? 1.0 : -1.0;
      qx_fixed[i] = 1;
    }
    if (std::abs(dx.dy[i]) > supp_d) {
      qy[i] = dx.dy[i] > 0 ? 1.0 : -1.0;
      qy_fixed[i] = 1;
    }
  }

  auto residual = [&](const RVec& pp, const RVec& qqx, const RVec& qqy) {
    RVec r = g.pixels;
    if (xi1 > 0.0) {
      WaveletCoeffs pc{x.height, x.width, pp};
      Image pt = haar_adjoint(pc);
      axpy(xi1, pt.pixels, r);
    }
    if (xi2 > 0.0) {
      GradientField qf{x.height, x.width, qqx, qqy};
      Image qt = diff_adjoint(qf);
      axpy(xi2, qt.pixels, r);
    }
    return r;
  };

  const double lip = 8.0 * xi2 * xi2 + 1e-30;
  for (int pass = 0; pass < passes; ++pass) {
    if (xi1 > 0.0) {
      // exact minimization in p: wavelet-transform the rest of the residual
      Image ri(g.height, g.width);
      ri.pixels = residual(RVec(n, 0.0), qx, qy);
      WaveletCoeffs wr = haar_forward(ri);
      for (size_t i = 0; i < n; ++i)
        if (!p_fixed[i]) p[i] = std::clamp(-wr.coeffs[i] / xi1, -1.0, 1.0);
    }
    if (xi2 <= 0.0) break;
    for (int inner = 0; inner < 4; ++inner) {
      Image ri(g.height, g.width);
      ri.pixels = residual(p, qx, qy);
      GradientField gr = diff_forward(ri);
      bool moved = false;
      for (size_t i = 0; i < n; ++i) {
        if (!qx_fixed[i]) {
          const double nv = std::clamp(qx[i] - xi2 * gr.dx[i] / lip, -1.0, 1.0);
          moved |= nv != qx[i];
          qx[i] = nv;
        }
        if (!qy_fixed[i]) {
          const double nv = std::clamp(qy[i] - xi2 * gr.dy[i] / lip, -1.0, 1.0);
          moved |= nv != qy[i];
          qy[i] = nv;
        }
      }
      if (!moved) break;
    }
    if (xi1 <= 0.0 && xi2 <= 0.0) break;
  }
  RVec r = residual(p, qx, qy);
  if (out) *out = RegSubgradient{std::move(p), std::move(qx), std::move(qy)};
  return norm2(r);
}

}  // namespace bfdca
