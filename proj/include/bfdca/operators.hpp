// Linear operators of the restoration model: partial Fourier sampling with
// its adjoint, orthonormal full-depth Haar analysis/synthesis, periodic
// forward differences (anisotropic TV), and an exact Fourier-diagonal solver
// for the normal equations that every ADMM x-update reduces to.
//
// Conventions: unitary DFT (1/sqrt(n) both ways); k-space data are complex;
// adjoints back into image space take the real part, so the effective normal
// operator of the sampling mask is diagonal in the DFT basis with symbol
// (mask(k) + mask(-k)) / 2.
#pragma once

#include "bfdca/fft.hpp"
#include "bfdca/types.hpp"

namespace bfdca {

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

/// (P F) x: unitary DFT restricted to mask-selected frequencies.
inline KSpaceData fourier_forward(const Image& x, const SamplingMask& mask) {
  require(x.height == mask.height && x.width == mask.width,
          "fourier_forward: dimension mismatch");
  CVec grid(x.pixels.size());
  for (size_t i = 0; i < x.pixels.size(); ++i) grid[i] = x.pixels[i];
  CVec spec;
  fft2(grid, spec, x.height, x.width);
  KSpaceData out;
  out.reserve(mask.m);
  for (size_t i = 0; i < spec.size(); ++i)
    if (mask.selected[i]) out.push_back(spec[i]);
  return out;
}

/// Re(F^H P^T y): scatter samples back onto the grid, inverse DFT, real part.
inline Image fourier_adjoint(const KSpaceData& y, const SamplingMask& mask) {
  require(static_cast<int>(y.size()) == mask.m, "fourier_adjoint: dimension mismatch");
  CVec spec(static_cast<size_t>(mask.n()), {0.0, 0.0});
  size_t k = 0;
  for (size_t i = 0; i < spec.size(); ++i)
    if (mask.selected[i]) spec[i] = y[k++];
  CVec grid;
  ifft2(spec, grid, mask.height, mask.width);
  Image img(mask.height, mask.width);
  for (size_t i = 0; i < grid.size(); ++i) img.pixels[i] = grid[i].real();
  return img;
}

// ---- orthonormal Haar, full depth ----

namespace detail {

// One analysis level along rows then columns of the top-left hb x wb block.
inline void haar_level_fwd(RVec& a, int width, int hb, int wb) {
  RVec tmp(static_cast<size_t>(std::max(hb, wb)));
  const double s = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < hb; ++i) {
    double* row = a.data() + static_cast<size_t>(i) * width;
    for (int j = 0; j < wb / 2; ++j) {
      tmp[j] = s * (row[2 * j] + row[2 * j + 1]);
      tmp[wb / 2 + j] = s * (row[2 * j] - row[2 * j + 1]);
    }
    std::copy(tmp.begin(), tmp.begin() + wb, row);
  }
  for (int j = 0; j < wb; ++j) {
    for (int i = 0; i < hb / 2; ++i) {
      const double u = a[static_cast<size_t>(2 * i) * width + j];
      const double v = a[static_cast<size_t>(2 * i + 1) * width + j];
      tmp[i] = s * (u + v);
      tmp[hb / 2 + i] = s * (u - v);
    }
    for (int i = 0; i < hb; ++i) a[static_cast<size_t>(i) * width + j] = tmp[i];
  }
}

inline void haar_level_inv(RVec& a, int width, int hb, int wb) {
  RVec tmp(static_cast<size_t>(std::max(hb, wb)));
  const double s = 1.0 / std::sqrt(2.0);
  for (int j = 0; j < wb; ++j) {
    for (int i = 0; i < hb / 2; ++i) {
      const double u = a[static_cast<size_t>(i) * width + j];
      const double v = a[static_cast<size_t>(hb / 2 + i) * width + j];
      tmp[2 * i] = s * (u + v);
      tmp[2 * i + 1] = s * (u - v);
    }
    for (int i = 0; i < hb; ++i) a[static_cast<size_t>(i) * width + j] = tmp[i];
  }
  for (int i = 0; i < hb; ++i) {
    double* row = a.data() + static_cast<size_t>(i) * width;
    for (int j = 0; j < wb / 2; ++j) {
      const double u = row[j];
      const double v = row[wb / 2 + j];
      tmp[2 * j] = s * (u + v);
      tmp[2 * j + 1] = s * (u - v);
    }
    std::copy(tmp.begin(), tmp.begin() + wb, row);
  }
}

}  // namespace detail

/// Full-depth 2-D orthonormal Haar analysis; requires power-of-two sides.
inline WaveletCoeffs haar_forward(const Image& x) {
  require(is_power_of_two(x.height) && is_power_of_two(x.width),
          "haar_forward: dimensions must be powers of two");
  WaveletCoeffs c{x.height, x.width, x.pixels};
  int hb = x.height, wb = x.width;
  while (hb > 1 && wb > 1) {
    detail::haar_level_fwd(c.coeffs, x.width, hb, wb);
    hb /= 2;
    wb /= 2;
  }
  return c;
}

/// Synthesis (= adjoint = inverse, by orthonormality).
inline Image haar_adjoint(const WaveletCoeffs& c) {
  require(is_power_of_two(c.height) && is_power_of_two(c.width),
          "haar_adjoint: dimensions must be powers of two");
  Image x(c.height, c.width);
  x.pixels = c.coeffs;
  const int levels = static_cast<int>(std::round(
      std::log2(static_cast<double>(std::min(c.height, c.width)))));
  for (int l = levels - 1; l >= 0; --l) {
    const int hb = c.height >> l, wb = c.width >> l;
    detail::haar_level_inv(x.pixels, c.width, hb, wb);
  }
  return x;
}

// ---- periodic forward differences ----

inline GradientField diff_forward(const Image& x) {
  GradientField g{x.height, x.width, RVec(x.pixels.size()), RVec(x.pixels.size())};
  for (int i = 0; i < x.height; ++i) {
    const int ip = (i + 1) % x.height;
    for (int j = 0; j < x.width; ++j) {
      const int jp = (j + 1) % x.width;
      g.dx[static_cast<size_t>(i) * x.width + j] = x.at(i, jp) - x.at(i, j);
      g.dy[static_cast<size_t>(i) * x.width + j] = x.at(ip, j) - x.at(i, j);
    }
  }
  return g;
}

/// D^T g, the negative periodic divergence.
inline Image diff_adjoint(const GradientField& g) {
  Image x(g.height, g.width);
  for (int i = 0; i < g.height; ++i) {
    const int im = (i - 1 + g.height) % g.height;
    for (int j = 0; j < g.width; ++j) {
      const int jm = (j - 1 + g.width) % g.width;
      x.at(i, j) = g.dx[static_cast<size_t>(i) * g.width + jm] -
                   g.dx[static_cast<size_t>(i) * g.width + j] +
                   g.dy[static_cast<size_t>(im) * g.width + j] -
                   g.dy[static_cast<size_t>(i) * g.width + j];
    }
  }
  return x;
}

/// Anisotropic total variation sum_i |(Dx)_i^x| + |(Dx)_i^y|.
inline double tv_value(const Image& x) {
  const GradientField g = diff_forward(x);
  return norm1(g.dx) + norm1(g.dy);
}

// ---- Fourier-diagonal normal solver ----

/// DFT symbol of D^T D: the periodic 2-D Laplacian.
inline RVec laplace_symbol(int h, int w) {
  RVec sym(static_cast<size_t>(h) * w);
  for (int i = 0; i < h; ++i) {
    const double cy = 2.0 - 2.0 * std::cos(2.0 * M_PI * i / h);
    for (int j = 0; j < w; ++j) {
      const double cx = 2.0 - 2.0 * std::cos(2.0 * M_PI * j / w);
      sym[static_cast<size_t>(i) * w + j] = cx + cy;
    }
  }
  return sym;
}

/// DFT symbol of the real-restricted normal operator Re(Phi^H Phi):
/// (mask(k) + mask(-k)) / 2.
inline RVec mask_symbol(const SamplingMask& mask) {
  RVec sym(static_cast<size_t>(mask.n()));
  for (int i = 0; i < mask.height; ++i) {
    const int in = (mask.height - i) % mask.height;
    for (int j = 0; j < mask.width; ++j) {
      const int jn = (mask.width - j) % mask.width;
      const double a = mask.selected[static_cast<size_t>(i) * mask.width + j] ? 1.0 : 0.0;
      const double b = mask.selected[static_cast<size_t>(in) * mask.width + jn] ? 1.0 : 0.0;
      sym[static_cast<size_t>(i) * mask.width + j] = 0.5 * (a + b);
    }
  }
  return sym;
}

/// Solve S x = rhs where S is real and diagonal in the DFT basis.
inline Image fourier_diag_solve(const Image& rhs, const RVec& symbol) {
  require(symbol.size() == rhs.pixels.size(), "fourier_diag_solve: symbol size");
  CVec grid(rhs.pixels.size());
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = rhs.pixels[i];
  CVec spec;
  fft2(grid, spec, rhs.height, rhs.width);
  for (size_t i = 0; i < spec.size(); ++i) spec[i] /= symbol[i];
  ifft2(spec, grid, rhs.height, rhs.width);
  Image x(rhs.height, rhs.width);
  for (size_t i = 0; i < grid.size(); ++i) x.pixels[i] = grid[i].real();
  return x;
}

/// Exact solution of (Re(Phi^H Phi) + a I + c D^T D) x = rhs.
inline Image solve_normal_system(const Image& rhs, double a, double c,
                                 const SamplingMask& mask) {
  require(rhs.height == mask.height && rhs.width == mask.width,
          "solve_normal_system: dimension mismatch");
  RVec sym = mask_symbol(mask);
  const RVec lap = laplace_symbol(rhs.height, rhs.width);
  double min_sym = std::numeric_limits<double>::max();
  for (size_t i = 0; i < sym.size(); ++i) {
    sym[i] += a + c * lap[i];
    min_sym = std::min(min_sym, sym[i]);
  }
  if (min_sym < 1e-14) throw std::runtime_error("solve_normal_system: singular system");
  return fourier_diag_solve(rhs, sym);
}

}  // namespace bfdca
