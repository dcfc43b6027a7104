// Core value types shared by all solver modules: images, k-space sampling
// masks, hyperparameter pairs, datasets, and a small deterministic RNG.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bfdca {

using RVec = std::vector<double>;
using CVec = std::vector<std::complex<double>>;

/// Real-valued H x W pixel grid, row-major, values nominally in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  RVec pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<size_t>(h) * w, fill) {}

  int n() const { return height * width; }
  double& at(int i, int j) { return pixels[static_cast<size_t>(i) * width + j]; }
  double at(int i, int j) const { return pixels[static_cast<size_t>(i) * width + j]; }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

/// Boolean k-space mask; `selected` marks sampled frequencies (row-major).
struct SamplingMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> selected;
  int m = 0;

  SamplingMask() = default;
  SamplingMask(int h, int w)
      : height(h), width(w), selected(static_cast<size_t>(h) * w, 0), m(0) {}

  int n() const { return height * width; }
  void recount() {
    m = 0;
    for (auto s : selected) m += s ? 1 : 0;
  }
  static SamplingMask full(int h, int w) {
    SamplingMask mk(h, w);
    std::fill(mk.selected.begin(), mk.selected.end(), std::uint8_t{1});
    mk.m = mk.n();
    return mk;
  }
};

/// Sampled k-space values, ordered by row-major scan of the mask.
using KSpaceData = CVec;

/// Orthonormal Haar coefficients of an image (d = n).
struct WaveletCoeffs {
  int height = 0;
  int width = 0;
  RVec coeffs;
};

/// Forward-difference field (periodic boundary), horizontal and vertical.
struct GradientField {
  int height = 0;
  int width = 0;
  RVec dx;
  RVec dy;
};

/// Constraint radii (r1, r2) or penalty weights (lambda1, lambda2).
struct Hyperparams {
  enum class Kind { radii, weights };
  Kind kind = Kind::radii;
  double v1 = 0.0;
  double v2 = 0.0;

  static Hyperparams radii(double r1, double r2) { return {Kind::radii, r1, r2}; }
  static Hyperparams weights(double l1, double l2) { return {Kind::weights, l1, l2}; }
};

/// Training/validation measurement pair. Aliasing tr == val is allowed.
struct Dataset {
  SamplingMask mask_tr;
  SamplingMask mask_val;
  KSpaceData b_tr;
  KSpaceData b_val;
  std::optional<Image> ground_truth;
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// ---- small vector helpers ----

inline double dot(const RVec& a, const RVec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2sq(const RVec& a) { return dot(a, a); }
inline double norm2(const RVec& a) { return std::sqrt(norm2sq(a)); }

inline double norm1(const RVec& a) {
  double s = 0.0;
  for (double x : a) s += std::abs(x);
  return s;
}

inline double norm_inf(const RVec& a) {
  double s = 0.0;
  for (double x : a) s = std::max(s, std::abs(x));
  return s;
}

inline double cnorm2sq(const CVec& a) {
  double s = 0.0;
  for (const auto& z : a) s += std::norm(z);
  return s;
}

inline double cnorm2(const CVec& a) { return std::sqrt(cnorm2sq(a)); }

inline void axpy(double alpha, const RVec& x, RVec& y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// ---- deterministic RNG ----
//
// Thin wrapper over mt19937_64 with explicit draw formulas so that streams
// are reproducible independent of the standard library's distribution
// implementations.
struct Rng {
  std::mt19937_64 gen;

  explicit Rng(std::uint64_t seed) : gen(seed) {}

  /// Uniform in [0,1).
  double uniform01() {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    // modulo rejection to avoid bias
    const std::uint64_t lim = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
    std::uint64_t v = gen();
    while (v >= lim) v = gen();
    return v % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  bool coin() { return (gen() & 1u) != 0; }
};

}  // namespace bfdca
