// Unitary 2-D DFT on row-major grids, backed by FFTW. Plans are cached per
// (height, width, direction) behind a mutex; execution is lock-free and safe
// from concurrent callers.
#pragma once

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

#include "bfdca/types.hpp"

namespace bfdca {
namespace detail {

inline fftw_plan plan_for(int h, int w, int sign) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, int>, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(h, w, sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  // Dummy buffers just for planning; FFTW_UNALIGNED lets the plan run on
  // whatever storage callers bring.
  CVec tmp_in(static_cast<size_t>(h) * w), tmp_out(tmp_in.size());
  fftw_plan p = fftw_plan_dft_2d(
      h, w, reinterpret_cast<fftw_complex*>(tmp_in.data()),
      reinterpret_cast<fftw_complex*>(tmp_out.data()), sign,
      FFTW_ESTIMATE | FFTW_UNALIGNED);
  cache.emplace(key, p);
  return p;
}

}  // namespace detail

/// out = unitary 2-D DFT of in (scale 1/sqrt(n)).
inline void fft2(const CVec& in, CVec& out, int h, int w) {
  const size_t n = static_cast<size_t>(h) * w;
  require(in.size() == n, "fft2: size mismatch");
  out.resize(n);
  fftw_plan p = detail::plan_for(h, w, FFTW_FORWARD);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& z : out) z *= s;
}

/// out = unitary inverse 2-D DFT of in (scale 1/sqrt(n)); adjoint of fft2.
inline void ifft2(const CVec& in, CVec& out, int h, int w) {
  const size_t n = static_cast<size_t>(h) * w;
  require(in.size() == n, "ifft2: size mismatch");
  out.resize(n);
  fftw_plan p = detail::plan_for(h, w, FFTW_BACKWARD);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& z : out) z *= s;
}

}  // namespace bfdca
