// Data plumbing: 8-bit grayscale PGM/PNG image files, Shepp-Logan phantom
// synthesis, pseudo-radial k-space masks, seeded noise injection, corpus
// splitting, and the binary k-space record used by the experiment CLI.
#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "bfdca/operators.hpp"

namespace bfdca {

struct NoiseSpec {
  enum class Kind { salt_pepper, uniform_random, gaussian };
  Kind kind = Kind::salt_pepper;
  double level = 0.01;  // corruption fraction (salt_pepper) or std scale (gaussian)
  std::uint64_t seed = 0;
};

inline NoiseSpec::Kind noise_kind_from_string(const std::string& s) {
  if (s == "salt_pepper" || s == "salt-pepper") return NoiseSpec::Kind::salt_pepper;
  if (s == "uniform" || s == "uniform_random") return NoiseSpec::Kind::uniform_random;
  if (s == "gaussian") return NoiseSpec::Kind::gaussian;
  throw std::invalid_argument("unknown noise kind: " + s);
}

inline const char* noise_kind_name(NoiseSpec::Kind k) {
  switch (k) {
    case NoiseSpec::Kind::salt_pepper: return "salt_pepper";
    case NoiseSpec::Kind::uniform_random: return "uniform_random";
    default: return "gaussian";
  }
}

// ---- image files ----

namespace detail {

inline void read_pgm_token(std::istream& in, std::string& tok) {
  tok.clear();
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      if (!tok.empty()) return;
    } else {
      tok.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
}

inline Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load_image: cannot open file");
  std::string tok;
  read_pgm_token(in, tok);
  require(tok == "P5", "load_image: not a binary PGM (P5)");
  read_pgm_token(in, tok);
  const int w = std::stoi(tok);
  read_pgm_token(in, tok);
  const int h = std::stoi(tok);
  read_pgm_token(in, tok);
  require(std::stoi(tok) == 255, "load_image: PGM maxval must be 255");
  require(h > 0 && w > 0 && static_cast<long long>(h) * w < (1LL << 30),
          "load_image: bad dimensions");
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  require(in.gcount() == static_cast<std::streamsize>(buf.size()),
          "load_image: truncated PGM payload");
  Image img(h, w);
  for (size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0;
  return img;
}

inline void save_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "save_image: cannot open file for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.pixels.size());
  for (size_t i = 0; i < buf.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
}

struct PngCloser {
  std::FILE* f = nullptr;
  ~PngCloser() {
    if (f) std::fclose(f);
  }
};

inline Image load_png(const std::string& path) {
  PngCloser fc;
  fc.f = std::fopen(path.c_str(), "rb");
  require(fc.f != nullptr, "load_image: cannot open file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "load_image: png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::invalid_argument("load_image: invalid PNG");
  }
  png_init_io(png, fc.f);
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 || color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::invalid_argument("load_image: only 8-bit grayscale PNG supported");
  }
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w);
  std::vector<png_bytep> rows(h);
  for (int i = 0; i < h; ++i) rows[i] = buf.data() + static_cast<size_t>(i) * w;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  Image img(h, w);
  for (size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0;
  return img;
}

inline void save_png(const Image& img, const std::string& path) {
  PngCloser fc;
  fc.f = std::fopen(path.c_str(), "wb");
  require(fc.f != nullptr, "save_image: cannot open file for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "save_image: png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("save_image: PNG write failed");
  }
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> buf(img.pixels.size());
  for (size_t i = 0; i < buf.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  for (int i = 0; i < img.height; ++i)
    png_write_row(png, buf.data() + static_cast<size_t>(i) * img.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace detail

/// Load an 8-bit grayscale PGM (P5) or PNG; pixels scaled to [0,1] by /255.
inline Image load_image(const std::string& path) {
  if (detail::ends_with(path, ".png")) return detail::load_png(path);
  return detail::load_pgm(path);
}

/// Save as PGM (canonical) or PNG by extension; values rounded to 8 bits.
inline void save_image(const Image& img, const std::string& path) {
  if (detail::ends_with(path, ".png")) return detail::save_png(img, path);
  return detail::save_pgm(img, path);
}

// ---- phantoms ----

struct PhantomEllipse {
  double intensity, a, b, x0, y0, phi_deg;
};

/// Ten-ellipse Shepp-Logan head phantom (high-contrast variant), rasterized
/// by midpoint sampling on [-1,1]^2 and clipped to [0,1]. The ellipse table
/// is mirror-symmetric about the vertical axis.
inline const std::array<PhantomEllipse, 10>& shepp_logan_ellipses() {
  static const std::array<PhantomEllipse, 10> table = {{
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
      {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
      {-0.2, 0.1100, 0.3100, -0.22, 0.0, 18.0},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
      {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
      {0.1, 0.0460, 0.0230, 0.08, -0.605, 0.0},
  }};
  return table;
}

inline Image rasterize_ellipses(int height, int width,
                                const std::vector<PhantomEllipse>& ellipses) {
  Image img(height, width);
  for (int i = 0; i < height; ++i) {
    const double y = 1.0 - (2.0 * i + 1.0) / height;
    for (int j = 0; j < width; ++j) {
      const double x = -1.0 + (2.0 * j + 1.0) / width;
      double v = 0.0;
      for (const auto& e : ellipses) {
        const double phi = e.phi_deg * M_PI / 180.0;
        const double X = x - e.x0, Y = y - e.y0;
        const double xr = X * std::cos(phi) + Y * std::sin(phi);
        const double yr = -X * std::sin(phi) + Y * std::cos(phi);
        if ((xr / e.a) * (xr / e.a) + (yr / e.b) * (yr / e.b) <= 1.0) v += e.intensity;
      }
      img.at(i, j) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

inline Image make_shepp_logan(int size) {
  require(size >= 8 && is_power_of_two(size), "make_shepp_logan: size must be a power of two >= 8");
  const auto& t = shepp_logan_ellipses();
  return rasterize_ellipses(size, size, std::vector<PhantomEllipse>(t.begin(), t.end()));
}

/// Seeded random ellipse phantom for synthetic corpora.
inline Image make_random_phantom(int size, std::uint64_t seed) {
  require(size >= 8 && is_power_of_two(size), "make_random_phantom: bad size");
  Rng rng(seed);
  std::vector<PhantomEllipse> es;
  es.push_back({rng.uniform(0.5, 0.9), rng.uniform(0.6, 0.85), rng.uniform(0.6, 0.9), 0.0,
                0.0, rng.uniform(0, 180)});
  const int k = 3 + static_cast<int>(rng.index(5));
  for (int i = 0; i < k; ++i)
    es.push_back({rng.uniform(-0.5, 0.5), rng.uniform(0.05, 0.35), rng.uniform(0.05, 0.35),
                  rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0, 180)});
  return rasterize_ellipses(size, size, es);
}

// ---- sampling masks ----

/// Pseudo-radial mask: seeded random radial lines through the k-space center
/// (built in fftshifted coordinates), topped up or thinned with seeded random
/// frequencies until exactly round(rate * n) samples; DC always included.
inline SamplingMask make_radial_mask(int height, int width, double rate, int lines,
                                     std::uint64_t seed) {
  require(rate > 0.0 && rate <= 1.0, "make_radial_mask: rate out of range");
  const int n = height * width;
  const int target = static_cast<int>(std::lround(rate * n));
  if (lines <= 0)
    lines = std::max(8, static_cast<int>(std::lround(rate * std::min(height, width) / 2.0)));

  Rng rng(seed);
  std::vector<std::uint8_t> shifted(static_cast<size_t>(n), 0);
  const double ci = height / 2.0, cj = width / 2.0;
  for (int l = 0; l < lines; ++l) {
    const double th = rng.uniform(0.0, M_PI);
    const double di = std::sin(th), dj = std::cos(th);
    for (int sign : {1, -1}) {
      for (double t = 0.0;; t += 0.5) {
        const int i = static_cast<int>(std::lround(ci + sign * t * di));
        const int j = static_cast<int>(std::lround(cj + sign * t * dj));
        if (i < 0 || i >= height || j < 0 || j >= width) break;
        shifted[static_cast<size_t>(i) * width + j] = 1;
      }
    }
  }

  SamplingMask mask(height, width);
  const int sh = height / 2, sw = width / 2;
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j)
      mask.selected[static_cast<size_t>(i) * width + j] =
          shifted[static_cast<size_t>((i + sh) % height) * width + (j + sw) % width];
  mask.selected[0] = 1;  // DC
  mask.recount();

  while (mask.m < target) {
    const auto idx = rng.index(static_cast<std::uint64_t>(n));
    if (!mask.selected[idx]) {
      mask.selected[idx] = 1;
      ++mask.m;
    }
  }
  while (mask.m > target) {
    const auto idx = rng.index(static_cast<std::uint64_t>(n));
    if (idx != 0 && mask.selected[idx]) {
      mask.selected[idx] = 0;
      --mask.m;
    }
  }
  return mask;
}

inline Image mask_to_image(const SamplingMask& mask) {
  Image img(mask.height, mask.width);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = mask.selected[i] ? 1.0 : 0.0;
  return img;
}

inline SamplingMask mask_from_image(const Image& img) {
  SamplingMask mask(img.height, img.width);
  for (size_t i = 0; i < img.pixels.size(); ++i) mask.selected[i] = img.pixels[i] > 0.5 ? 1 : 0;
  mask.recount();
  return mask;
}

// ---- noise ----

/// Corrupt sampled k-space data. Salt-and-pepper corruption is additive:
/// a seeded fraction of entries receives symmetric impulses of half the
/// dynamic range of the corresponding part of the ground truth (for a real
/// image the imaginary part has zero range and stays untouched). The
/// uniform and Gaussian kinds perturb every entry.
inline KSpaceData add_noise(const KSpaceData& clean, const Image& x_star,
                            const SamplingMask& mask, const NoiseSpec& spec) {
  require(static_cast<int>(clean.size()) == mask.m, "add_noise: data/mask mismatch");
  require(x_star.height == mask.height && x_star.width == mask.width,
          "add_noise: image/mask mismatch");
  KSpaceData base = fourier_forward(x_star, mask);
  double min_re = std::numeric_limits<double>::max(), max_re = -min_re;
  double min_im = min_re, max_im = -min_re;
  double max_abs = 0.0;
  for (const auto& z : base) {
    min_re = std::min(min_re, z.real());
    max_re = std::max(max_re, z.real());
    min_im = std::min(min_im, z.imag());
    max_im = std::max(max_im, z.imag());
    max_abs = std::max(max_abs, std::abs(z));
  }

  KSpaceData out = clean;
  Rng rng(spec.seed);
  switch (spec.kind) {
    case NoiseSpec::Kind::salt_pepper: {
      require(spec.level >= 0.0 && spec.level <= 1.0, "add_noise: salt_pepper level in [0,1]");
      const int k = static_cast<int>(std::lround(spec.level * mask.m));
      // impulse amplitude: a quarter of the per-part dynamic range of the
      // truth (symmetric salt/pepper pair for signed k-space data)
      double px_min = std::numeric_limits<double>::max(), px_max = -px_min;
      for (double v : x_star.pixels) {
        px_min = std::min(px_min, v);
        px_max = std::max(px_max, v);
      }
      const double amp_re = 0.25 * (px_max - px_min);
      const double amp_im = 0.0;  // ground truth is real
      // seeded partial Fisher-Yates for k distinct indices
      std::vector<int> idx(clean.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
      for (int i = 0; i < k; ++i) {
        const auto j = i + static_cast<int>(rng.index(idx.size() - i));
        std::swap(idx[i], idx[j]);
      }
      for (int i = 0; i < k; ++i) {
        const double re = rng.coin() ? amp_re : -amp_re;
        const double im = rng.coin() ? amp_im : -amp_im;
        out[idx[i]] += std::complex<double>(re, im);
      }
      break;
    }
    case NoiseSpec::Kind::uniform_random: {
      for (auto& z : out)
        z += std::complex<double>(rng.uniform(min_re, max_re), rng.uniform(min_im, max_im));
      break;
    }
    case NoiseSpec::Kind::gaussian: {
      const double std_dev = spec.level * max_abs;
      for (auto& z : out)
        z += std::complex<double>(std_dev * rng.normal(), std_dev * rng.normal());
      break;
    }
  }
  return out;
}

// ---- corpus split ----

struct CorpusSplit {
  std::vector<int> train, validation, test;
};

inline CorpusSplit split_corpus(int n_images, int n_tr, int n_val, int n_ts,
                                std::uint64_t seed) {
  require(n_tr >= 0 && n_val >= 0 && n_ts >= 0 && n_tr + n_val + n_ts <= n_images,
          "split_corpus: insufficient images");
  std::vector<int> order(n_images);
  for (int i = 0; i < n_images; ++i) order[i] = i;
  Rng rng(seed);
  for (int i = n_images - 1; i > 0; --i) {
    const auto j = rng.index(static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  CorpusSplit split;
  split.train.assign(order.begin(), order.begin() + n_tr);
  split.validation.assign(order.begin() + n_tr, order.begin() + n_tr + n_val);
  split.test.assign(order.begin() + n_tr + n_val, order.begin() + n_tr + n_val + n_ts);
  return split;
}

// ---- binary k-space record ----

inline std::uint64_t fnv1a64(const void* data, size_t len, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t mask_checksum(const SamplingMask& mask) {
  std::uint64_t h = fnv1a64(mask.selected.data(), mask.selected.size());
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(mask.height),
                                 static_cast<std::uint32_t>(mask.width)};
  return fnv1a64(dims, sizeof(dims), h);
}

/// Record layout (little-endian): "BFKS", u32 version, u32 h, u32 w, u32 m,
/// u64 mask checksum, then m (f64 re, f64 im) pairs.
inline void save_kspace(const KSpaceData& data, const SamplingMask& mask,
                        const std::string& path) {
  require(static_cast<int>(data.size()) == mask.m, "save_kspace: data/mask mismatch");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "save_kspace: cannot open file");
  out.write("BFKS", 4);
  const std::uint32_t hdr[4] = {1u, static_cast<std::uint32_t>(mask.height),
                                static_cast<std::uint32_t>(mask.width),
                                static_cast<std::uint32_t>(mask.m)};
  out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  const std::uint64_t chk = mask_checksum(mask);
  out.write(reinterpret_cast<const char*>(&chk), sizeof(chk));
  for (const auto& z : data) {
    const double re = z.real(), im = z.imag();
    out.write(reinterpret_cast<const char*>(&re), sizeof(re));
    out.write(reinterpret_cast<const char*>(&im), sizeof(im));
  }
}

inline KSpaceData load_kspace(const std::string& path, const SamplingMask& mask) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load_kspace: cannot open file");
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, "BFKS", 4) == 0, "load_kspace: bad magic");
  std::uint32_t hdr[4];
  in.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  require(hdr[0] == 1, "load_kspace: unsupported version");
  require(static_cast<int>(hdr[1]) == mask.height && static_cast<int>(hdr[2]) == mask.width &&
              static_cast<int>(hdr[3]) == mask.m,
          "load_kspace: header/mask mismatch");
  std::uint64_t chk = 0;
  in.read(reinterpret_cast<char*>(&chk), sizeof(chk));
  require(chk == mask_checksum(mask), "load_kspace: mask checksum mismatch");
  KSpaceData data(mask.m);
  for (auto& z : data) {
    double re, im;
    in.read(reinterpret_cast<char*>(&re), sizeof(re));
    in.read(reinterpret_cast<char*>(&im), sizeof(im));
    z = {re, im};
  }
  require(in.good(), "load_kspace: truncated payload");
  return data;
}

}  // namespace bfdca
