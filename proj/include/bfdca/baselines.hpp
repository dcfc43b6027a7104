// Penalized-form restoration and the hyperparameter search baselines: grid
// search, random search, and a tree-structured Parzen estimator. Trials map
// log-weights u = log10(lambda) over a box; every search is a pure function
// of (space, seed).
#pragma once

#include <functional>

#include "bfdca/lower_admm.hpp"

namespace bfdca {

struct PenalizedResult {
  Image x;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
};

/// ADMM for min fid(x) + l1 psi1(x) + l2 psi2(x) on the training split
/// (per-sample fidelity, per-pixel seminorms); soft-threshold blocks,
/// Fourier-diagonal x-update.
inline PenalizedResult solve_penalized_detail(const Dataset& dataset,
                                              const Hyperparams& lam,
                                              const AdmmConfig& cfg = {},
                                              RVec* objective_trace = nullptr) {
  cfg.validate();
  require(lam.v1 >= 0.0 && lam.v2 >= 0.0, "solve_penalized: negative weight");
  const SamplingMask& mask = dataset.mask_tr;
  const KSpaceData& b = dataset.b_tr;
  const int n = mask.n();
  const double gf = 1.0 / mask.m;
  const double gr = 1.0 / static_cast<double>(n);
  const double bscale = 1.0 + cnorm2(b);
  Image grad_scale_img = fourier_adjoint(b, mask);
  const double kkt_scale = 1.0 + gf * norm2(grad_scale_img.pixels);

  double sigma = cfg.sigma;
  Image x(mask.height, mask.width);
  RVec v(n, 0.0), w(2 * static_cast<size_t>(n), 0.0);
  RVec vb(n, 0.0), wb(2 * static_cast<size_t>(n), 0.0);

  const RVec lap = laplace_symbol(mask.height, mask.width);
  RVec msym = mask_symbol(mask);
  auto make_symbol = [&] {
    RVec s(msym.size());
    for (size_t i = 0; i < s.size(); ++i) s[i] = gf * msym[i] + sigma * (1.0 + lap[i]);
    return s;
  };
  RVec symbol = make_symbol();
  Image rhs0 = fourier_adjoint(b, mask);
  for (auto& v : rhs0.pixels) v *= gf;

  PenalizedResult out;
  int it = 0;
  double primal = 0.0, dual = 0.0;
  for (; it < cfg.max_iter; ++it) {
    WaveletCoeffs px = haar_forward(x);
    GradientField dx = diff_forward(x);
    RVec v_old = v, w_old = w;
    for (int i = 0; i < n; ++i) v[i] = soft(px.coeffs[i] + vb[i], lam.v1 * gr / sigma);
    for (int i = 0; i < n; ++i) {
      w[i] = soft(dx.dx[i] + wb[i], lam.v2 * gr / sigma);
      w[n + i] = soft(dx.dy[i] + wb[n + i], lam.v2 * gr / sigma);
    }

    Image rhs = rhs0;
    WaveletCoeffs vc{mask.height, mask.width, RVec(n)};
    for (int i = 0; i < n; ++i) vc.coeffs[i] = v[i] - vb[i];
    Image vt = haar_adjoint(vc);
    GradientField wf{mask.height, mask.width, RVec(n), RVec(n)};
    for (int i = 0; i < n; ++i) {
      wf.dx[i] = w[i] - wb[i];
      wf.dy[i] = w[n + i] - wb[n + i];
    }
    Image wt = diff_adjoint(wf);
    for (int i = 0; i < n; ++i)
      rhs.pixels[i] += sigma * (vt.pixels[i] + wt.pixels[i]);
    x = fourier_diag_solve(rhs, symbol);

    px = haar_forward(x);
    dx = diff_forward(x);
    if (objective_trace) {
      KSpaceData fx = fourier_forward(x, mask);
      double fid = 0.0;
      for (size_t i = 0; i < fx.size(); ++i) fid += std::norm(fx[i] - b[i]);
      objective_trace->push_back(0.5 * gf * fid + gr * lam.v1 * norm1(px.coeffs) +
                                 gr * lam.v2 * (norm1(dx.dx) + norm1(dx.dy)));
    }
    double pr = 0.0;
    for (int i = 0; i < n; ++i) {
      const double rv = px.coeffs[i] - v[i];
      vb[i] += rv;
      pr += rv * rv;
      const double rx = dx.dx[i] - w[i];
      const double ry = dx.dy[i] - w[n + i];
      wb[i] += rx;
      wb[n + i] += ry;
      pr += rx * rx + ry * ry;
    }
    primal = std::sqrt(pr) / bscale;
    for (int i = 0; i < n; ++i) {
      vc.coeffs[i] = v[i] - v_old[i];
      wf.dx[i] = w[i] - w_old[i];
      wf.dy[i] = w[n + i] - w_old[n + i];
    }
    Image dv = haar_adjoint(vc);
    Image dw = diff_adjoint(wf);
    double dr = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = dv.pixels[i] + dw.pixels[i];
      dr += d * d;
    }
    dual = sigma * std::sqrt(dr) / bscale;

    if (primal <= cfg.primal_tol && dual <= cfg.dual_tol) {
      ++it;
      out.converged = true;
      break;
    }
    if (cfg.adapt_sigma && it % 10 == 9) {
      if (primal > 10.0 * dual && sigma < 1e4) {
        sigma *= 2.0;
        for (auto& q : vb) q *= 0.5;
        for (auto& q : wb) q *= 0.5;
        symbol = make_symbol();
      } else if (dual > 10.0 * primal && sigma > 1e-4) {
        sigma *= 0.5;
        for (auto& q : vb) q *= 2.0;
        for (auto& q : wb) q *= 2.0;
        symbol = make_symbol();
      }
    }
  }
  out.iterations = it;

  // KKT residual from the threshold duals: sigma*vb converges to the unscaled
  // dual of the v-split, an exact subgradient element; stationarity at x.
  {
    KSpaceData fx = fourier_forward(x, mask);
    for (size_t i = 0; i < fx.size(); ++i) fx[i] -= b[i];
    Image st = fourier_adjoint(fx, mask);
    for (auto& vv : st.pixels) vv *= gf;
    WaveletCoeffs pc{mask.height, mask.width, RVec(n, 0.0)};
    GradientField qf{mask.height, mask.width, RVec(n, 0.0), RVec(n, 0.0)};
    for (int i = 0; i < n; ++i) {
      pc.coeffs[i] = sigma * vb[i];  // lam1 * p_i
      qf.dx[i] = sigma * wb[i];
      qf.dy[i] = sigma * wb[n + i];
    }
    Image pt = haar_adjoint(pc);
    Image qt = diff_adjoint(qf);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = st.pixels[i] + pt.pixels[i] + qt.pixels[i];
      s += e * e;
    }
    out.kkt_residual = std::sqrt(s);
    out.kkt_residual /= kkt_scale;
  }
  out.x = std::move(x);
  return out;
}

inline Image solve_penalized(const Dataset& dataset, const Hyperparams& lam,
                             const AdmmConfig& cfg = {}) {
  require(lam.kind == Hyperparams::Kind::weights, "solve_penalized: expects weights");
  return solve_penalized_detail(dataset, lam, cfg).x;
}

// ---- hyperparameter searches ----

struct SearchSpace {
  double lo = -9.0;
  double hi = -3.0;
  int grid_points = 14;
  int budget = 200;
  std::uint64_t seed = 0;

  void validate() const {
    require(lo <= hi, "SearchSpace: need lo <= hi");
    require(budget >= 1, "SearchSpace: budget >= 1");
  }
};

struct TrialRecord {
  int index = 0;
  double lam1 = 0, lam2 = 0;
  double val_err = 0;
  double wall_time = 0;
  double rlne = 0, psnr = 0;
};

struct SearchTrace {
  std::vector<TrialRecord> trials;
  int best_index = -1;
  double best_error = std::numeric_limits<double>::infinity();
  Hyperparams best_lambda = Hyperparams::weights(0, 0);
  Image best_image;
};

/// Per-trial evaluation: validation error plus optional truth metrics.
struct TrialEval {
  double val_err = 0;
  double rlne = std::numeric_limits<double>::quiet_NaN();
  double psnr = std::numeric_limits<double>::quiet_NaN();
};

/// Objective evaluated per trial; (u1, u2) are log10 weights.
using TrialObjective = std::function<TrialEval(double u1, double u2, Image* x_out)>;

namespace detail {

inline void record_trial(SearchTrace& tr, int idx, double u1, double u2,
                         const TrialObjective& obj,
                         const std::function<double()>& clock) {
  Image x;
  const TrialEval ev = obj(u1, u2, &x);
  TrialRecord rec;
  rec.index = idx;
  rec.lam1 = std::pow(10.0, u1);
  rec.lam2 = std::pow(10.0, u2);
  rec.val_err = ev.val_err;
  rec.wall_time = clock();
  rec.rlne = ev.rlne;
  rec.psnr = ev.psnr;
  tr.trials.push_back(rec);
  if (ev.val_err < tr.best_error) {
    tr.best_error = ev.val_err;
    tr.best_index = idx;
    tr.best_lambda = Hyperparams::weights(rec.lam1, rec.lam2);
    tr.best_image = std::move(x);
  }
}

}  // namespace detail

inline SearchTrace grid_search_objective(const SearchSpace& space, const TrialObjective& obj) {
  space.validate();
  require(space.grid_points >= 2, "grid_search: grid_points >= 2");
  SearchTrace tr;
  const auto t0 = std::chrono::steady_clock::now();
  auto clock = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  int idx = 0;
  for (int i = 0; i < space.grid_points; ++i) {
    const double u1 = space.lo + (space.hi - space.lo) * i / (space.grid_points - 1);
    for (int j = 0; j < space.grid_points; ++j) {
      const double u2 = space.lo + (space.hi - space.lo) * j / (space.grid_points - 1);
      detail::record_trial(tr, idx++, u1, u2, obj, clock);
    }
  }
  return tr;
}

inline SearchTrace random_search_objective(const SearchSpace& space, const TrialObjective& obj) {
  space.validate();
  SearchTrace tr;
  Rng rng(space.seed);
  const auto t0 = std::chrono::steady_clock::now();
  auto clock = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  for (int t = 0; t < space.budget; ++t) {
    const double u1 = rng.uniform(space.lo, space.hi);
    const double u2 = rng.uniform(space.lo, space.hi);
    detail::record_trial(tr, t, u1, u2, obj, clock);
  }
  return tr;
}

namespace detail {

// Per-coordinate Parzen density with the max-spacing bandwidth heuristic.
struct Parzen {
  std::vector<double> mu, bw;

  Parzen(std::vector<double> pts, double lo, double hi) : mu(std::move(pts)) {
    std::vector<double> sorted = mu;
    std::sort(sorted.begin(), sorted.end());
    const double span = hi - lo;
    bw.resize(mu.size());
    for (size_t i = 0; i < mu.size(); ++i) {
      const auto it = std::lower_bound(sorted.begin(), sorted.end(), mu[i]);
      const size_t r = static_cast<size_t>(it - sorted.begin());
      const double left = r == 0 ? mu[i] - lo : mu[i] - sorted[r - 1];
      const double right = r + 1 >= sorted.size() ? hi - mu[i] : sorted[r + 1] - mu[i];
      bw[i] = std::clamp(std::max(left, right), span * 1e-3, span);
    }
  }

  double pdf(double x) const {
    double s = 0.0;
    for (size_t i = 0; i < mu.size(); ++i) {
      const double t = (x - mu[i]) / bw[i];
      s += std::exp(-0.5 * t * t) / (bw[i] * std::sqrt(2.0 * M_PI));
    }
    return s / static_cast<double>(mu.size()) + 1e-300;
  }

  double sample(Rng& rng, double lo, double hi) const {
    const size_t k = static_cast<size_t>(rng.index(mu.size()));
    for (int tries = 0; tries < 16; ++tries) {
      const double x = mu[k] + bw[k] * rng.normal();
      if (x >= lo && x <= hi) return x;
    }
    return std::clamp(mu[k], lo, hi);
  }
};

}  // namespace detail

struct TpeOptions {
  double gamma = 0.25;
  int n_startup = 10;
  int n_candidates = 24;
};

inline SearchTrace tpe_search_objective(const SearchSpace& space, const TrialObjective& obj,
                                        const TpeOptions& opt = {}) {
  space.validate();
  require(space.budget >= opt.n_startup, "tpe_search: budget below startup trials");
  SearchTrace tr;
  Rng rng(space.seed);
  const auto t0 = std::chrono::steady_clock::now();
  auto clock = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  std::vector<std::array<double, 2>> us;
  std::vector<double> errs;
  for (int t = 0; t < space.budget; ++t) {
    double u1, u2;
    if (t < opt.n_startup) {
      u1 = rng.uniform(space.lo, space.hi);
      u2 = rng.uniform(space.lo, space.hi);
    } else {
      // split history at the gamma-quantile into good and bad sets
      std::vector<int> order(t);
      for (int i = 0; i < t; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return errs[a] < errs[b]; });
      const int n_good = std::max(1, static_cast<int>(std::floor(opt.gamma * t)));
      std::vector<double> g1, g2, b1, b2;
      for (int i = 0; i < t; ++i) {
        const auto& u = us[order[i]];
        if (i < n_good) {
          g1.push_back(u[0]);
          g2.push_back(u[1]);
        } else {
          b1.push_back(u[0]);
          b2.push_back(u[1]);
        }
      }
      detail::Parzen l1(g1, space.lo, space.hi), l2(g2, space.lo, space.hi);
      detail::Parzen q1(b1.empty() ? g1 : b1, space.lo, space.hi),
          q2(b2.empty() ? g2 : b2, space.lo, space.hi);
      double best_score = -std::numeric_limits<double>::infinity();
      u1 = u2 = 0.5 * (space.lo + space.hi);
      for (int c = 0; c < opt.n_candidates; ++c) {
        const double c1 = l1.sample(rng, space.lo, space.hi);
        const double c2 = l2.sample(rng, space.lo, space.hi);
        const double score = std::log(l1.pdf(c1)) + std::log(l2.pdf(c2)) -
                             std::log(q1.pdf(c1)) - std::log(q2.pdf(c2));
        if (score > best_score) {
          best_score = score;
          u1 = c1;
          u2 = c2;
        }
      }
    }
    detail::record_trial(tr, t, u1, u2, obj, clock);
    us.push_back({u1, u2});
    errs.push_back(tr.trials.back().val_err);
  }
  return tr;
}

namespace detail {

inline TrialObjective restoration_objective(const Dataset& dataset, const AdmmConfig& cfg) {
  return [&dataset, cfg](double u1, double u2, Image* x_out) {
    const Hyperparams lam = Hyperparams::weights(std::pow(10.0, u1), std::pow(10.0, u2));
    Image x = solve_penalized(dataset, lam, cfg);
    KSpaceData fx = fourier_forward(x, dataset.mask_val);
    double s = 0.0;
    for (size_t i = 0; i < fx.size(); ++i) s += std::norm(fx[i] - dataset.b_val[i]);
    TrialEval ev;
    ev.val_err = 0.5 * s / dataset.mask_val.m;
    if (dataset.ground_truth) {
      const Image& t = *dataset.ground_truth;
      double dsq = 0.0;
      for (size_t i = 0; i < x.pixels.size(); ++i) {
        const double d = x.pixels[i] - t.pixels[i];
        dsq += d * d;
      }
      const double nx = norm2(x.pixels);
      ev.rlne = nx > 0 ? std::sqrt(dsq) / nx : std::numeric_limits<double>::quiet_NaN();
      ev.psnr = dsq > 0 ? 20.0 * std::log10(std::sqrt(static_cast<double>(x.pixels.size())) /
                                            std::sqrt(dsq))
                        : std::numeric_limits<double>::infinity();
    }
    if (x_out) *x_out = std::move(x);
    return ev;
  };
}

}  // namespace detail

inline SearchTrace grid_search(const Dataset& dataset, const SearchSpace& space,
                               const AdmmConfig& cfg = {}) {
  return grid_search_objective(space, detail::restoration_objective(dataset, cfg));
}

inline SearchTrace random_search(const Dataset& dataset, const SearchSpace& space,
                                 const AdmmConfig& cfg = {}) {
  return random_search_objective(space, detail::restoration_objective(dataset, cfg));
}

inline SearchTrace tpe_search(const Dataset& dataset, const SearchSpace& space,
                              const AdmmConfig& cfg = {}, const TpeOptions& opt = {}) {
  return tpe_search_objective(space, detail::restoration_objective(dataset, cfg), opt);
}

}  // namespace bfdca
