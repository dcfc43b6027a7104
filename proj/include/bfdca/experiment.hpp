// Experiment plumbing behind the CLI: config parsing, dataset preparation,
// method dispatch with trace/summary emission, curve extraction, and the
// multi-image split protocol. All outputs are pure functions of
// (config, seed); wall-clock columns can be disabled for byte-stable files.
#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "bfdca/dataio.hpp"
#include "bfdca/driver.hpp"
#include "bfdca/metrics.hpp"

namespace bfdca {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // dataset source: file path, "phantom:N", or "random-phantom:N:SEED"
  std::string image = "phantom:64";
  double rate = 0.57;
  int lines = 0;
  std::uint64_t mask_seed = 1;
  std::string noise_kind = "salt_pepper";
  double noise_level = 0.01;
  std::uint64_t noise_seed = 2;

  std::string method = "bfdca";  // bfdca | gs | rs | tpe | restore-fixed
  // outer loop
  double tol = 1e-3;
  int max_outer = 500;
  double alpha0 = 0.0, alpha_max = 10.0, delta_alpha = 0.005, c_alpha = 1.0;
  double rho0 = 1e-3, rho_max = 1e-3, delta_rho = 0.0, c_rho = 1.0;
  double r0_1 = 0.1, r0_2 = 0.5;
  bool r0_relative = true;
  int inner_cap = 5000;
  // searches
  double space_lo = -9.0, space_hi = -3.0;
  int grid_points = 14;
  int budget = 200;
  std::uint64_t search_seed = 0;
  // restore-fixed
  double lambda1 = 0.0, lambda2 = 0.0;
  // inner ADMM
  double admm_tol = 1e-6;
  int admm_max_iter = 2000;
  // run control
  std::string out_dir = "out";
  int repeat = 1;
  std::uint64_t seed = 0;
  std::string timestamps = "wall";  // wall | none
  // fraction of sampled frequencies held out as the validation split;
  // 0 aliases validation to training (the degenerate single-image setting)
  double val_split = 0.2;
  std::uint64_t split_seed = 3;

  AdmmConfig admm() const {
    AdmmConfig cfg;
    cfg.primal_tol = admm_tol;
    cfg.dual_tol = admm_tol;
    cfg.max_iter = admm_max_iter;
    return cfg;
  }

  BfdcaConfig bfdca() const {
    BfdcaConfig cfg;
    cfg.tol = tol;
    cfg.max_outer = max_outer;
    cfg.alpha0 = alpha0;
    cfg.alpha_max = alpha_max;
    cfg.delta_alpha = delta_alpha;
    cfg.c_alpha = c_alpha;
    cfg.rho0 = rho0;
    cfg.rho_max = rho_max;
    cfg.delta_rho = delta_rho;
    cfg.c_rho = c_rho;
    cfg.r0_1 = r0_1;
    cfg.r0_2 = r0_2;
    cfg.r0_relative = r0_relative;
    cfg.inner_cap = inner_cap;
    cfg.lower_cfg = admm();
    return cfg;
  }

  SearchSpace space() const {
    SearchSpace s;
    s.lo = space_lo;
    s.hi = space_hi;
    s.grid_points = grid_points;
    s.budget = budget;
    s.seed = search_seed;
    return s;
  }

  void validate() const {
    require(repeat >= 1, "config: repeat >= 1");
    require(method == "bfdca" || method == "gs" || method == "rs" || method == "tpe" ||
                method == "restore-fixed",
            "config: unknown method");
    require(timestamps == "wall" || timestamps == "none", "config: timestamps wall|none");
    noise_kind_from_string(noise_kind);
  }
};

// ---- config parsing ----

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw IoError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = val;
  }
  return kv;
}

inline void apply_kv(ExperimentConfig& cfg, const std::string& key, const std::string& val) {
  auto d = [&] { return std::stod(val); };
  auto i = [&] { return std::stoi(val); };
  auto u = [&] { return static_cast<std::uint64_t>(std::stoull(val)); };
  if (key == "image") cfg.image = val;
  else if (key == "rate") cfg.rate = d();
  else if (key == "lines") cfg.lines = i();
  else if (key == "mask_seed") cfg.mask_seed = u();
  else if (key == "noise_kind") cfg.noise_kind = val;
  else if (key == "noise_level") cfg.noise_level = d();
  else if (key == "noise_seed") cfg.noise_seed = u();
  else if (key == "method") cfg.method = val;
  else if (key == "tol") cfg.tol = d();
  else if (key == "max_outer") cfg.max_outer = i();
  else if (key == "alpha0") cfg.alpha0 = d();
  else if (key == "alpha_max") cfg.alpha_max = d();
  else if (key == "delta_alpha") cfg.delta_alpha = d();
  else if (key == "c_alpha") cfg.c_alpha = d();
  else if (key == "rho0") cfg.rho0 = d();
  else if (key == "rho_max") cfg.rho_max = d();
  else if (key == "delta_rho") cfg.delta_rho = d();
  else if (key == "c_rho") cfg.c_rho = d();
  else if (key == "r0_1") cfg.r0_1 = d();
  else if (key == "r0_2") cfg.r0_2 = d();
  else if (key == "r0_relative") cfg.r0_relative = (val == "1" || val == "true");
  else if (key == "inner_cap") cfg.inner_cap = i();
  else if (key == "space_lo") cfg.space_lo = d();
  else if (key == "space_hi") cfg.space_hi = d();
  else if (key == "grid_points") cfg.grid_points = i();
  else if (key == "budget") cfg.budget = i();
  else if (key == "search_seed") cfg.search_seed = u();
  else if (key == "lambda1") cfg.lambda1 = d();
  else if (key == "lambda2") cfg.lambda2 = d();
  else if (key == "admm_tol") cfg.admm_tol = d();
  else if (key == "admm_max_iter") cfg.admm_max_iter = i();
  else if (key == "out") cfg.out_dir = val;
  else if (key == "repeat") cfg.repeat = i();
  else if (key == "seed") cfg.seed = u();
  else if (key == "timestamps") cfg.timestamps = val;
  else if (key == "val_split") cfg.val_split = d();
  else if (key == "split_seed") cfg.split_seed = u();
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

/// Hash of the semantic configuration (excludes out_dir and timestamps).
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << c.image << '|' << c.rate << '|' << c.lines << '|' << c.mask_seed << '|'
     << c.noise_kind << '|' << c.noise_level << '|' << c.noise_seed << '|' << c.method
     << '|' << c.tol << '|' << c.max_outer << '|' << c.alpha0 << '|' << c.alpha_max << '|'
     << c.delta_alpha << '|' << c.c_alpha << '|' << c.rho0 << '|' << c.rho_max << '|'
     << c.delta_rho << '|' << c.c_rho << '|' << c.r0_1 << '|' << c.r0_2 << '|'
     << c.r0_relative << '|'
     << c.inner_cap << '|' << c.space_lo << '|' << c.space_hi << '|' << c.grid_points
     << '|' << c.budget << '|' << c.search_seed << '|' << c.lambda1 << '|' << c.lambda2
     << '|' << c.admm_tol << '|' << c.admm_max_iter << '|' << c.repeat << '|' << c.seed
     << '|' << c.val_split << '|' << c.split_seed;
  const std::string s = os.str();
  return fnv1a64(s.data(), s.size());
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// ---- dataset construction ----

inline Image source_image(const ExperimentConfig& cfg) {
  const std::string& s = cfg.image;
  if (s.rfind("phantom:", 0) == 0) return make_shepp_logan(std::stoi(s.substr(8)));
  if (s.rfind("random-phantom:", 0) == 0) {
    const auto rest = s.substr(15);
    const auto colon = rest.find(':');
    require(colon != std::string::npos, "image: random-phantom:N:SEED");
    return make_random_phantom(std::stoi(rest.substr(0, colon)),
                               std::stoull(rest.substr(colon + 1)));
  }
  if (!fs::exists(s)) throw IoError("image file not found: " + s);
  return load_image(s);
}

namespace detail {

/// Split the sampled frequencies of `full` into train (keep_fraction) and
/// validation (rest); DC stays in train.
inline std::pair<SamplingMask, SamplingMask> partition_mask(const SamplingMask& full,
                                                            double keep_fraction,
                                                            std::uint64_t seed) {
  std::vector<int> idx;
  for (int i = 1; i < full.n(); ++i)
    if (full.selected[i]) idx.push_back(i);
  Rng rng(seed);
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    const auto j = rng.index(static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[static_cast<size_t>(j)]);
  }
  const int keep = static_cast<int>(std::lround(keep_fraction * static_cast<double>(idx.size())));
  SamplingMask tr(full.height, full.width), val(full.height, full.width);
  tr.selected[0] = full.selected[0];
  for (size_t i = 0; i < idx.size(); ++i) {
    if (static_cast<int>(i) < keep)
      tr.selected[idx[i]] = 1;
    else
      val.selected[idx[i]] = 1;
  }
  tr.recount();
  val.recount();
  return {tr, val};
}

inline KSpaceData gather(const KSpaceData& full_data, const SamplingMask& full,
                         const SamplingMask& sub) {
  KSpaceData out;
  out.reserve(sub.m);
  int k = 0;
  for (int i = 0; i < full.n(); ++i) {
    if (full.selected[i]) {
      if (sub.selected[i]) out.push_back(full_data[k]);
      ++k;
    }
  }
  return out;
}

}  // namespace detail

/// Build the aliased (train = validation) single-image dataset in memory:
/// the complete measured set.
inline Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed_shift = 0) {
  Dataset d;
  d.ground_truth = source_image(cfg);
  const Image& t = *d.ground_truth;
  d.mask_tr = make_radial_mask(t.height, t.width, cfg.rate, cfg.lines,
                               cfg.mask_seed + seed_shift);
  d.mask_val = d.mask_tr;
  KSpaceData clean = fourier_forward(t, d.mask_tr);
  NoiseSpec spec;
  spec.kind = noise_kind_from_string(cfg.noise_kind);
  spec.level = cfg.noise_level;
  spec.seed = cfg.noise_seed + seed_shift;
  d.b_tr = add_noise(clean, t, d.mask_tr, spec);
  d.b_val = d.b_tr;
  return d;
}

/// Derive the frequency-partitioned selection dataset from the full measured
/// set; val_split = 0 keeps the aliased form.
inline Dataset derive_split(const Dataset& full, double val_split, std::uint64_t seed) {
  require(val_split >= 0.0 && val_split < 1.0, "val_split in [0,1)");
  if (val_split == 0.0) return full;
  Dataset d;
  d.ground_truth = full.ground_truth;
  auto [mtr, mval] = detail::partition_mask(full.mask_tr, 1.0 - val_split, seed);
  d.mask_tr = mtr;
  d.mask_val = mval;
  d.b_tr = detail::gather(full.b_tr, full.mask_tr, mtr);
  d.b_val = detail::gather(full.b_tr, full.mask_tr, mval);
  return d;
}

// ---- prepare ----

inline void cmd_prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  Dataset d = build_dataset(cfg);
  fs::create_directories(cfg.out_dir);
  const fs::path dir(cfg.out_dir);
  save_image(*d.ground_truth, (dir / "truth.pgm").string());
  save_image(mask_to_image(d.mask_tr), (dir / "mask.pgm").string());
  save_kspace(d.b_tr, d.mask_tr, (dir / "kspace.bfks").string());

  ordered_json manifest;
  manifest["format"] = "bfdca-dataset";
  manifest["version"] = 1;
  manifest["image"] = cfg.image;
  manifest["height"] = d.mask_tr.height;
  manifest["width"] = d.mask_tr.width;
  manifest["rate"] = cfg.rate;
  manifest["lines"] = cfg.lines;
  manifest["m"] = d.mask_tr.m;
  manifest["mask_seed"] = cfg.mask_seed;
  manifest["noise_kind"] = cfg.noise_kind;
  manifest["noise_level"] = cfg.noise_level;
  manifest["noise_seed"] = cfg.noise_seed;
  manifest["mask_checksum"] = hash_hex(mask_checksum(d.mask_tr));
  manifest["config_hash"] = hash_hex(config_hash(cfg));
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

inline Dataset load_prepared(const std::string& dir_str) {
  const fs::path dir(dir_str);
  if (!fs::exists(dir / "manifest.json")) throw IoError("no prepared dataset in " + dir_str);
  try {
    Dataset d;
    d.ground_truth = load_image((dir / "truth.pgm").string());
    d.mask_tr = mask_from_image(load_image((dir / "mask.pgm").string()));
    d.mask_val = d.mask_tr;
    d.b_tr = load_kspace((dir / "kspace.bfks").string(), d.mask_tr);
    d.b_val = d.b_tr;
    return d;
  } catch (const std::exception& e) {
    throw IoError(std::string("failed to load prepared dataset: ") + e.what());
  }
}

// ---- run ----

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

struct CsvRow {
  double k_or_trial, time_s, rlne, psnr, val_err, eta, delta, alpha, rho, p1, p2;
};

inline void write_trace_csv(const std::string& path, const std::vector<CsvRow>& rows) {
  std::ofstream out(path);
  out << "k_or_trial,time_s,rlne,psnr,val_err,eta,delta,alpha,rho,lambda1_or_r1,lambda2_or_r2\n";
  for (const auto& r : rows)
    out << fmt_double(r.k_or_trial) << ',' << fmt_double(r.time_s) << ','
        << fmt_double(r.rlne) << ',' << fmt_double(r.psnr) << ',' << fmt_double(r.val_err)
        << ',' << fmt_double(r.eta) << ',' << fmt_double(r.delta) << ','
        << fmt_double(r.alpha) << ',' << fmt_double(r.rho) << ',' << fmt_double(r.p1)
        << ',' << fmt_double(r.p2) << '\n';
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

struct RunOutcome {
  double rlne = std::numeric_limits<double>::quiet_NaN();
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double nre_value = std::numeric_limits<double>::quiet_NaN();
  double val_err = std::numeric_limits<double>::quiet_NaN();
  double time_s = 0.0;
  int steps = 0;
  bool converged = true;
  Image restored;
  std::vector<detail::CsvRow> rows;
};

struct RunOutcomeExtra {
  double lambda1 = 0.0, lambda2 = 0.0;  // selected weights (selection methods)
};

/// Run the configured method: hyperparameters are selected on the
/// frequency-split dataset, the reported restoration refits the selected
/// weights on the complete measured set.
inline RunOutcome run_method_once(const ExperimentConfig& cfg, const Dataset& full,
                                  std::uint64_t rep, RunOutcomeExtra* extra = nullptr) {
  const bool wall = cfg.timestamps == "wall";
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return wall ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                : 0.0;
  };
  RunOutcome out;
  Dataset split = derive_split(full, cfg.val_split, cfg.split_seed + rep);

  auto finish_with_refit = [&](const Hyperparams& lam) {
    if (extra) {
      extra->lambda1 = lam.v1;
      extra->lambda2 = lam.v2;
    }
    out.restored = solve_penalized(full, lam, cfg.admm());
    if (full.ground_truth) {
      out.rlne = rlne(out.restored, *full.ground_truth);
      out.psnr = psnr(out.restored, *full.ground_truth);
    }
  };

  if (cfg.method == "bfdca") {
    OuterTrace tr = run_bfdca(split, cfg.bfdca());
    for (const auto& rec : tr.records)
      out.rows.push_back({static_cast<double>(rec.k), wall ? rec.wall_time : 0.0, rec.rlne,
                          rec.psnr, rec.val_err, rec.eta, rec.delta, rec.alpha, rec.rho,
                          rec.r1, rec.r2});
    out.steps = tr.iterations;
    out.converged = tr.converged;
    if (!tr.records.empty()) out.val_err = tr.records.back().val_err;
    // terminal lower-level multipliers are the selected penalized weights
    finish_with_refit(Hyperparams::weights(tr.lower_final.xi1, tr.lower_final.xi2));
  } else if (cfg.method == "restore-fixed") {
    PenalizedResult res = solve_penalized_detail(
        full, Hyperparams::weights(cfg.lambda1, cfg.lambda2), cfg.admm());
    out.restored = res.x;
    out.steps = res.iterations;
    out.converged = res.converged;
    out.val_err = fid_value(res.x, full.mask_val, full.b_val);
    if (full.ground_truth) {
      out.rlne = rlne(res.x, *full.ground_truth);
      out.psnr = psnr(res.x, *full.ground_truth);
    }
    out.rows.push_back({0.0, elapsed(), out.rlne, out.psnr, out.val_err,
                        std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN(), cfg.lambda1, cfg.lambda2});
  } else {
    SearchSpace space = cfg.space();
    space.seed = cfg.search_seed + rep;
    SearchTrace tr;
    if (cfg.method == "gs")
      tr = grid_search(split, space, cfg.admm());
    else if (cfg.method == "rs")
      tr = random_search(split, space, cfg.admm());
    else
      tr = tpe_search(split, space, cfg.admm());
    const double nanv = std::numeric_limits<double>::quiet_NaN();
    for (const auto& t : tr.trials)
      out.rows.push_back({static_cast<double>(t.index), wall ? t.wall_time : 0.0, t.rlne,
                          t.psnr, t.val_err, nanv, nanv, nanv, nanv, t.lam1, t.lam2});
    out.steps = static_cast<int>(tr.trials.size());
    out.val_err = tr.best_error;
    finish_with_refit(tr.best_lambda);
  }
  if (full.ground_truth) out.nre_value = nre(*full.ground_truth, full.b_tr, full.mask_tr);
  out.time_s = elapsed();
  return out;
}

/// Run the configured method (repeat times; repeats shift the data seeds) and
/// write trace CSVs, the restored image, and a JSON summary.
inline int cmd_run(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir(cfg.out_dir);
  Dataset base = load_prepared(cfg.out_dir);

  std::vector<RunOutcome> outcomes;
  RunOutcomeExtra extra0;
  for (int rep = 0; rep < cfg.repeat; ++rep) {
    Dataset d = rep == 0 ? base : build_dataset(cfg, static_cast<std::uint64_t>(rep));
    RunOutcomeExtra extra;
    outcomes.push_back(run_method_once(cfg, d, static_cast<std::uint64_t>(rep), &extra));
    if (rep == 0) extra0 = extra;
    const std::string name = cfg.repeat == 1 ? "trace.csv" : "trace_" + std::to_string(rep) + ".csv";
    detail::write_trace_csv((dir / name).string(), outcomes.back().rows);
  }
  save_image(outcomes[0].restored, (dir / "restored.pgm").string());

  ordered_json summary;
  summary["method"] = cfg.method;
  summary["time_s"] = outcomes[0].time_s;
  summary["rlne"] = outcomes[0].rlne;
  summary["psnr"] = outcomes[0].psnr;
  summary["nre"] = outcomes[0].nre_value;
  summary["val_err"] = outcomes[0].val_err;
  summary["steps"] = outcomes[0].steps;
  summary["converged"] = outcomes[0].converged;
  summary["seeds"] = ordered_json{{"seed", cfg.seed},
                                  {"mask_seed", cfg.mask_seed},
                                  {"noise_seed", cfg.noise_seed},
                                  {"search_seed", cfg.search_seed}};
  summary["config_hash"] = hash_hex(config_hash(cfg));
  summary["lambda1"] = extra0.lambda1;
  summary["lambda2"] = extra0.lambda2;
  summary["repeat"] = cfg.repeat;
  if (cfg.repeat > 1) {
    std::vector<double> rl, ps, ve, ts;
    for (const auto& o : outcomes) {
      rl.push_back(o.rlne);
      ps.push_back(o.psnr);
      ve.push_back(o.val_err);
      ts.push_back(o.time_s);
    }
    summary["aggregate"] =
        ordered_json{{"rlne", {{"mean", detail::mean_of(rl)}, {"std", detail::std_of(rl)}}},
                     {"psnr", {{"mean", detail::mean_of(ps)}, {"std", detail::std_of(ps)}}},
                     {"val_err", {{"mean", detail::mean_of(ve)}, {"std", detail::std_of(ve)}}},
                     {"time_s", {{"mean", detail::mean_of(ts)}, {"std", detail::std_of(ts)}}}};
  }
  bool any_fail = false;
  for (const auto& o : outcomes) any_fail |= !o.converged;
  summary["status"] = any_fail ? "solver_warning" : "ok";
  std::ofstream out(dir / "summary.json");
  out << summary.dump(2) << "\n";
  return any_fail ? 2 : 0;
}

// ---- curves ----

/// Merge trace CSVs into long-format plot data with a best-so-far transform.
inline void cmd_curves(const std::vector<std::string>& trace_paths,
                       const std::string& out_path) {
  std::ofstream out;
  std::ostringstream body;
  body << "method,axis,x,metric,y\n";
  for (const auto& path : trace_paths) {
    if (!fs::exists(path)) throw IoError("trace not found: " + path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);  // header
    struct Row {
      double k, t, rlne, psnr;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() < 5) continue;
      auto val = [&](int i) {
        return cells[i].empty() ? std::numeric_limits<double>::quiet_NaN()
                                : std::stod(cells[i]);
      };
      rows.push_back({val(0), val(1), val(2), val(3)});
    }
    if (rows.empty()) throw IoError("empty trace: " + path);
    std::string method = fs::path(path).parent_path().filename().string();
    {
      const fs::path summary = fs::path(path).parent_path() / "summary.json";
      if (fs::exists(summary)) {
        std::ifstream sin(summary);
        try {
          ordered_json j;
          sin >> j;
          if (j.contains("method")) method = j["method"].get<std::string>();
        } catch (...) {
        }
      }
    }
    double best_rlne = std::numeric_limits<double>::infinity();
    double best_psnr = -std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
      if (!std::isnan(r.rlne)) best_rlne = std::min(best_rlne, r.rlne);
      if (!std::isnan(r.psnr)) best_psnr = std::max(best_psnr, r.psnr);
      for (const char* axis : {"iteration", "time"}) {
        const double x = std::string(axis) == "iteration" ? r.k : r.t;
        body << method << ',' << axis << ',' << detail::fmt_double(x) << ",rlne,"
             << detail::fmt_double(best_rlne) << '\n';
        body << method << ',' << axis << ',' << detail::fmt_double(x) << ",psnr,"
             << detail::fmt_double(best_psnr) << '\n';
      }
    }
  }
  out.open(out_path);
  out << body.str();
}

// ---- multi-image protocol ----

struct MethodStats {
  std::vector<double> val_errs, test_errs, times;
  double mean_val = 0, std_val = 0, mean_test = 0, std_test = 0;
  double mean_time = 0, std_time = 0;

  void finalize() {
    mean_val = detail::mean_of(val_errs);
    std_val = detail::std_of(val_errs);
    mean_test = detail::mean_of(test_errs);
    std_test = detail::std_of(test_errs);
    mean_time = detail::mean_of(times);
    std_time = detail::std_of(times);
  }
};

struct ProtocolResult {
  MethodStats bfdca;
  MethodStats rs;
};

struct ProtocolConfig {
  int n_images = 100;
  int size = 64;
  int n_train = 10, n_val = 10, n_test = 50;
  int repeats = 10;
  double rate = 0.57;
  double noise_level = 0.001;  // gaussian, per the multi-image protocol
  double space_lo = -7.0, space_hi = 7.0;
  int rs_budget = 100;
  std::uint64_t seed = 0;
  BfdcaConfig bfdca_cfg;
  AdmmConfig admm_cfg;
};

namespace detail {

inline Dataset split_frequency_dataset(const Image& img, const SamplingMask& full,
                                       const SamplingMask& mtr, const SamplingMask& mval,
                                       double noise_level, std::uint64_t noise_seed) {
  KSpaceData clean = fourier_forward(img, full);
  NoiseSpec spec{NoiseSpec::Kind::gaussian, noise_level, noise_seed};
  KSpaceData noisy = add_noise(clean, img, full, spec);
  Dataset d;
  d.ground_truth = img;
  d.mask_tr = mtr;
  d.mask_val = mval;
  d.b_tr = gather(noisy, full, mtr);
  d.b_val = gather(noisy, full, mval);
  return d;
}

}  // namespace detail

/// Table-3-shaped protocol: per repeat, split the corpus, select
/// hyperparameters on a training image with held-out-frequency validation,
/// then score the selected weights on the validation and test images.
inline ProtocolResult corpus_protocol(const ProtocolConfig& pc) {
  std::vector<Image> corpus;
  corpus.reserve(pc.n_images);
  for (int i = 0; i < pc.n_images; ++i)
    corpus.push_back(make_random_phantom(pc.size, pc.seed * 1000 + i));

  ProtocolResult result;
  for (int rep = 0; rep < pc.repeats; ++rep) {
    const std::uint64_t rep_seed = pc.seed + 10000 + rep;
    CorpusSplit split = split_corpus(pc.n_images, pc.n_train, pc.n_val, pc.n_test,
                                     pc.seed + 17 + rep);
    SamplingMask full = make_radial_mask(pc.size, pc.size, pc.rate, 0, pc.seed + 31 + rep);
    auto [mtr, mval] = detail::partition_mask(full, 0.8, pc.seed + 47 + rep);

    const Image& sel_img = corpus[split.train[0]];
    Dataset sel = detail::split_frequency_dataset(sel_img, full, mtr, mval, pc.noise_level,
                                                  pc.seed + 101 + rep);

    auto eval_weights = [&](const Hyperparams& lam, MethodStats& stats) {
      double val_sum = 0.0, test_sum = 0.0;
      for (int idx : split.validation) {
        Dataset d = detail::split_frequency_dataset(corpus[idx], full, mtr, mval,
                                                    pc.noise_level,
                                                    pc.seed + 211 + rep * 100 + idx);
        Image x = solve_penalized(d, lam, pc.admm_cfg);
        val_sum += fid_value(x, d.mask_val, d.b_val);
      }
      for (int idx : split.test) {
        Dataset d = detail::split_frequency_dataset(corpus[idx], full, mtr, mval,
                                                    pc.noise_level,
                                                    pc.seed + 211 + rep * 100 + idx);
        Image x = solve_penalized(d, lam, pc.admm_cfg);
        test_sum += fid_value(x, d.mask_val, d.b_val);
      }
      stats.val_errs.push_back(val_sum / pc.n_val);
      stats.test_errs.push_back(test_sum / pc.n_test);
    };

    // BF-DCA selection: terminal multipliers become penalized weights
    {
      const auto t0 = std::chrono::steady_clock::now();
      BfdcaConfig cfg = pc.bfdca_cfg;
      OuterTrace tr = run_bfdca(sel, cfg);
      result.bfdca.times.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      eval_weights(Hyperparams::weights(tr.lower_final.xi1, tr.lower_final.xi2),
                   result.bfdca);
    }
    // Random search selection on the same dataset and seeds
    {
      const auto t0 = std::chrono::steady_clock::now();
      SearchSpace space;
      space.lo = pc.space_lo;
      space.hi = pc.space_hi;
      space.budget = pc.rs_budget;
      space.seed = rep_seed;
      SearchTrace tr = random_search(sel, space, pc.admm_cfg);
      result.rs.times.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      eval_weights(tr.best_lambda, result.rs);
    }
  }
  result.bfdca.finalize();
  result.rs.finalize();
  return result;
}

}  // namespace bfdca
