// Experiment runner. Subcommands:
//   prepare    build mask / noisy k-space / manifest for a dataset
//   run        run a method (bfdca, gs, rs, tpe, restore-fixed) on it
//   curves     merge trace CSVs into long-format plot data
//   selfcheck  run the invariant suite on a small instance
// Exit codes: 0 ok, 1 usage error, 2 solver failure, 3 I/O error.
#include <CLI11.hpp>

#include <iostream>

#include "bfdca/experiment.hpp"
#include "bfdca/subgrad.hpp"

using namespace bfdca;

namespace {

int run_selfcheck() {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::cout << (ok ? "ok   " : "FAIL ") << name << "\n";
    if (!ok) ++failures;
  };

  Rng rng(2024);
  Image x(8, 8), y(8, 8);
  for (auto& p : x.pixels) p = rng.uniform01();
  for (auto& p : y.pixels) p = rng.uniform01();
  SamplingMask mask(8, 8);
  for (auto& s : mask.selected) s = rng.uniform01() < 0.5 ? 1 : 0;
  mask.selected[0] = 1;
  mask.recount();

  {
    KSpaceData fx = fourier_forward(x, mask);
    KSpaceData fy(mask.m);
    for (auto& z : fy) z = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    double lhs = 0.0;
    for (int i = 0; i < mask.m; ++i) lhs += (std::conj(fx[i]) * fy[i]).real();
    Image aty = fourier_adjoint(fy, mask);
    check("fourier adjoint identity", std::abs(lhs - dot(x.pixels, aty.pixels)) <
                                           1e-10 * (1.0 + std::abs(lhs)));
  }
  {
    WaveletCoeffs c = haar_forward(x);
    Image back = haar_adjoint(c);
    double err = 0.0;
    for (int i = 0; i < 64; ++i) err = std::max(err, std::abs(back.pixels[i] - x.pixels[i]));
    check("haar orthonormal round trip", err < 1e-12 &&
                                             std::abs(norm2(c.coeffs) - norm2(x.pixels)) < 1e-10);
  }
  {
    GradientField g = diff_forward(x);
    Image dtg = diff_adjoint(g);
    const double lhs = dot(g.dx, g.dx) + dot(g.dy, g.dy);
    check("difference adjoint identity",
          std::abs(lhs - dot(x.pixels, dtg.pixels)) < 1e-10 * (1.0 + std::abs(lhs)));
  }
  {
    Image sol = solve_normal_system(x, 0.7, 0.3, mask);
    Image px = fourier_adjoint(fourier_forward(sol, mask), mask);
    Image dtd = diff_adjoint(diff_forward(sol));
    double err = 0.0;
    for (int i = 0; i < 64; ++i)
      err += std::pow(px.pixels[i] + 0.7 * sol.pixels[i] + 0.3 * dtd.pixels[i] - x.pixels[i], 2);
    check("normal system residual", std::sqrt(err) < 1e-8 * norm2(x.pixels));
  }
  {
    RVec v(32);
    for (auto& q : v) q = rng.uniform(-2, 2);
    RVec w = project_l1_ball(v, 1.3);
    RVec ww = project_l1_ball(w, 1.3);
    double idem = 0.0;
    for (size_t i = 0; i < w.size(); ++i) idem = std::max(idem, std::abs(w[i] - ww[i]));
    check("l1 ball projection", norm1(w) <= 1.3 + 1e-12 && idem < 1e-12);
  }

  Dataset d;
  d.ground_truth = x;
  d.mask_tr = mask;
  d.mask_val = mask;
  d.b_tr = fourier_forward(x, mask);
  d.b_val = d.b_tr;
  AdmmConfig cfg;
  cfg.primal_tol = 1e-9;
  cfg.dual_tol = 1e-9;
  cfg.max_iter = 10000;
  {
    LowerSolution sol = solve_lower(d, Hyperparams::radii(0.05, 0.08), cfg);
    const double l1 = psi_l1(sol.x_bar);
    const double tv = psi_tv(sol.x_bar);
    check("lower solve feasibility",
          sol.converged && l1 <= 0.05 + 1e-5 * 1.05 && tv <= 0.08 + 1e-5 * 1.08);
    check("lower solve complementarity",
          std::abs(sol.xi1 * (l1 - 0.05)) < 1e-4 * (1 + sol.xi1) &&
              std::abs(sol.xi2 * (tv - 0.08)) < 1e-4 * (1 + sol.xi2));
  }
  {
    PenaltyState st;
    st.data = &d;
    st.lower = solve_lower(d, Hyperparams::radii(0.05, 0.08), cfg);
    st.z_prev = OuterPoint{st.lower.x_bar, 0.05, 0.08};
    st.alpha = 0.0;
    st.rho = 0.01;
    st.prev_step = 1.0;
    SubproblemResult res = solve_subproblem(st);
    check("penalty subproblem smooth case", res.converged && res.residual_norm < 1e-8);
    st.alpha = 1.0;
    res = solve_subproblem(st);
    const double re = reassemble_residual(res.z_next, st, res.cert);
    check("penalty certificate reassembly",
          std::abs(re - res.residual_norm) < 1e-12 * (1.0 + res.residual_norm));
  }
  {
    SamplingMask a = make_radial_mask(16, 16, 0.5, 0, 5);
    SamplingMask b = make_radial_mask(16, 16, 0.5, 0, 5);
    check("radial mask determinism", a.selected == b.selected && a.m == 128);
  }
  std::cout << (failures == 0 ? "selfcheck passed" : "selfcheck FAILED") << "\n";
  return failures == 0 ? 0 : 2;
}

void add_config_options(CLI::App* cmd, std::string& config_path,
                        std::vector<std::string>& sets, ExperimentConfig& cfg) {
  cmd->add_option("--config", config_path, "key=value config file");
  cmd->add_option("--set", sets, "override: key=value (repeatable)");
  cmd->add_option("--method", cfg.method, "bfdca|gs|rs|tpe|restore-fixed");
  cmd->add_option("--seed", cfg.seed, "master seed");
  cmd->add_option("--out", cfg.out_dir, "output directory");
  cmd->add_option("--repeat", cfg.repeat, "number of repetitions");
  cmd->add_option("--rate", cfg.rate, "sampling rate in (0,1]");
  cmd->add_option("--noise-kind", cfg.noise_kind, "salt_pepper|uniform_random|gaussian");
  cmd->add_option("--noise-level", cfg.noise_level, "noise level");
  cmd->add_option("--tol", cfg.tol, "outer stopping tolerance");
}

void finalize_config(const std::string& config_path, const std::vector<std::string>& sets,
                     const CLI::App* cmd, ExperimentConfig& cfg, int size_flag) {
  ExperimentConfig base;
  if (!config_path.empty()) {
    for (const auto& [k, v] : parse_kv_file(config_path)) apply_kv(base, k, v);
  }
  // CLI flags win over file values
  if (cmd->count("--method")) base.method = cfg.method;
  if (cmd->count("--seed")) base.seed = cfg.seed;
  if (cmd->count("--out")) base.out_dir = cfg.out_dir;
  if (cmd->count("--repeat")) base.repeat = cfg.repeat;
  if (cmd->count("--rate")) base.rate = cfg.rate;
  if (cmd->count("--noise-kind")) base.noise_kind = cfg.noise_kind;
  if (cmd->count("--noise-level")) base.noise_level = cfg.noise_level;
  if (cmd->count("--tol")) base.tol = cfg.tol;
  if (size_flag > 0) base.image = "phantom:" + std::to_string(size_flag);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, "--set expects key=value");
    apply_kv(base, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg = base;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bilevel hyperparameter selection for image restoration"};
  app.require_subcommand(1);

  ExperimentConfig cfg_prep, cfg_run;
  std::string config_prep, config_run;
  std::vector<std::string> sets_prep, sets_run;
  int size_prep = 0, size_run = 0;

  CLI::App* prepare = app.add_subcommand("prepare", "build a dataset");
  add_config_options(prepare, config_prep, sets_prep, cfg_prep);
  prepare->add_option("--size", size_prep, "phantom size (power of two)");

  CLI::App* run = app.add_subcommand("run", "run a method on a prepared dataset");
  add_config_options(run, config_run, sets_run, cfg_run);
  run->add_option("--size", size_run, "phantom size (power of two)");

  CLI::App* curves = app.add_subcommand("curves", "merge traces into plot data");
  std::vector<std::string> trace_paths;
  std::string curves_out = "curves.csv";
  curves->add_option("traces", trace_paths, "trace CSV paths")->required();
  curves->add_option("--out", curves_out, "output CSV path");

  CLI::App* selfcheck = app.add_subcommand("selfcheck", "run the invariant suite");
  (void)selfcheck;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (prepare->parsed()) {
      finalize_config(config_prep, sets_prep, prepare, cfg_prep, size_prep);
      cmd_prepare(cfg_prep);
      std::cout << "prepared dataset in " << cfg_prep.out_dir << "\n";
      return 0;
    }
    if (run->parsed()) {
      finalize_config(config_run, sets_run, run, cfg_run, size_run);
      const int rc = cmd_run(cfg_run);
      std::cout << "run complete; summary in " << cfg_run.out_dir << "/summary.json\n";
      return rc;
    }
    if (curves->parsed()) {
      cmd_curves(trace_paths, curves_out);
      std::cout << "curves written to " << curves_out << "\n";
      return 0;
    }
    if (selfcheck->parsed()) return run_selfcheck();
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
