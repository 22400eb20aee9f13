#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "mechanochem/config.hpp"
#include "mechanochem/diagnostics.hpp"
#include "mechanochem/experiments.hpp"
#include "mechanochem/io.hpp"
#include "mechanochem/steppers.hpp"

namespace mc = mechanochem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string output_dir = ".";
  int snapshot_every = -1;  // -1: use config value
  long seed = 12345;
  int threads = 0;  // 0: env var or 1
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "run configuration file")
      ->required();
  cmd->add_option("--output", opts.output_dir, "output directory");
  cmd->add_option("--snapshot-every", opts.snapshot_every,
                  "VTK snapshot cadence in steps (0 disables)");
  cmd->add_option("--seed", opts.seed,
                  "seed for randomized property scenarios");
  cmd->add_option("--threads", opts.threads,
                  "parallel sweep members (overrides MECHANOCHEM_THREADS)");
}

int resolve_threads(const CommonOpts& opts) {
  if (opts.threads > 0) return opts.threads;
  if (const char* env = std::getenv("MECHANOCHEM_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_output_dir(const std::string& dir) {
  std::filesystem::create_directories(dir);
}

int cmd_run(const CommonOpts& opts) {
  const auto cfg = mc::parse_config(opts.config_path);
  const auto grid = mc::config_grid(cfg);
  const auto params = mc::config_params(cfg);
  auto phi0 = mc::config_phi0(cfg, grid);
  auto sigma0 = mc::config_sigma0(cfg, grid, params, phi0);
  const double dt = cfg.get_double("time", "dt", 1e-3);
  const int n_steps = cfg.get_int("time", "n_steps", 100);
  std::printf("parse: %s (%dx%d grid, %d steps, dt=%g)\n",
              opts.config_path.c_str(), grid.nx, grid.ny, n_steps, dt);

  ensure_output_dir(opts.output_dir);
  int every = opts.snapshot_every >= 0
                  ? opts.snapshot_every
                  : cfg.get_int("output", "snapshot_every", 0);
  const std::string prefix = cfg.get_string("output", "vtk_prefix", "fields");
  int step_index = 0;
  auto hook = [&](const mc::FieldState& state,
                  const mc::DiagnosticsRecord&) {
    if (every > 0 && (step_index % every == 0 || step_index == n_steps)) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%06d.vtk", prefix.c_str(),
                    step_index);
      mc::write_vtk(grid, state, join_path(opts.output_dir, name));
    }
    step_index++;
  };

  const auto result = mc::run_simulation(grid, params, std::move(phi0),
                                         std::move(sigma0), dt, n_steps, hook);
  const auto& last = result.records.back();
  std::printf("run: %d steps to t=%g, energy=%.6g, sigma in [%.3g, %.3g]\n",
              n_steps, last.time, last.total_energy, last.sigma_min,
              last.sigma_max);

  const std::string csv = cfg.get_string("output", "csv", "diagnostics.csv");
  mc::write_diagnostics_csv(result.records, join_path(opts.output_dir, csv));
  std::printf("write: %s (%zu records)\n",
              join_path(opts.output_dir, csv).c_str(),
              result.records.size());
  return 0;
}

int cmd_quasistatic(const CommonOpts& opts) {
  const auto cfg = mc::parse_config(opts.config_path);
  const auto betas = cfg.get_double_list("experiment", "beta_list",
                                         {1.0, 0.5, 0.25, 0.125, 0.0});
  std::printf("parse: %s (%zu beta values)\n", opts.config_path.c_str(),
              betas.size());
  const auto result =
      mc::quasistatic_sweep(cfg, betas, resolve_threads(opts));
  ensure_output_dir(opts.output_dir);
  mc::write_sweep_csv(result, join_path(opts.output_dir, "quasistatic.csv"));
  mc::write_sweep_report(result,
                         join_path(opts.output_dir, "quasistatic_report.txt"));
  std::printf("quasistatic: slope=%.3f monotone=%s (%zu rows)\n",
              result.slope, result.monotone_decreasing ? "yes" : "no",
              result.rows.size());
  return 0;
}

int cmd_perturb(const CommonOpts& opts) {
  const auto cfg = mc::parse_config(opts.config_path);
  const auto deltas = cfg.get_double_list("experiment", "deltas",
                                          {1e-1, 1e-2, 1e-3, 1e-4});
  const auto target = mc::parse_perturb_target(
      cfg.get_string("experiment", "perturb_target", "phi0"));
  std::printf("parse: %s (%zu deltas)\n", opts.config_path.c_str(),
              deltas.size());
  const auto result =
      mc::perturbation_study(cfg, deltas, target, resolve_threads(opts));
  ensure_output_dir(opts.output_dir);
  mc::write_sweep_csv(result, join_path(opts.output_dir, "perturbation.csv"));
  mc::write_sweep_report(
      result, join_path(opts.output_dir, "perturbation_report.txt"));
  double max_ratio = 0.0;
  for (const auto& row : result.rows)
    if (std::isfinite(row[4])) max_ratio = std::max(max_ratio, row[4]);
  std::printf("perturb: slope=%.3f max_ratio=%.3g (%zu rows)\n", result.slope,
              max_ratio, result.rows.size());
  return 0;
}

int cmd_converge(const CommonOpts& opts) {
  const auto cfg = mc::parse_config(opts.config_path);
  const std::string study = cfg.get_string("experiment", "study", "coupled");
  ensure_output_dir(opts.output_dir);
  if (study == "elasticity") {
    const auto params = mc::config_params(cfg);
    const auto gl = cfg.get_double_list("experiment", "grids",
                                        {8, 16, 32, 64});
    std::vector<int> sizes(gl.begin(), gl.end());
    const auto res =
        mc::elasticity_manufactured_orders(params.elastic, sizes);
    mc::SweepResult sw;
    sw.name = "elasticity_convergence";
    sw.column_names = {"n", "u_l2_err"};
    for (size_t i = 0; i < res.sizes.size(); ++i)
      sw.rows.push_back({static_cast<double>(res.sizes[i]), res.errors[i]});
    sw.slope = res.ls_order;
    mc::write_sweep_csv(sw, join_path(opts.output_dir, "convergence.csv"));
    mc::write_sweep_report(
        sw, join_path(opts.output_dir, "convergence_report.txt"));
    std::printf("converge[elasticity]: L2 order=%.3f over %zu grids\n",
                res.ls_order, res.sizes.size());
    return 0;
  }
  const auto gl = cfg.get_double_list("experiment", "grids", {16, 32, 64});
  std::vector<int> sizes(gl.begin(), gl.end());
  const auto rule = mc::parse_dt_rule(
      cfg.get_string("experiment", "dt_rule", "proportional"));
  const auto result =
      mc::convergence_study(cfg, sizes, rule, resolve_threads(opts));
  mc::write_sweep_csv(result, join_path(opts.output_dir, "convergence.csv"));
  mc::write_sweep_report(
      result, join_path(opts.output_dir, "convergence_report.txt"));
  std::printf("converge: phi slope=%.3f (%zu rows)\n", result.slope,
              result.rows.size());
  return 0;
}

int cmd_validate(const CommonOpts& opts) {
  const auto cfg = mc::parse_config(opts.config_path);
  const auto grid = mc::config_grid(cfg);
  const auto params = mc::config_params(cfg);
  const auto phi0 = mc::config_phi0(cfg, grid);
  const auto sigma0 = mc::config_sigma0(cfg, grid, params, phi0);
  params.validate_sigma0(sigma0);

  // Assembly self-checks.
  const auto mass = mc::scalar_mass_matrix(grid);
  const auto stiff = mc::scalar_stiffness_matrix(grid);
  if (!mc::randomized_symmetry_check(mass) ||
      !mc::randomized_symmetry_check(stiff))
    throw std::runtime_error("validate: assembled operators not symmetric");

  // Sampled bound certificates for the material laws.
  std::mt19937_64 rng(static_cast<uint64_t>(opts.seed));
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = dist(rng);
    const double m = params.mobility.evaluate(std::abs(dist(rng)));
    if (!(m >= params.mobility.c2 - 1e-15 &&
          m <= params.mobility.c3 + 1e-15))
      throw std::runtime_error("validate: (A3) mobility bounds violated");
    if (!(params.potential.psi(s) >= 0.0))
      throw std::runtime_error("validate: (A2) psi non-negativity violated");
    if (std::abs(params.sources.f(s)) > 1.0 ||
        params.sources.h(s) < 0.0 || params.sources.h(s) > 1.0 ||
        std::abs(params.sources.k(s)) > 1.0)
      throw std::runtime_error("validate: (A3) f/h/k bounds violated");
  }
  std::printf(
      "validate: OK (%dx%d grid, M=%g, epsilon=%g, beta=%g; dt guidance: "
      "dt <= eps*h = %g)\n",
      grid.nx, grid.ny, params.truncation_M(), params.epsilon, params.beta,
      params.epsilon * std::min(grid.hx, grid.hy));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mechanochem: coupled Cahn-Hilliard / quasi-static elasticity / "
      "nutrient simulator"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto* run = app.add_subcommand("run", "run one simulation");
  auto* quasistatic =
      app.add_subcommand("quasistatic", "beta -> 0 quasi-static limit sweep");
  auto* perturb =
      app.add_subcommand("perturb", "continuous-dependence perturbation study");
  auto* converge = app.add_subcommand("converge", "grid convergence study");
  auto* validate =
      app.add_subcommand("validate", "validate a configuration and exit");
  for (auto* cmd : {run, quasistatic, perturb, converge, validate})
    add_common(cmd, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 64;
  }

  try {
    if (run->parsed()) return cmd_run(opts);
    if (quasistatic->parsed()) return cmd_quasistatic(opts);
    if (perturb->parsed()) return cmd_perturb(opts);
    if (converge->parsed()) return cmd_converge(opts);
    if (validate->parsed()) return cmd_validate(opts);
  } catch (const mc::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 64;
}
