#pragma once

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "mechanochem/config.hpp"
#include "mechanochem/diagnostics.hpp"
#include "mechanochem/io.hpp"
#include "mechanochem/steppers.hpp"

namespace mechanochem {

// Tabular result of a parameter sweep. First column is the swept parameter.
struct SweepResult {
  std::string name;
  std::vector<std::string> column_names;
  std::vector<std::vector<double>> rows;
  double slope = std::numeric_limits<double>::quiet_NaN();
  bool monotone_decreasing = false;
  bool pass = true;
  std::vector<std::string> notes;

  std::vector<double> column(size_t i) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.at(i));
    return out;
  }
};

// Least-squares slope of log(y) against log(x) over positive pairs;
// NaN when fewer than 3 usable points.
inline double loglog_slope(std::span<const double> x,
                           std::span<const double> y) {
  std::vector<double> lx, ly;
  for (size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 3) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= lx.size();
  my /= lx.size();
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return num / den;
}

namespace detail {

template <typename F>
inline void parallel_indices(int n, int threads, F&& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int nt = std::min(threads, n);
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

struct CapturedRun {
  std::vector<FieldState> states;
  std::vector<DiagnosticsRecord> records;
};

inline CapturedRun run_and_capture(const Grid& grid, const ModelParams& params,
                                   std::vector<double> phi0,
                                   std::vector<double> sigma0, double dt,
                                   int n_steps) {
  CapturedRun out;
  auto hook = [&](const FieldState& s, const DiagnosticsRecord&) {
    out.states.push_back(s);
  };
  auto res = run_simulation(grid, params, std::move(phi0), std::move(sigma0),
                            dt, n_steps, hook);
  out.records = std::move(res.records);
  return out;
}

// Quasi-static limit study: e(beta) = ||sigma_beta - sigma_*||_{L2(0,T;H1)}
// against the beta = 0 run, over a shared (phi0, sigma0).
inline SweepResult quasistatic_sweep(const RunConfig& cfg,
                                     std::vector<double> beta_list,
                                     int threads = 1) {
  bool has_zero = false;
  int positives = 0;
  for (double b : beta_list) {
    if (b == 0.0) has_zero = true;
    else if (b > 0.0) positives++;
    else throw std::invalid_argument("quasistatic_sweep: negative beta");
  }
  if (!has_zero || positives < 3)
    throw std::invalid_argument(
        "quasistatic_sweep: beta_list must contain 0 and at least 3 "
        "positive values");

  const Grid grid = config_grid(cfg);
  const ModelParams base = config_params(cfg);
  const auto phi0 = config_phi0(cfg, grid);
  const auto sigma0 = config_sigma0(cfg, grid, base, phi0);
  const double dt = cfg.get_double("time", "dt", 1e-3);
  const int n_steps = cfg.get_int("time", "n_steps", 100);

  std::vector<CapturedRun> runs(beta_list.size());
  detail::parallel_indices(
      static_cast<int>(beta_list.size()), threads, [&](int i) {
        ModelParams p = base;
        p.beta = beta_list[i];
        try {
          runs[i] = run_and_capture(grid, p, phi0, sigma0, dt, n_steps);
        } catch (const std::exception& e) {
          throw std::runtime_error("quasistatic_sweep[beta=" +
                                   std::to_string(beta_list[i]) + "]: " +
                                   e.what());
        }
      });

  const CapturedRun* ref = nullptr;
  for (size_t i = 0; i < beta_list.size(); ++i)
    if (beta_list[i] == 0.0) ref = &runs[i];

  const auto ws = make_norm_workspace(grid);
  SweepResult result;
  result.name = "quasistatic";
  result.column_names = {"beta", "e_beta"};
  std::vector<double> betas, errs;
  for (size_t i = 0; i < beta_list.size(); ++i) {
    if (beta_list[i] == 0.0) continue;
    const auto& run = runs[i];
    double acc = 0.0;
    const size_t nrec = std::min(run.states.size(), ref->states.size());
    std::vector<double> diff(grid.n_nodes());
    for (size_t n = 0; n + 1 < nrec; ++n) {
      for (int j = 0; j < grid.n_nodes(); ++j)
        diff[j] = run.states[n].sigma[j] - ref->states[n].sigma[j];
      const double h1 = h1_norm(ws, diff);
      acc += dt * h1 * h1;
    }
    const double e = std::sqrt(acc);
    result.rows.push_back({beta_list[i], e});
    betas.push_back(beta_list[i]);
    errs.push_back(e);
  }
  result.slope = loglog_slope(betas, errs);
  result.monotone_decreasing = true;
  for (size_t i = 0; i + 1 < errs.size(); ++i) {
    const bool ordered = betas[i] > betas[i + 1] ? errs[i] > errs[i + 1]
                                                 : errs[i] < errs[i + 1];
    if (!ordered) result.monotone_decreasing = false;
  }
  result.pass = result.monotone_decreasing;
  return result;
}

enum class PerturbTarget { PHI0, SIGMA0, G, SIGMA_B, SIGMA_C };

inline PerturbTarget parse_perturb_target(const std::string& s) {
  if (s == "phi0") return PerturbTarget::PHI0;
  if (s == "sigma0") return PerturbTarget::SIGMA0;
  if (s == "g") return PerturbTarget::G;
  if (s == "sigma_b") return PerturbTarget::SIGMA_B;
  if (s == "sigma_c") return PerturbTarget::SIGMA_C;
  throw ConfigError("experiment.perturb_target: unknown target '" + s + "'");
}

// Smooth compactly-supported bump, max 1 at the domain center.
inline std::vector<double> perturbation_bump(const Grid& grid) {
  std::vector<double> b(grid.n_nodes(), 0.0);
  const double cx = 0.5 * grid.lx, cy = 0.5 * grid.ly;
  const double radius = 0.25 * std::min(grid.lx, grid.ly);
  for (int i = 0; i < grid.n_nodes(); ++i) {
    const Vec2 x = grid.node_coords[i];
    const double r = std::hypot(x.x - cx, x.y - cy);
    if (r < radius) {
      const double c = std::cos(0.5 * M_PI * r / radius);
      b[i] = c * c;
    }
  }
  return b;
}

// Continuous-dependence study per the q = 2 branch (X_q = L2,
// P_q = L-infinity), or q = 4 (X_q = (H1)', P_q = L2) when configured.
inline SweepResult perturbation_study(const RunConfig& cfg,
                                      std::vector<double> deltas,
                                      PerturbTarget target, int threads = 1) {
  const Grid grid = config_grid(cfg);
  const ModelParams base = config_params(cfg);
  if (base.mobility.kind != MobilityLaw::Kind::CONSTANT)
    throw std::invalid_argument(
        "continuous-dependence hypotheses not met: (C1) requires constant "
        "mobility");
  const int q_branch = cfg.get_int("experiment", "q_branch", 2);
  if (q_branch != 2 && q_branch != 4)
    throw ConfigError("experiment.q_branch must be 2 or 4");

  const auto phi0 = config_phi0(cfg, grid);
  const auto sigma0 = config_sigma0(cfg, grid, base, phi0);
  const double dt = cfg.get_double("time", "dt", 1e-3);
  const int n_steps = cfg.get_int("time", "n_steps", 100);
  const double total_time = dt * n_steps;
  const auto bump = perturbation_bump(grid);
  const auto ws = make_norm_workspace(grid);

  const auto baseline = run_and_capture(grid, base, phi0, sigma0, dt, n_steps);

  struct PerCase {
    double lhs = 0.0;
    double rhs = 0.0;
  };
  std::vector<PerCase> cases(deltas.size());

  double gamma_len = 0.0, gamma_n_len = 0.0;
  for (const auto& f : grid.boundary_faces) {
    gamma_len += f.length;
    if (f.tag == FaceTag::NEUMANN_N) gamma_n_len += f.length;
  }

  detail::parallel_indices(
      static_cast<int>(deltas.size()), threads, [&](int i) {
        const double d = deltas[i];
        ModelParams p = base;
        std::vector<double> phi0_p = phi0;
        std::vector<double> sigma0_p = sigma0;
        switch (target) {
          case PerturbTarget::PHI0:
            for (int j = 0; j < grid.n_nodes(); ++j)
              phi0_p[j] += d * bump[j];
            break;
          case PerturbTarget::SIGMA0:
            for (int j = 0; j < grid.n_nodes(); ++j)
              sigma0_p[j] -= d * bump[j];
            break;
          case PerturbTarget::G:
            p.traction_g.x += d;
            break;
          case PerturbTarget::SIGMA_B:
            p.sigma_B = std::max(0.0, p.sigma_B - d);
            break;
          case PerturbTarget::SIGMA_C:
            p.sources.sigma_c = std::max(0.0, p.sources.sigma_c - d);
            break;
        }
        const auto run =
            run_and_capture(grid, p, phi0_p, sigma0_p, dt, n_steps);

        // RHS of the continuous-dependence estimate.
        std::vector<double> diff(grid.n_nodes());
        for (int j = 0; j < grid.n_nodes(); ++j)
          diff[j] = phi0_p[j] - phi0[j];
        const double phi0_term = q_branch == 2 ? l2_norm(ws, diff)
                                               : dual_norm(ws, diff);
        for (int j = 0; j < grid.n_nodes(); ++j)
          diff[j] = sigma0_p[j] - sigma0[j];
        const double sig0_l2 = l2_norm(ws, diff);
        const double dg = std::hypot(p.traction_g.x - base.traction_g.x,
                                     p.traction_g.y - base.traction_g.y);
        const double dsb = p.sigma_B - base.sigma_B;
        const double dsc = p.sources.sigma_c - base.sources.sigma_c;
        cases[i].rhs = phi0_term * phi0_term +
                       base.beta * sig0_l2 * sig0_l2 +
                       dg * dg * gamma_n_len +
                       dsb * dsb * gamma_len * total_time +
                       dsc * dsc * grid.lx * grid.ly * total_time;

        // LHS differences over the shared record times.
        const size_t nrec =
            std::min(run.states.size(), baseline.states.size());
        double sup_phi_sq = 0.0, int_phi_h1_sq = 0.0, sup_sig_sq = 0.0,
               int_sig_h1_sq = 0.0, sup_u_sq = 0.0, int_u_sq = 0.0,
               int_mu_sq = 0.0;
        std::vector<double> ud(2 * grid.n_nodes());
        for (size_t n = 0; n < nrec; ++n) {
          const auto& s1 = run.states[n];
          const auto& s2 = baseline.states[n];
          for (int j = 0; j < grid.n_nodes(); ++j)
            diff[j] = s1.phi[j] - s2.phi[j];
          const double phi_x =
              q_branch == 2 ? l2_norm(ws, diff) : dual_norm(ws, diff);
          const double phi_h1 = h1_norm(ws, diff);
          sup_phi_sq = std::max(sup_phi_sq, phi_x * phi_x);
          for (int j = 0; j < grid.n_nodes(); ++j)
            diff[j] = s1.sigma[j] - s2.sigma[j];
          const double sig_l2 = l2_norm(ws, diff);
          const double sig_h1 = h1_norm(ws, diff);
          sup_sig_sq = std::max(sup_sig_sq, sig_l2 * sig_l2);
          for (int j = 0; j < 2 * grid.n_nodes(); ++j)
            ud[j] = s1.u[j] - s2.u[j];
          const double u_x = h1_norm_vector(ws, ud);
          sup_u_sq = std::max(sup_u_sq, u_x * u_x);
          for (int j = 0; j < grid.n_nodes(); ++j)
            diff[j] = s1.mu[j] - s2.mu[j];
          const double mu_x =
              q_branch == 2 ? l2_norm(ws, diff) : dual_norm(ws, diff);
          if (n + 1 < nrec) {
            int_phi_h1_sq += dt * phi_h1 * phi_h1;
            int_sig_h1_sq += dt * sig_h1 * sig_h1;
            int_mu_sq += dt * mu_x * mu_x;
            int_u_sq += dt * u_x * u_x;
          }
        }
        const double u_term = q_branch == 2 ? sup_u_sq : int_u_sq;
        cases[i].lhs = sup_phi_sq + int_phi_h1_sq +
                       base.beta * sup_sig_sq + int_sig_h1_sq + u_term +
                       int_mu_sq;
      });

  SweepResult result;
  result.name = "perturbation";
  result.column_names = {"delta", "sqrt_lhs", "lhs", "rhs", "ratio"};
  std::vector<double> ds, ms;
  for (size_t i = 0; i < deltas.size(); ++i) {
    const double ratio = cases[i].rhs > 0.0
                             ? cases[i].lhs / cases[i].rhs
                             : std::numeric_limits<double>::quiet_NaN();
    result.rows.push_back({deltas[i], std::sqrt(cases[i].lhs), cases[i].lhs,
                           cases[i].rhs, ratio});
    if (deltas[i] > 0.0) {
      ds.push_back(deltas[i]);
      ms.push_back(std::sqrt(cases[i].lhs));
    }
  }
  result.slope = loglog_slope(ds, ms);
  return result;
}

enum class DtRule { FIXED, PROPORTIONAL };

inline DtRule parse_dt_rule(const std::string& s) {
  if (s == "fixed") return DtRule::FIXED;
  if (s == "proportional") return DtRule::PROPORTIONAL;
  throw ConfigError("experiment.dt_rule: unknown rule '" + s + "'");
}

// Self-convergence of the coupled solver against the finest grid in the
// list (grids must be nested: every size divides the finest).
inline SweepResult convergence_study(const RunConfig& cfg,
                                     std::vector<int> grid_sizes,
                                     DtRule dt_rule, int threads = 1) {
  if (grid_sizes.empty())
    throw std::invalid_argument("convergence_study: no grids");
  const int finest = grid_sizes.back();
  for (int n : grid_sizes) {
    if (n < 2 || finest % n != 0)
      throw std::invalid_argument(
          "convergence_study: grid sizes must divide the finest");
  }
  const double dt0 = cfg.get_double("time", "dt", 1e-3);
  const int steps0 = cfg.get_int("time", "n_steps", 10);
  const int n0 = grid_sizes.front();

  struct RunOut {
    Grid grid;
    FieldState state;
  };
  std::vector<RunOut> outs(grid_sizes.size());
  detail::parallel_indices(
      static_cast<int>(grid_sizes.size()), threads, [&](int i) {
        const int n = grid_sizes[i];
        RunConfig c = cfg;
        c.set("grid", "nx", std::to_string(n));
        c.set("grid", "ny", std::to_string(n));
        Grid g = config_grid(c);
        ModelParams p = config_params(c);
        auto phi0 = config_phi0(c, g);
        auto sigma0 = config_sigma0(c, g, p, phi0);
        double dt = dt0;
        int steps = steps0;
        if (dt_rule == DtRule::PROPORTIONAL) {
          dt = dt0 * n0 / n;
          steps = steps0 * n / n0;
        }
        auto res = run_simulation(g, p, std::move(phi0), std::move(sigma0),
                                  dt, steps);
        outs[i] = {std::move(g), std::move(res.final_state)};
      });

  const auto& fine = outs.back();
  SweepResult result;
  result.name = "convergence";
  result.column_names = {"n", "phi_l2_err", "sigma_l2_err", "u_l2_err"};
  for (size_t i = 0; i + 1 < outs.size(); ++i) {
    const auto& coarse = outs[i];
    const int r = finest / grid_sizes[i];
    const auto ws = make_norm_workspace(coarse.grid);
    std::vector<double> dphi(coarse.grid.n_nodes()),
        dsig(coarse.grid.n_nodes()), du(2 * coarse.grid.n_nodes());
    for (int j = 0; j <= coarse.grid.ny; ++j) {
      for (int k = 0; k <= coarse.grid.nx; ++k) {
        const int cn = coarse.grid.node_index(k, j);
        const int fn = fine.grid.node_index(r * k, r * j);
        dphi[cn] = coarse.state.phi[cn] - fine.state.phi[fn];
        dsig[cn] = coarse.state.sigma[cn] - fine.state.sigma[fn];
        du[2 * cn] = coarse.state.u[2 * cn] - fine.state.u[2 * fn];
        du[2 * cn + 1] = coarse.state.u[2 * cn + 1] - fine.state.u[2 * fn + 1];
      }
    }
    std::vector<double> ux(coarse.grid.n_nodes()), uy(coarse.grid.n_nodes());
    for (int j = 0; j < coarse.grid.n_nodes(); ++j) {
      ux[j] = du[2 * j];
      uy[j] = du[2 * j + 1];
    }
    const double ul2 = std::sqrt(ws.mass.quadratic_form(ux) +
                                 ws.mass.quadratic_form(uy));
    result.rows.push_back({static_cast<double>(grid_sizes[i]),
                           l2_norm(ws, dphi), l2_norm(ws, dsig), ul2});
  }
  if (result.rows.size() >= 2) {
    std::vector<double> hs, es;
    for (const auto& row : result.rows) {
      hs.push_back(1.0 / row[0]);
      es.push_back(row[1]);
    }
    result.slope = loglog_slope(hs, es);
  }
  return result;
}

struct OrderStudy {
  std::vector<int> sizes;
  std::vector<double> errors;
  std::vector<double> orders;  // between consecutive sizes
  double ls_order = std::numeric_limits<double>::quiet_NaN();
};

// Manufactured-solution convergence for the elasticity solve:
// u* = (sin(pi x) sin(pi y), x(1-x) y(1-y)) on the unit square with full
// Dirichlet clamping and the matching analytic body force.
inline OrderStudy elasticity_manufactured_orders(const ElasticLaw& base_law,
                                                 std::vector<int> sizes) {
  OrderStudy study;
  study.sizes = sizes;
  ElasticLaw law = base_law;
  law.eigenstrain_offset = {};
  law.eigenstrain_slope = {};
  const double lam = law.lame_lambda, mu = law.lame_mu;
  const double pi = M_PI;

  auto exact_u = [&](double x, double y) {
    return Vec2{std::sin(pi * x) * std::sin(pi * y),
                x * (1.0 - x) * y * (1.0 - y)};
  };
  auto body_force = [&](double x, double y) {
    const double s = std::sin(pi * x) * std::sin(pi * y);
    const double c = std::cos(pi * x) * std::cos(pi * y);
    return Vec2{(lam + 3.0 * mu) * pi * pi * s -
                    (lam + mu) * (1.0 - 2.0 * x) * (1.0 - 2.0 * y),
                2.0 * mu * y * (1.0 - y) +
                    2.0 * (lam + 2.0 * mu) * x * (1.0 - x) -
                    (lam + mu) * pi * pi * c};
  };

  for (int n : sizes) {
    Grid grid = build_grid(n, n, 1.0, 1.0, EdgeSet::all());
    auto sys = assemble_elasticity(grid, law, Vec2{0.0, 0.0});
    sys.body_force_hook.assign(2 * grid.n_nodes(), 0.0);
    for (int i = 0; i < grid.n_nodes(); ++i) {
      const Vec2 f = body_force(grid.node_coords[i].x, grid.node_coords[i].y);
      sys.body_force_hook[2 * i] = f.x;
      sys.body_force_hook[2 * i + 1] = f.y;
    }
    std::vector<double> phi(grid.n_nodes(), 0.0);
    auto [u, rep] = solve_displacement(sys, phi);

    const auto q4 = element_quadrature(4);
    double err_sq = 0.0;
    const double jac = 0.25 * grid.hx * grid.hy;
    for (int c = 0; c < grid.n_cells(); ++c) {
      const auto nodes = grid.cell_nodes(c);
      for (int k = 0; k < q4.size(); ++k) {
        double uhx = 0.0, uhy = 0.0;
        for (int a = 0; a < 4; ++a) {
          uhx += q4.shape_values[k][a] * u[2 * nodes[a]];
          uhy += q4.shape_values[k][a] * u[2 * nodes[a] + 1];
        }
        const Vec2 x = gauss_point_coords(grid, c, q4.points[k]);
        const Vec2 ue = exact_u(x.x, x.y);
        err_sq += q4.points[k].weight * jac *
                  ((uhx - ue.x) * (uhx - ue.x) + (uhy - ue.y) * (uhy - ue.y));
      }
    }
    study.errors.push_back(std::sqrt(err_sq));
  }
  for (size_t i = 0; i + 1 < study.errors.size(); ++i) {
    const double ratio = study.errors[i] / study.errors[i + 1];
    const double href = static_cast<double>(study.sizes[i + 1]) /
                        study.sizes[i];
    study.orders.push_back(std::log(ratio) / std::log(href));
  }
  std::vector<double> hs, es;
  for (size_t i = 0; i < study.sizes.size(); ++i) {
    hs.push_back(1.0 / study.sizes[i]);
    es.push_back(study.errors[i]);
  }
  study.ls_order = loglog_slope(hs, es);
  return study;
}

inline void write_sweep_csv(const SweepResult& result,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_sweep_csv: cannot open " + path);
  for (size_t i = 0; i < result.column_names.size(); ++i)
    out << (i ? "," : "") << result.column_names[i];
  out << "\n";
  for (const auto& row : result.rows) {
    for (size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << fmt17(row[i]);
    out << "\n";
  }
}

inline void write_sweep_report(const SweepResult& result,
                               const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("write_sweep_report: cannot open " + path);
  out << "sweep: " << result.name << "\n";
  for (size_t i = 0; i < result.column_names.size(); ++i)
    out << (i ? "  " : "") << result.column_names[i];
  out << "\n";
  for (const auto& row : result.rows) {
    for (size_t i = 0; i < row.size(); ++i)
      out << (i ? "  " : "") << fmt17(row[i]);
    out << "\n";
  }
  out << "slope = " << fmt17(result.slope) << "\n";
  out << "monotone_decreasing = "
      << (result.monotone_decreasing ? "true" : "false") << "\n";
  for (const auto& n : result.notes) out << "note: " << n << "\n";
}

}  // namespace mechanochem
