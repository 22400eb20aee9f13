#pragma once

#include <cstdio>
#include <functional>
#include <utility>
#include <vector>

#include "mechanochem/assembly.hpp"
#include "mechanochem/diagnostics.hpp"
#include "mechanochem/elasticity.hpp"
#include "mechanochem/state.hpp"

namespace mechanochem {

// Initial-data smoothing: solve (delta K + M) phi_delta = M phi0 with
// natural (Neumann) boundary. Contracts both the L2 norm and the H1
// seminorm of phi0.
inline std::vector<double> mollify_initial(const Grid& grid,
                                           std::span<const double> phi0,
                                           double delta) {
  if (!(delta > 0.0) || !(delta <= 1.0))
    throw std::invalid_argument("mollify_initial: delta must be in (0,1]");
  const auto m = scalar_mass_matrix(grid);
  const auto k = scalar_stiffness_matrix(grid);
  std::vector<Triplet> trip;
  for (int r = 0; r < m.n_rows(); ++r) {
    for (int j = m.row_offsets()[r]; j < m.row_offsets()[r + 1]; ++j)
      trip.push_back({r, m.col_indices()[j], m.values()[j]});
    for (int j = k.row_offsets()[r]; j < k.row_offsets()[r + 1]; ++j)
      trip.push_back({r, k.col_indices()[j], delta * k.values()[j]});
  }
  const auto a =
      SparseMatrix::from_triplets(m.n_rows(), m.n_cols(), std::move(trip));
  std::vector<double> rhs(m.n_rows(), 0.0);
  m.multiply(phi0, rhs);
  auto [x, rep] =
      cg_solve(a, rhs, 1e-13, 20 * a.n_rows(), Preconditioner::JACOBI);
  if (!rep.converged)
    throw SolveError("mollify_initial: CG did not converge", rep);
  return x;
}

struct NewtonReport {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
};

// Assembled operators shared by the per-step solvers of one simulation.
struct StepperContext {
  const Grid* grid = nullptr;
  ModelParams params;
  ElementQuadrature q2 = element_quadrature(2);
  ElementQuadrature q3 = element_quadrature(3);
  SparseMatrix mass;
  std::vector<double> lumped_mass;
  SparseMatrix stiffness;
  std::vector<double> boundary_weights;  // lumped face weights on Gamma
  ElasticitySystem elastic;
  double vegard_c1 = 0.0;  // C(Estar) : Estar
};

inline StepperContext make_stepper_context(const Grid& grid,
                                           const ModelParams& params) {
  StepperContext ctx;
  ctx.grid = &grid;
  ctx.params = params;
  ctx.mass = scalar_mass_matrix(grid);
  ctx.lumped_mass = lump_mass(ctx.mass);
  ctx.stiffness = scalar_stiffness_matrix(grid);
  ctx.boundary_weights =
      boundary_mass_terms(grid, BoundarySubset::ALL_GAMMA).face_weights;
  ctx.elastic =
      assemble_elasticity(grid, params.elastic, params.traction_g);
  ctx.vegard_c1 = ddot(params.elastic.apply_C(params.elastic.eigenstrain_slope),
                       params.elastic.eigenstrain_slope);
  return ctx;
}

// Implicit nutrient step. Lumped mass, lumped Robin weights and lumped
// reaction keep the system an M-matrix on square cells, which gives the
// discrete comparison principle 0 <= sigma <= M.
inline std::pair<std::vector<double>, SolveReport> nutrient_step(
    const StepperContext& ctx, std::span<const double> phi_old,
    std::span<const double> sigma_old, double dt, double t_new) {
  const auto& p = ctx.params;
  if (p.beta > 0.0 && !(dt > 0.0))
    throw std::invalid_argument("nutrient_step: dt must be positive");
  if (p.beta == 0.0 && p.sources.supply_B == 0.0 && p.kappa == 0.0)
    throw std::runtime_error(
        "quasi-static nutrient system singular ((A1): beta=0 requires "
        "B+kappa>0)");

  const int n = ctx.grid->n_nodes();
  const double lam_c = p.sources.lambda_c(t_new);
  const double bdt = p.beta > 0.0 ? p.beta / dt : 0.0;

  std::vector<Triplet> trip;
  trip.reserve(ctx.stiffness.values().size() + n);
  for (int r = 0; r < n; ++r)
    for (int k = ctx.stiffness.row_offsets()[r];
         k < ctx.stiffness.row_offsets()[r + 1]; ++k)
      trip.push_back({r, ctx.stiffness.col_indices()[k],
                      ctx.stiffness.values()[k]});
  std::vector<double> rhs(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double react = lam_c * p.sources.h(phi_old[i]) + p.sources.supply_B;
    const double diag = bdt * ctx.lumped_mass[i] +
                        p.kappa * ctx.boundary_weights[i] +
                        ctx.lumped_mass[i] * react;
    trip.push_back({i, i, diag});
    rhs[i] = bdt * ctx.lumped_mass[i] * sigma_old[i] +
             p.sources.supply_B * ctx.lumped_mass[i] *
                 p.sources.sigma_c_at(i) +
             p.kappa * ctx.boundary_weights[i] * p.sigma_B_at(i);
  }
  const auto a = SparseMatrix::from_triplets(n, n, std::move(trip));
  // Direct banded solve: the comparison-principle bound is asserted to
  // 1e-12, below the practical CG residual floor on this system.
  auto sigma_new = direct_solve(a, rhs);
  SolveReport rep;
  rep.method = SolveMethod::DIRECT;
  rep.iterations = 1;
  rep.converged = true;
  std::vector<double> resid(n, 0.0);
  a.multiply(sigma_new, resid);
  double rn = 0.0;
  for (int i = 0; i < n; ++i) rn += (resid[i] - rhs[i]) * (resid[i] - rhs[i]);
  rep.final_residual = std::sqrt(rn);
  return {std::move(sigma_new), rep};
}

namespace detail {

// Residual of the coupled (phi, mu) system, interleaved as
// z = (phi_0, mu_0, phi_1, mu_1, ...):
//   F_phi = M (phi - phi_old) + dt K_m mu - dt b_U
//   F_mu  = M mu - eps K phi - 1/eps (b_psi1(phi) + b_psi2)
//           + chi M sigma - b_w0 - c1 M phi
// Nonlinear terms enter as Galerkin loads over the 3x3 rule.
struct ChSystem {
  const StepperContext* ctx;
  double dt = 0.0;
  SparseMatrix mobility_stiffness;
  std::vector<double> phi_old;
  std::vector<double> load_const_phi;  // dt b_U
  std::vector<double> load_const_mu;   // 1/eps b_psi2 + b_w0 - chi M sigma
  std::vector<double> phi_gauss3;      // scratch

  int n() const { return ctx->grid->n_nodes(); }

  std::vector<double> residual(std::span<const double> phi,
                               std::span<const double> mu) const {
    const auto& p = ctx->params;
    const int nn = n();
    std::vector<double> f(2 * nn, 0.0);
    std::vector<double> mphi(nn), mmu(nn), kmmu(nn), kphi(nn);
    ctx->mass.multiply(phi, mphi);
    ctx->mass.multiply(mu, mmu);
    auto mphi_old = ctx->mass.multiply(phi_old);
    mobility_stiffness.multiply(mu, kmmu);
    ctx->stiffness.multiply(phi, kphi);

    const auto phi_q = interpolate_at_gauss(*ctx->grid, ctx->q3, phi);
    std::vector<double> psi1p(phi_q.size());
    for (size_t i = 0; i < phi_q.size(); ++i)
      psi1p[i] = p.potential.psi1_prime(phi_q[i]);
    const auto b_psi1 = load_from_gauss(*ctx->grid, ctx->q3, psi1p);

    for (int i = 0; i < nn; ++i) {
      f[2 * i] = mphi[i] - mphi_old[i] + dt * kmmu[i] - load_const_phi[i];
      f[2 * i + 1] = mmu[i] - p.epsilon * kphi[i] -
                     b_psi1[i] / p.epsilon - ctx->vegard_c1 * mphi[i] -
                     load_const_mu[i];
    }
    return f;
  }

  SparseMatrix jacobian(std::span<const double> phi) const {
    const auto& p = ctx->params;
    const int nn = n();
    const auto phi_q = interpolate_at_gauss(*ctx->grid, ctx->q3, phi);
    std::vector<double> psi1pp(phi_q.size());
    for (size_t i = 0; i < phi_q.size(); ++i)
      psi1pp[i] = p.potential.psi1_second(phi_q[i]);
    const auto a1 = weighted_mass_matrix(*ctx->grid, ctx->q3, psi1pp);

    std::vector<Triplet> trip;
    trip.reserve(4 * ctx->mass.values().size() +
                 ctx->stiffness.values().size() + a1.values().size());
    for (int r = 0; r < nn; ++r) {
      for (int k = ctx->mass.row_offsets()[r];
           k < ctx->mass.row_offsets()[r + 1]; ++k) {
        const int c = ctx->mass.col_indices()[k];
        const double v = ctx->mass.values()[k];
        trip.push_back({2 * r, 2 * c, v});
        trip.push_back({2 * r + 1, 2 * c + 1, v});
        trip.push_back({2 * r + 1, 2 * c, -ctx->vegard_c1 * v});
      }
      for (int k = ctx->stiffness.row_offsets()[r];
           k < ctx->stiffness.row_offsets()[r + 1]; ++k)
        trip.push_back({2 * r + 1, 2 * ctx->stiffness.col_indices()[k],
                        -p.epsilon * ctx->stiffness.values()[k]});
      for (int k = mobility_stiffness.row_offsets()[r];
           k < mobility_stiffness.row_offsets()[r + 1]; ++k)
        trip.push_back({2 * r, 2 * mobility_stiffness.col_indices()[k] + 1,
                        dt * mobility_stiffness.values()[k]});
      for (int k = a1.row_offsets()[r]; k < a1.row_offsets()[r + 1]; ++k)
        trip.push_back({2 * r + 1, 2 * a1.col_indices()[k],
                        -a1.values()[k] / p.epsilon});
    }
    return SparseMatrix::from_triplets(2 * nn, 2 * nn, std::move(trip));
  }
};

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace detail

// One semi-implicit convex-splitting Cahn-Hilliard step: psi1' implicit,
// psi2' explicit, mobility lagged at the old state, W_phi implicit (affine
// in phi under Vegard's law), sources frozen at (phi_old, sigma_new,
// strain(u_new)). Damped Newton with banded direct factorization.
inline std::tuple<std::vector<double>, std::vector<double>, NewtonReport>
ch_step(const StepperContext& ctx, const FieldState& state_old,
        std::span<const double> sigma_new, std::span<const double> u_new,
        double dt, double t_new) {
  if (!(dt > 0.0)) throw std::invalid_argument("ch_step: dt must be positive");
  const auto& p = ctx.params;
  const Grid& grid = *ctx.grid;
  const int n = grid.n_nodes();

  detail::ChSystem sys;
  sys.ctx = &ctx;
  sys.dt = dt;
  sys.phi_old = state_old.phi;

  // Lagged mobility at the 2x2 points of the old state.
  {
    const auto phi_q2 = interpolate_at_gauss(grid, ctx.q2, state_old.phi);
    std::vector<double> mob(phi_q2.size());
    for (size_t i = 0; i < phi_q2.size(); ++i) {
      double stress = 0.0;
      if (p.mobility.kind == MobilityLaw::Kind::STRESS_GATED)
        stress = stress_W_E(p.elastic, phi_q2[i], state_old.strain[i])
                     .frobenius_norm();
      mob[i] = p.mobility.evaluate(stress);
    }
    sys.mobility_stiffness = scalar_stiffness_matrix(grid, mob);
  }

  // Frozen loads: sources, explicit concave part, phi-independent W_phi.
  {
    const auto phi_q3 = interpolate_at_gauss(grid, ctx.q3, state_old.phi);
    const auto sigma_q3 = interpolate_at_gauss(grid, ctx.q3, sigma_new);
    const auto strain_q3 = strain_at_gauss(grid, ctx.q3, u_new);
    std::vector<double> u_vals(phi_q3.size()), psi2p(phi_q3.size()),
        w0(phi_q3.size());
    for (size_t i = 0; i < phi_q3.size(); ++i) {
      u_vals[i] = source_U(p.sources, p.elastic, t_new, phi_q3[i],
                           sigma_q3[i], strain_q3[i]);
      psi2p[i] = p.potential.psi2_prime(phi_q3[i]);
      // phi-independent part of W_phi = -C(E(u) - Ehat) : Estar
      const SymTensor2 e = strain_q3[i] - p.elastic.eigenstrain_offset;
      w0[i] = -ddot(p.elastic.apply_C(e), p.elastic.eigenstrain_slope);
    }
    const auto b_u = load_from_gauss(grid, ctx.q3, u_vals);
    const auto b_psi2 = load_from_gauss(grid, ctx.q3, psi2p);
    const auto b_w0 = load_from_gauss(grid, ctx.q3, w0);
    std::vector<double> msigma(n);
    ctx.mass.multiply(sigma_new, msigma);
    sys.load_const_phi.assign(n, 0.0);
    sys.load_const_mu.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
      sys.load_const_phi[i] = dt * b_u[i];
      sys.load_const_mu[i] =
          b_psi2[i] / p.epsilon + b_w0[i] - p.chi * msigma[i];
    }
  }

  std::vector<double> phi = state_old.phi;
  std::vector<double> mu = state_old.mu;
  NewtonReport rep;
  auto f = sys.residual(phi, mu);
  double res = detail::inf_norm(f);
  rep.residual_history.push_back(res);

  while (res > p.newton_tol && rep.iterations < p.newton_max_iter) {
    const auto jac = sys.jacobian(phi);
    std::vector<double> rhs(f.size());
    for (size_t i = 0; i < f.size(); ++i) rhs[i] = -f[i];
    const auto delta = direct_solve(jac, rhs);

    double step = 1.0;
    std::vector<double> phi_try(n), mu_try(n), f_try;
    double res_try = res;
    bool accepted = false;
    for (int halving = 0; halving <= 10; ++halving) {
      for (int i = 0; i < n; ++i) {
        phi_try[i] = phi[i] + step * delta[2 * i];
        mu_try[i] = mu[i] + step * delta[2 * i + 1];
      }
      f_try = sys.residual(phi_try, mu_try);
      res_try = detail::inf_norm(f_try);
      if (res_try < res) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (res <= p.newton_accept_tol) break;
      throw std::runtime_error("ch_step: Newton stagnation at residual " +
                               std::to_string(res));
    }
    phi.swap(phi_try);
    mu.swap(mu_try);
    f.swap(f_try);
    res = res_try;
    rep.iterations++;
    rep.residual_history.push_back(res);
  }
  rep.final_residual = res;
  rep.converged = res <= p.newton_accept_tol;
  if (!rep.converged) {
    std::string hist;
    for (double r : rep.residual_history) hist += " " + std::to_string(r);
    throw std::runtime_error("ch_step: Newton failed after " +
                             std::to_string(rep.iterations) +
                             " iterations; residual history:" + hist);
  }
  return {std::move(phi), std::move(mu), std::move(rep)};
}

struct StepCounters {
  int newton_iters = 0;
  int linear_iters = 0;
};

// One staggered step: elasticity (instantaneous), then nutrient, then
// Cahn-Hilliard with the freshest sigma and u.
inline FieldState coupled_step(const StepperContext& ctx,
                               const FieldState& state, double dt,
                               StepCounters* counters = nullptr) {
  const double t_new = state.time + dt;
  auto stage = [&](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("coupled_step[") + name +
                               "] at t=" + std::to_string(t_new) + ": " +
                               e.what());
    }
  };

  auto [u_new, urep] = stage("elasticity", [&] {
    return solve_displacement(ctx.elastic, state.phi);
  });
  auto [sigma_new, srep] = stage("nutrient", [&] {
    return nutrient_step(ctx, state.phi, state.sigma, dt, t_new);
  });
  auto [phi_new, mu_new, nrep] = stage("cahn-hilliard", [&] {
    return ch_step(ctx, state, sigma_new, u_new, dt, t_new);
  });

  if (counters) {
    counters->newton_iters = nrep.iterations;
    counters->linear_iters = urep.iterations + srep.iterations;
  }
  FieldState out;
  out.time = t_new;
  out.phi = std::move(phi_new);
  out.mu = std::move(mu_new);
  out.sigma = std::move(sigma_new);
  out.strain = strain_field(*ctx.grid, u_new);
  out.u = std::move(u_new);
  return out;
}

using StepHook =
    std::function<void(const FieldState&, const DiagnosticsRecord&)>;

struct SimulationResult {
  FieldState final_state;
  std::vector<DiagnosticsRecord> records;
};

// Initial mu from the mu-equation at t=0 (mu is determined instantaneously
// by phi, sigma, u).
inline std::vector<double> initial_mu(const StepperContext& ctx,
                                      std::span<const double> phi,
                                      std::span<const double> sigma,
                                      std::span<const double> u,
                                      int* iters = nullptr) {
  const auto& p = ctx.params;
  const Grid& grid = *ctx.grid;
  const int n = grid.n_nodes();
  const auto phi_q3 = interpolate_at_gauss(grid, ctx.q3, phi);
  const auto strain_q3 = strain_at_gauss(grid, ctx.q3, u);
  std::vector<double> vals(phi_q3.size());
  for (size_t i = 0; i < phi_q3.size(); ++i) {
    const double psi_p = p.potential.psi1_prime(phi_q3[i]) +
                         p.potential.psi2_prime(phi_q3[i]);
    vals[i] = psi_p / p.epsilon + w_phi(p.elastic, phi_q3[i], strain_q3[i]);
  }
  auto rhs = load_from_gauss(grid, ctx.q3, vals);
  std::vector<double> kphi(n, 0.0), msigma(n, 0.0);
  ctx.stiffness.multiply(phi, kphi);
  ctx.mass.multiply(sigma, msigma);
  for (int i = 0; i < n; ++i)
    rhs[i] += p.epsilon * kphi[i] - p.chi * msigma[i];
  auto [mu, rep] =
      cg_solve(ctx.mass, rhs, p.cg_tol, 20 * n, Preconditioner::JACOBI);
  if (!rep.converged)
    throw SolveError("initial_mu: CG did not converge", rep);
  if (iters) *iters = rep.iterations;
  return mu;
}

inline SimulationResult run_simulation(const Grid& grid,
                                       const ModelParams& params,
                                       std::vector<double> phi0,
                                       std::vector<double> sigma0, double dt,
                                       int n_steps,
                                       const StepHook& hook = {}) {
  params.validate();
  params.validate_sigma0(sigma0);
  if (n_steps > 0 && !(dt > 0.0))
    throw std::invalid_argument("run_simulation: dt must be positive");
  if (!grid.square_cells())
    std::fprintf(stderr,
                 "warning: non-square cells (hx=%g, hy=%g); the discrete "
                 "comparison principle is certified on squares only\n",
                 grid.hx, grid.hy);

  const auto ctx = make_stepper_context(grid, params);
  const auto ws = make_norm_workspace(grid);

  SimulationResult result;
  FieldState state;
  state.time = 0.0;
  state.phi = std::move(phi0);
  state.sigma = std::move(sigma0);
  int mu_iters = 0;
  auto [u0, urep] = solve_displacement(ctx.elastic, state.phi);
  state.strain = strain_field(grid, u0);
  state.u = std::move(u0);
  state.mu = initial_mu(ctx, state.phi, state.sigma, state.u, &mu_iters);

  auto rec = make_record(grid, params, ws, state, 0,
                         urep.iterations + mu_iters);
  if (hook) hook(state, rec);
  result.records.push_back(rec);

  for (int step = 0; step < n_steps; ++step) {
    StepCounters counters;
    try {
      state = coupled_step(ctx, state, dt, &counters);
    } catch (const std::exception& e) {
      throw std::runtime_error("run_simulation: step " +
                               std::to_string(step + 1) + " failed: " +
                               e.what());
    }
    rec = make_record(grid, params, ws, state, counters.newton_iters,
                      counters.linear_iters);
    if (hook) hook(state, rec);
    result.records.push_back(rec);
  }
  result.final_state = std::move(state);
  return result;
}

}  // namespace mechanochem
