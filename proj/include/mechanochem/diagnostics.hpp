#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mechanochem/assembly.hpp"
#include "mechanochem/elasticity.hpp"
#include "mechanochem/state.hpp"

namespace mechanochem {

// Per-step ledger row. total_energy always equals the sum of its three
// parts; the norm columns carry the constituents of the energy inequality.
struct DiagnosticsRecord {
  double time = 0.0;
  double total_energy = 0.0;
  double ginzburg_landau_part = 0.0;
  double nutrient_part = 0.0;
  double elastic_part = 0.0;
  double mass = 0.0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double sigma_l2_norm = 0.0;
  double sigma_h1_norm = 0.0;
  double phi_h1_norm = 0.0;
  double psi_l1_norm = 0.0;
  double mu_h1_norm = 0.0;
  double u_h1_norm = 0.0;
  double grad_mu_norm = 0.0;
  int newton_iters = 0;
  int linear_iters = 0;
};

inline const char* diagnostics_csv_header() {
  return "time,total_energy,ginzburg_landau_part,nutrient_part,elastic_part,"
         "mass,sigma_min,sigma_max,sigma_l2_norm,sigma_h1_norm,phi_h1_norm,"
         "psi_l1_norm,mu_h1_norm,u_h1_norm,grad_mu_norm,newton_iters,"
         "linear_iters";
}

struct EnergyParts {
  double ginzburg_landau = 0.0;
  double nutrient = 0.0;
  double elastic = 0.0;
  double total = 0.0;
  double psi_l1 = 0.0;  // \int psi(phi), without the 1/epsilon factor
};

// E = \int eps/2 |grad phi|^2 + 1/eps psi(phi) + beta/2 sigma^2 + W.
// 3x3 Gauss: exact for every (bi-quartic) summand, and identical to the
// Lyapunov functional of the convex-splitting step.
inline EnergyParts total_energy(const Grid& grid, const ModelParams& params,
                                const FieldState& state) {
  const auto q3 = element_quadrature(3);
  const auto phi_q = interpolate_at_gauss(grid, q3, state.phi);
  const auto grad_phi_q = gradient_at_gauss(grid, q3, state.phi);
  const auto sigma_q = interpolate_at_gauss(grid, q3, state.sigma);
  const auto strain_q = strain_at_gauss(grid, q3, state.u);
  const double jac = 0.25 * grid.hx * grid.hy;

  EnergyParts parts;
  const double eps = params.epsilon;
  size_t idx = 0;
  for (int c = 0; c < grid.n_cells(); ++c) {
    for (int k = 0; k < q3.size(); ++k, ++idx) {
      const double w = q3.points[k].weight * jac;
      const double psi = params.potential.psi(phi_q[idx]);
      parts.ginzburg_landau +=
          w * (0.5 * eps * dot(grad_phi_q[idx], grad_phi_q[idx]) +
               psi / eps);
      parts.psi_l1 += w * psi;
      parts.nutrient += w * 0.5 * params.beta * sigma_q[idx] * sigma_q[idx];
      parts.elastic +=
          w * elastic_energy_W(params.elastic, phi_q[idx], strain_q[idx]);
    }
  }
  parts.total = parts.ginzburg_landau + parts.nutrient + parts.elastic;
  return parts;
}

// Assembled matrices backing the norm evaluations.
struct NormWorkspace {
  SparseMatrix mass;
  SparseMatrix stiffness;
  SparseMatrix riesz;  // K + M
  double cg_tol = 1e-12;
};

inline NormWorkspace make_norm_workspace(const Grid& grid) {
  NormWorkspace ws;
  ws.mass = scalar_mass_matrix(grid);
  ws.stiffness = scalar_stiffness_matrix(grid);
  std::vector<Triplet> trip;
  for (int r = 0; r < ws.mass.n_rows(); ++r) {
    for (int k = ws.mass.row_offsets()[r]; k < ws.mass.row_offsets()[r + 1];
         ++k)
      trip.push_back({r, ws.mass.col_indices()[k], ws.mass.values()[k]});
    for (int k = ws.stiffness.row_offsets()[r];
         k < ws.stiffness.row_offsets()[r + 1]; ++k)
      trip.push_back({r, ws.stiffness.col_indices()[k],
                      ws.stiffness.values()[k]});
  }
  ws.riesz = SparseMatrix::from_triplets(ws.mass.n_rows(), ws.mass.n_cols(),
                                         std::move(trip));
  return ws;
}

inline double l2_norm(const NormWorkspace& ws, std::span<const double> f) {
  return std::sqrt(std::max(0.0, ws.mass.quadratic_form(f)));
}

inline double h1_norm(const NormWorkspace& ws, std::span<const double> f) {
  return std::sqrt(std::max(0.0, ws.riesz.quadratic_form(f)));
}

inline double h1_seminorm(const NormWorkspace& ws,
                          std::span<const double> f) {
  return std::sqrt(std::max(0.0, ws.stiffness.quadratic_form(f)));
}

// H1 norm of an interleaved vector field (the X(Omega) norm).
inline double h1_norm_vector(const NormWorkspace& ws,
                             std::span<const double> u) {
  const int n = ws.mass.n_rows();
  std::vector<double> cx(n), cy(n);
  for (int i = 0; i < n; ++i) {
    cx[i] = u[2 * i];
    cy[i] = u[2 * i + 1];
  }
  const double sx = ws.riesz.quadratic_form(cx);
  const double sy = ws.riesz.quadratic_form(cy);
  return std::sqrt(std::max(0.0, sx + sy));
}

// Dual (H^1)' norm via the discrete Neumann Riesz operator:
// solve (K + M) z = M f, then ||f||_*^2 = (M f) . z.
inline double dual_norm(const NormWorkspace& ws, std::span<const double> f) {
  std::vector<double> mf(ws.mass.n_rows(), 0.0);
  ws.mass.multiply(f, mf);
  auto [z, rep] = cg_solve(ws.riesz, mf, ws.cg_tol,
                           20 * ws.riesz.n_rows(), Preconditioner::JACOBI);
  if (!rep.converged)
    throw SolveError("dual_norm: CG did not converge", rep);
  double s = 0.0;
  for (size_t i = 0; i < mf.size(); ++i) s += mf[i] * z[i];
  return std::sqrt(std::max(0.0, s));
}

// Left-endpoint rectangle rule for \int_0^T v(t)^2 dt over uniform steps.
inline double bochner_l2_sq(std::span<const double> values, double dt) {
  double s = 0.0;
  if (values.size() < 2) return 0.0;
  for (size_t i = 0; i + 1 < values.size(); ++i)
    s += dt * values[i] * values[i];
  return s;
}

// \int_0^T ||sigma||_{H^1}^2 dt accumulated from the per-step records.
inline double l2h1_accumulate(std::span<const DiagnosticsRecord> records) {
  if (records.size() < 2) return 0.0;
  const double dt = records[1].time - records[0].time;
  double s = 0.0;
  for (size_t i = 0; i + 1 < records.size(); ++i)
    s += dt * records[i].sigma_h1_norm * records[i].sigma_h1_norm;
  return s;
}

struct SigmaBoundsResult {
  bool ok = true;
  double violation = 0.0;
};

// Node-wise 0 <= sigma <= M with tolerance 1e-12.
inline SigmaBoundsResult sigma_bounds_check(const FieldState& state,
                                            double M, double tol = 1e-12) {
  SigmaBoundsResult r;
  for (double v : state.sigma) {
    if (v < -tol) r.violation = std::max(r.violation, -v);
    if (v > M + tol) r.violation = std::max(r.violation, v - M);
  }
  r.ok = r.violation == 0.0;
  return r;
}

// Empirical bookkeeping for the energy inequality: LHS constituents and the
// ratio against (1 + beta ||sigma_0||^2).
struct EnergyLedger {
  double sup_phi_h1_sq = 0.0;
  double sup_psi_l1 = 0.0;
  double sup_beta_sigma_l2_sq = 0.0;
  double sup_u_x_sq = 0.0;
  double int_mu_h1_sq = 0.0;
  double int_sigma_h1_sq = 0.0;
  double lhs = 0.0;
  double rhs_base = 1.0;  // 1 + beta ||sigma_0||^2
  double ratio = 0.0;
  bool finite = true;
};

inline EnergyLedger energy_inequality_ledger(
    std::span<const DiagnosticsRecord> records, const ModelParams& params,
    double sigma0_l2_norm) {
  EnergyLedger led;
  if (records.empty()) return led;
  const double dt =
      records.size() > 1 ? records[1].time - records[0].time : 0.0;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    led.sup_phi_h1_sq =
        std::max(led.sup_phi_h1_sq, r.phi_h1_norm * r.phi_h1_norm);
    led.sup_psi_l1 = std::max(led.sup_psi_l1, r.psi_l1_norm);
    led.sup_beta_sigma_l2_sq =
        std::max(led.sup_beta_sigma_l2_sq,
                 params.beta * r.sigma_l2_norm * r.sigma_l2_norm);
    led.sup_u_x_sq = std::max(led.sup_u_x_sq, r.u_h1_norm * r.u_h1_norm);
    if (i + 1 < records.size()) {
      led.int_mu_h1_sq += dt * r.mu_h1_norm * r.mu_h1_norm;
      led.int_sigma_h1_sq += dt * r.sigma_h1_norm * r.sigma_h1_norm;
    }
  }
  led.lhs = led.sup_phi_h1_sq + led.sup_psi_l1 + led.sup_beta_sigma_l2_sq +
            led.sup_u_x_sq + led.int_mu_h1_sq + led.int_sigma_h1_sq;
  led.rhs_base = 1.0 + params.beta * sigma0_l2_norm * sigma0_l2_norm;
  led.ratio = led.lhs / led.rhs_base;
  led.finite = std::isfinite(led.lhs) && std::isfinite(led.ratio);
  return led;
}

inline DiagnosticsRecord make_record(const Grid& grid,
                                     const ModelParams& params,
                                     const NormWorkspace& ws,
                                     const FieldState& state,
                                     int newton_iters, int linear_iters) {
  DiagnosticsRecord r;
  r.time = state.time;
  const auto parts = total_energy(grid, params, state);
  r.ginzburg_landau_part = parts.ginzburg_landau;
  r.nutrient_part = parts.nutrient;
  r.elastic_part = parts.elastic;
  r.total_energy = parts.total;
  r.psi_l1_norm = parts.psi_l1;

  auto mphi = ws.mass.multiply(state.phi);
  double mass = 0.0;
  for (size_t i = 0; i < mphi.size(); ++i) mass += mphi[i];
  r.mass = mass;

  r.sigma_min = *std::min_element(state.sigma.begin(), state.sigma.end());
  r.sigma_max = *std::max_element(state.sigma.begin(), state.sigma.end());
  r.sigma_l2_norm = l2_norm(ws, state.sigma);
  r.sigma_h1_norm = h1_norm(ws, state.sigma);
  r.phi_h1_norm = h1_norm(ws, state.phi);
  r.mu_h1_norm = h1_norm(ws, state.mu);
  r.u_h1_norm = h1_norm_vector(ws, state.u);
  r.grad_mu_norm = h1_seminorm(ws, state.mu);
  r.newton_iters = newton_iters;
  r.linear_iters = linear_iters;
  return r;
}

}  // namespace mechanochem
