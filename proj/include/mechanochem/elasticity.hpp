#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "mechanochem/assembly.hpp"
#include "mechanochem/grid.hpp"
#include "mechanochem/materials.hpp"
#include "mechanochem/sparse.hpp"

namespace mechanochem {

struct SolveError : std::runtime_error {
  SolveReport report;
  SolveError(const std::string& what, SolveReport rep)
      : std::runtime_error(what), report(rep) {}
};

// Strain of the vector basis function (node a, component c) at one
// reference point; sx, sy are the reference-to-physical gradient scales.
inline SymTensor2 basis_strain(const Vec2& ref_grad, int component, double sx,
                               double sy) {
  const Vec2 grad{sx * ref_grad.x, sy * ref_grad.y};
  if (component == 0) return {grad.x, 0.0, 0.5 * grad.y};
  return {0.0, grad.y, 0.5 * grad.x};
}

// Quasi-static elasticity with Dirichlet rows eliminated. The eigenstrain
// load is affine in nodal phi under Vegard's law; the phi-linear part is
// kept as a coupling matrix.
struct ElasticitySystem {
  int n_nodes = 0;
  ElasticLaw law;
  std::vector<int> free_dofs;      // reduced -> full dof index
  std::vector<int> full_to_free;   // -1 on constrained dofs
  SparseMatrix stiffness;          // reduced, SPD by Korn
  std::vector<double> load_base;        // traction load, full size 2n
  std::vector<double> eigenstrain_base; // Ehat part of the eigenstrain load
  SparseMatrix eigenstrain_coupling;    // 2n x n, phi-linear eigenstrain load
  SparseMatrix scalar_mass;             // for the body-force hook
  std::vector<double> body_force_hook;  // nodal (2n) force density; tests only
  double cg_tol = 1e-10;
};

inline ElasticitySystem assemble_elasticity(
    const Grid& grid, const ElasticLaw& law,
    const std::function<Vec2(Vec2)>& traction_g) {
  law.validate();
  if (!grid.has_dirichlet())
    throw std::invalid_argument("Korn violation: check Γ_D");

  const int n = grid.n_nodes();
  const int ndof = 2 * n;
  const auto q = element_quadrature(2);
  const double jac = 0.25 * grid.hx * grid.hy;
  const double sx = 2.0 / grid.hx, sy = 2.0 / grid.hy;

  ElasticitySystem sys;
  sys.n_nodes = n;
  sys.law = law;
  sys.scalar_mass = scalar_mass_matrix(grid);

  const auto constrained = dirichlet_dofs(grid);
  std::vector<char> is_constrained(ndof, 0);
  for (int d : constrained) is_constrained[d] = 1;
  sys.full_to_free.assign(ndof, -1);
  for (int d = 0; d < ndof; ++d) {
    if (!is_constrained[d]) {
      sys.full_to_free[d] = static_cast<int>(sys.free_dofs.size());
      sys.free_dofs.push_back(d);
    }
  }

  std::vector<Triplet> ktrip;
  std::vector<Triplet> ctrip;
  ktrip.reserve(static_cast<size_t>(grid.n_cells()) * 64);
  ctrip.reserve(static_cast<size_t>(grid.n_cells()) * 32);
  sys.eigenstrain_base.assign(ndof, 0.0);

  const SymTensor2 c_ehat = law.apply_C(law.eigenstrain_offset);
  const SymTensor2 c_estar = law.apply_C(law.eigenstrain_slope);

  for (int cell = 0; cell < grid.n_cells(); ++cell) {
    const auto nodes = grid.cell_nodes(cell);
    double ke[8][8] = {};
    double ce[8][4] = {};
    double be[8] = {};
    for (int k = 0; k < q.size(); ++k) {
      const double w = q.points[k].weight * jac;
      SymTensor2 eb[8];
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < 2; ++c)
          eb[2 * a + c] = basis_strain(q.shape_gradients[k][a], c, sx, sy);
      for (int i = 0; i < 8; ++i) {
        const SymTensor2 cei = sys.law.apply_C(eb[i]);
        for (int j = 0; j < 8; ++j) ke[i][j] += w * ddot(cei, eb[j]);
        be[i] += w * ddot(c_ehat, eb[i]);
        for (int j = 0; j < 4; ++j)
          ce[i][j] += w * q.shape_values[k][j] * ddot(c_estar, eb[i]);
      }
    }
    for (int i = 0; i < 8; ++i) {
      const int gi = 2 * nodes[i / 2] + (i % 2);
      sys.eigenstrain_base[gi] += be[i];
      for (int j = 0; j < 8; ++j) {
        const int gj = 2 * nodes[j / 2] + (j % 2);
        if (!is_constrained[gi] && !is_constrained[gj])
          ktrip.push_back(
              {sys.full_to_free[gi], sys.full_to_free[gj], ke[i][j]});
      }
      for (int j = 0; j < 4; ++j)
        ctrip.push_back({gi, nodes[j], ce[i][j]});
    }
  }
  const int nfree = static_cast<int>(sys.free_dofs.size());
  sys.stiffness = SparseMatrix::from_triplets(nfree, nfree, std::move(ktrip));
  sys.eigenstrain_coupling =
      SparseMatrix::from_triplets(ndof, n, std::move(ctrip));

  if (!randomized_symmetry_check(sys.stiffness))
    throw std::runtime_error("Korn violation: check Γ_D");
  for (int i = 0; i < nfree; ++i)
    if (!(sys.stiffness.entry(i, i) > 0.0))
      throw std::runtime_error("Korn violation: check Γ_D");

  // Traction load over Gamma_N, per-face two-point Gauss.
  sys.load_base.assign(ndof, 0.0);
  std::vector<double> gx, gw;
  gauss_rule_1d(2, gx, gw);
  for (const auto& f : grid.boundary_faces) {
    if (f.tag != FaceTag::NEUMANN_N) continue;
    const Vec2 pa = grid.node_coords[f.node_a];
    const Vec2 pb = grid.node_coords[f.node_b];
    for (size_t k = 0; k < gx.size(); ++k) {
      const double na = 0.5 * (1.0 - gx[k]);
      const double nb = 0.5 * (1.0 + gx[k]);
      const Vec2 x{na * pa.x + nb * pb.x, na * pa.y + nb * pb.y};
      const Vec2 g = traction_g(x);
      const double w = gw[k] * 0.5 * f.length;
      sys.load_base[2 * f.node_a] += w * na * g.x;
      sys.load_base[2 * f.node_a + 1] += w * na * g.y;
      sys.load_base[2 * f.node_b] += w * nb * g.x;
      sys.load_base[2 * f.node_b + 1] += w * nb * g.y;
    }
  }
  return sys;
}

inline ElasticitySystem assemble_elasticity(const Grid& grid,
                                            const ElasticLaw& law,
                                            Vec2 constant_g = {0.0, 0.0}) {
  return assemble_elasticity(grid, law, [constant_g](Vec2) {
    return constant_g;
  });
}

inline std::pair<std::vector<double>, SolveReport> solve_displacement(
    const ElasticitySystem& sys, std::span<const double> phi) {
  const int ndof = 2 * sys.n_nodes;
  std::vector<double> b = sys.load_base;
  for (int i = 0; i < ndof; ++i) b[i] += sys.eigenstrain_base[i];
  {
    std::vector<double> bphi(ndof, 0.0);
    sys.eigenstrain_coupling.multiply(phi, bphi);
    for (int i = 0; i < ndof; ++i) b[i] += bphi[i];
  }
  if (!sys.body_force_hook.empty()) {
    std::vector<double> fx(sys.n_nodes), fy(sys.n_nodes);
    for (int i = 0; i < sys.n_nodes; ++i) {
      fx[i] = sys.body_force_hook[2 * i];
      fy[i] = sys.body_force_hook[2 * i + 1];
    }
    const auto mfx = sys.scalar_mass.multiply(fx);
    const auto mfy = sys.scalar_mass.multiply(fy);
    for (int i = 0; i < sys.n_nodes; ++i) {
      b[2 * i] += mfx[i];
      b[2 * i + 1] += mfy[i];
    }
  }

  std::vector<double> br(sys.free_dofs.size());
  for (size_t r = 0; r < sys.free_dofs.size(); ++r)
    br[r] = b[sys.free_dofs[r]];

  auto [xr, rep] = cg_solve(sys.stiffness, br, sys.cg_tol,
                            10 * static_cast<int>(br.size()),
                            Preconditioner::JACOBI);
  if (!rep.converged)
    throw SolveError("solve_displacement: CG did not converge", rep);

  std::vector<double> u(ndof, 0.0);
  for (size_t r = 0; r < sys.free_dofs.size(); ++r)
    u[sys.free_dofs[r]] = xr[r];
  return {std::move(u), rep};
}

// Residual of the discrete elasticity weak form at (phi, u) on the free
// DOFs (admissible test functions vanish on Gamma_D).
inline std::vector<double> elasticity_residual(const ElasticitySystem& sys,
                                               std::span<const double> phi,
                                               std::span<const double> u) {
  std::vector<double> b = sys.load_base;
  for (size_t i = 0; i < b.size(); ++i) b[i] += sys.eigenstrain_base[i];
  std::vector<double> bphi(b.size(), 0.0);
  sys.eigenstrain_coupling.multiply(phi, bphi);
  for (size_t i = 0; i < b.size(); ++i) b[i] += bphi[i];

  std::vector<double> ur(sys.free_dofs.size());
  for (size_t r = 0; r < sys.free_dofs.size(); ++r)
    ur[r] = u[sys.free_dofs[r]];
  auto ku = sys.stiffness.multiply(ur);
  std::vector<double> res(sys.free_dofs.size());
  for (size_t r = 0; r < sys.free_dofs.size(); ++r)
    res[r] = ku[r] - b[sys.free_dofs[r]];
  return res;
}

// Symmetric strain at the quadrature points of `rule` from interleaved
// nodal displacements.
inline GaussField<SymTensor2> strain_at_gauss(const Grid& grid,
                                              const ElementQuadrature& rule,
                                              std::span<const double> u) {
  GaussField<SymTensor2> out(static_cast<size_t>(grid.n_cells()) *
                             rule.size());
  const double sx = 2.0 / grid.hx, sy = 2.0 / grid.hy;
  for (int c = 0; c < grid.n_cells(); ++c) {
    const auto nodes = grid.cell_nodes(c);
    for (int k = 0; k < rule.size(); ++k) {
      double ux_x = 0.0, ux_y = 0.0, uy_x = 0.0, uy_y = 0.0;
      for (int a = 0; a < 4; ++a) {
        const double gx = sx * rule.shape_gradients[k][a].x;
        const double gy = sy * rule.shape_gradients[k][a].y;
        ux_x += gx * u[2 * nodes[a]];
        ux_y += gy * u[2 * nodes[a]];
        uy_x += gx * u[2 * nodes[a] + 1];
        uy_y += gy * u[2 * nodes[a] + 1];
      }
      out[static_cast<size_t>(c) * rule.size() + k] =
          SymTensor2{ux_x, uy_y, 0.5 * (ux_y + uy_x)};
    }
  }
  return out;
}

// Default 2x2 strain field, cached per step by the coupled stepper.
inline GaussField<SymTensor2> strain_field(const Grid& grid,
                                           std::span<const double> u) {
  return strain_at_gauss(grid, element_quadrature(2), u);
}

}  // namespace mechanochem
