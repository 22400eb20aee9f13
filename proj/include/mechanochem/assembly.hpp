#pragma once

#include <functional>
#include <vector>

#include "mechanochem/grid.hpp"
#include "mechanochem/sparse.hpp"
#include "mechanochem/tensor.hpp"

namespace mechanochem {

// Values attached to the quadrature points of one rule, cell-major:
// index = cell * rule.size() + q.
template <typename T>
using GaussField = std::vector<T>;

inline Vec2 gauss_point_coords(const Grid& g, int cell,
                               const ElementQuadrature::Point& p) {
  const int ci = cell % g.nx, cj = cell / g.nx;
  return {(ci + 0.5 * (1.0 + p.xi)) * g.hx, (cj + 0.5 * (1.0 + p.eta)) * g.hy};
}

inline GaussField<Vec2> gauss_coords(const Grid& g,
                                     const ElementQuadrature& q) {
  GaussField<Vec2> out;
  out.reserve(static_cast<size_t>(g.n_cells()) * q.size());
  for (int c = 0; c < g.n_cells(); ++c)
    for (const auto& p : q.points) out.push_back(gauss_point_coords(g, c, p));
  return out;
}

inline GaussField<double> interpolate_at_gauss(const Grid& g,
                                               const ElementQuadrature& q,
                                               std::span<const double> nodal) {
  GaussField<double> out(static_cast<size_t>(g.n_cells()) * q.size(), 0.0);
  for (int c = 0; c < g.n_cells(); ++c) {
    const auto nodes = g.cell_nodes(c);
    for (int k = 0; k < q.size(); ++k) {
      double v = 0.0;
      for (int a = 0; a < 4; ++a)
        v += q.shape_values[k][a] * nodal[nodes[a]];
      out[static_cast<size_t>(c) * q.size() + k] = v;
    }
  }
  return out;
}

inline GaussField<Vec2> gradient_at_gauss(const Grid& g,
                                          const ElementQuadrature& q,
                                          std::span<const double> nodal) {
  GaussField<Vec2> out(static_cast<size_t>(g.n_cells()) * q.size());
  const double sx = 2.0 / g.hx, sy = 2.0 / g.hy;
  for (int c = 0; c < g.n_cells(); ++c) {
    const auto nodes = g.cell_nodes(c);
    for (int k = 0; k < q.size(); ++k) {
      Vec2 grad{0.0, 0.0};
      for (int a = 0; a < 4; ++a) {
        grad.x += sx * q.shape_gradients[k][a].x * nodal[nodes[a]];
        grad.y += sy * q.shape_gradients[k][a].y * nodal[nodes[a]];
      }
      out[static_cast<size_t>(c) * q.size() + k] = grad;
    }
  }
  return out;
}

inline double integrate_gauss(const Grid& g, const ElementQuadrature& q,
                              std::span<const double> values) {
  const double jac = 0.25 * g.hx * g.hy;
  double s = 0.0;
  for (int c = 0; c < g.n_cells(); ++c)
    for (int k = 0; k < q.size(); ++k)
      s += q.points[k].weight * jac *
           values[static_cast<size_t>(c) * q.size() + k];
  return s;
}

// Load vector b_i = \int f N_i with f given at the rule's points.
inline std::vector<double> load_from_gauss(const Grid& g,
                                           const ElementQuadrature& q,
                                           std::span<const double> values) {
  std::vector<double> b(g.n_nodes(), 0.0);
  const double jac = 0.25 * g.hx * g.hy;
  for (int c = 0; c < g.n_cells(); ++c) {
    const auto nodes = g.cell_nodes(c);
    for (int k = 0; k < q.size(); ++k) {
      const double wf =
          q.points[k].weight * jac * values[static_cast<size_t>(c) * q.size() + k];
      for (int a = 0; a < 4; ++a) b[nodes[a]] += wf * q.shape_values[k][a];
    }
  }
  return b;
}

inline SparseMatrix scalar_mass_matrix(const Grid& g) {
  const auto q = element_quadrature(2);
  const double jac = 0.25 * g.hx * g.hy;
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(g.n_cells()) * 16);
  for (int c = 0; c < g.n_cells(); ++c) {
    const auto nodes = g.cell_nodes(c);
    double m[4][4] = {};
    for (int k = 0; k < q.size(); ++k)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          m[a][b] += q.points[k].weight * jac * q.shape_values[k][a] *
                     q.shape_values[k][b];
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        trip.push_back({nodes[a], nodes[b], m[a][b]});
  }
  return SparseMatrix::from_triplets(g.n_nodes(), g.n_nodes(),
                                     std::move(trip));
}

// Stiffness \int c grad N_i . grad N_j, with optional coefficient given at
// the 2x2 points (cell-major); null means c = 1.
inline SparseMatrix scalar_stiffness_matrix(
    const Grid& g, std::span<const double> coeff = {}) {
  const auto q = element_quadrature(2);
  const double jac = 0.25 * g.hx * g.hy;
  const double sx = 2.0 / g.hx, sy = 2.0 / g.hy;
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(g.n_cells()) * 16);
  for (int c = 0; c < g.n_cells(); ++c) {
    const auto nodes = g.cell_nodes(c);
    double m[4][4] = {};
    for (int k = 0; k < q.size(); ++k) {
      const double cf =
          coeff.empty() ? 1.0 : coeff[static_cast<size_t>(c) * q.size() + k];
      for (int a = 0; a < 4; ++a) {
        const Vec2 ga{sx * q.shape_gradients[k][a].x,
                      sy * q.shape_gradients[k][a].y};
        for (int b = 0; b < 4; ++b) {
          const Vec2 gb{sx * q.shape_gradients[k][b].x,
                        sy * q.shape_gradients[k][b].y};
          m[a][b] += q.points[k].weight * jac * cf * dot(ga, gb);
        }
      }
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        trip.push_back({nodes[a], nodes[b], m[a][b]});
  }
  return SparseMatrix::from_triplets(g.n_nodes(), g.n_nodes(),
                                     std::move(trip));
}

// Weighted mass \int c N_i N_j with the coefficient at the given rule's
// points. Used for the psi_1'' Newton block.
inline SparseMatrix weighted_mass_matrix(const Grid& g,
                                         const ElementQuadrature& q,
                                         std::span<const double> coeff) {
  const double jac = 0.25 * g.hx * g.hy;
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(g.n_cells()) * 16);
  for (int c = 0; c < g.n_cells(); ++c) {
    const auto nodes = g.cell_nodes(c);
    double m[4][4] = {};
    for (int k = 0; k < q.size(); ++k) {
      const double cf = coeff[static_cast<size_t>(c) * q.size() + k];
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          m[a][b] += q.points[k].weight * jac * cf * q.shape_values[k][a] *
                     q.shape_values[k][b];
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        trip.push_back({nodes[a], nodes[b], m[a][b]});
  }
  return SparseMatrix::from_triplets(g.n_nodes(), g.n_nodes(),
                                     std::move(trip));
}

}  // namespace mechanochem
