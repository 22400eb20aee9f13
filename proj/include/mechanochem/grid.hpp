#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mechanochem/sparse.hpp"
#include "mechanochem/tensor.hpp"

namespace mechanochem {

enum class RectEdge : unsigned { Left = 1, Right = 2, Bottom = 4, Top = 8 };

// Union of rectangle edges, used to select the Dirichlet part of the boundary.
struct EdgeSet {
  unsigned bits = 0;

  EdgeSet() = default;
  EdgeSet(std::initializer_list<RectEdge> edges) {
    for (auto e : edges) bits |= static_cast<unsigned>(e);
  }
  bool contains(RectEdge e) const {
    return (bits & static_cast<unsigned>(e)) != 0;
  }
  bool empty() const { return bits == 0; }
  static EdgeSet all() { return {RectEdge::Left, RectEdge::Right,
                                 RectEdge::Bottom, RectEdge::Top}; }
};

enum class FaceTag { DIRICHLET_D, NEUMANN_N };

// One boundary cell-edge with its two endpoint nodes (a before b in tangent
// direction) and the whole-rectangle edge it belongs to.
struct BoundaryFace {
  int node_a = 0;
  int node_b = 0;
  RectEdge edge = RectEdge::Left;
  FaceTag tag = FaceTag::NEUMANN_N;
  double length = 0.0;
};

// Q1 basis on the reference square [-1,1]^2, node order SW, SE, NE, NW.
inline std::array<double, 4> q1_shape(double xi, double eta) {
  return {0.25 * (1 - xi) * (1 - eta), 0.25 * (1 + xi) * (1 - eta),
          0.25 * (1 + xi) * (1 + eta), 0.25 * (1 - xi) * (1 + eta)};
}

inline std::array<Vec2, 4> q1_shape_grad(double xi, double eta) {
  return {Vec2{-0.25 * (1 - eta), -0.25 * (1 - xi)},
          Vec2{0.25 * (1 - eta), -0.25 * (1 + xi)},
          Vec2{0.25 * (1 + eta), 0.25 * (1 + xi)},
          Vec2{-0.25 * (1 + eta), 0.25 * (1 - xi)}};
}

// Tensor-product Gauss rule on the reference square with Q1 basis data
// tabulated at the points. n = 2 is the assembly default; higher orders are
// used where the integrand is not bilinear.
struct ElementQuadrature {
  struct Point {
    double xi = 0.0;
    double eta = 0.0;
    double weight = 0.0;  // reference weight, sums to 4 over the rule
  };
  std::vector<Point> points;
  std::vector<std::array<double, 4>> shape_values;
  std::vector<std::array<Vec2, 4>> shape_gradients;  // reference gradients

  int size() const { return static_cast<int>(points.size()); }
};

inline void gauss_rule_1d(int n, std::vector<double>& x,
                          std::vector<double>& w) {
  switch (n) {
    case 1:
      x = {0.0};
      w = {2.0};
      break;
    case 2:
      x = {-1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0)};
      w = {1.0, 1.0};
      break;
    case 3:
      x = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
      w = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
      break;
    case 4: {
      const double a = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
      const double b = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
      const double wa = (18.0 + std::sqrt(30.0)) / 36.0;
      const double wb = (18.0 - std::sqrt(30.0)) / 36.0;
      x = {-b, -a, a, b};
      w = {wb, wa, wa, wb};
      break;
    }
    default:
      throw std::invalid_argument("gauss_rule_1d: unsupported order");
  }
}

inline ElementQuadrature element_quadrature(int n = 2) {
  std::vector<double> x, w;
  gauss_rule_1d(n, x, w);
  ElementQuadrature q;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      q.points.push_back({x[i], x[j], w[i] * w[j]});
      q.shape_values.push_back(q1_shape(x[i], x[j]));
      q.shape_gradients.push_back(q1_shape_grad(x[i], x[j]));
    }
  }
  return q;
}

// Structured rectangular Q1 mesh on [0,lx] x [0,ly] with tagged boundary
// faces. Immutable after construction.
class Grid {
 public:
  int nx = 0, ny = 0;
  double lx = 0.0, ly = 0.0;
  double hx = 0.0, hy = 0.0;
  std::vector<Vec2> node_coords;
  std::vector<BoundaryFace> boundary_faces;  // Robin condition lives on all

  int n_nodes() const { return (nx + 1) * (ny + 1); }
  int n_cells() const { return nx * ny; }
  int node_index(int i, int j) const { return j * (nx + 1) + i; }

  // Nodes of cell (ci, cj) in local order SW, SE, NE, NW.
  std::array<int, 4> cell_nodes(int ci, int cj) const {
    const int sw = node_index(ci, cj);
    return {sw, sw + 1, sw + nx + 2, sw + nx + 1};
  }
  std::array<int, 4> cell_nodes(int cell) const {
    return cell_nodes(cell % nx, cell / nx);
  }

  Vec2 cell_center(int cell) const {
    const int ci = cell % nx, cj = cell / nx;
    return {(ci + 0.5) * hx, (cj + 0.5) * hy};
  }

  bool square_cells() const {
    return std::abs(hx - hy) <= 1e-14 * (hx + hy);
  }

  bool has_dirichlet() const {
    for (const auto& f : boundary_faces)
      if (f.tag == FaceTag::DIRICHLET_D) return true;
    return false;
  }
};

inline Grid build_grid(int nx, int ny, double lx, double ly,
                       EdgeSet dirichlet_spec) {
  if (nx < 1 || ny < 1)
    throw std::invalid_argument("build_grid: cell counts must be positive");
  if (lx <= 0.0 || ly <= 0.0)
    throw std::invalid_argument("build_grid: domain lengths must be positive");
  if (dirichlet_spec.empty())
    throw std::invalid_argument("Γ_D must have positive measure");

  Grid g;
  g.nx = nx;
  g.ny = ny;
  g.lx = lx;
  g.ly = ly;
  g.hx = lx / nx;
  g.hy = ly / ny;
  g.node_coords.reserve(g.n_nodes());
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      g.node_coords.push_back({i * g.hx, j * g.hy});

  auto tag_for = [&](RectEdge e) {
    return dirichlet_spec.contains(e) ? FaceTag::DIRICHLET_D
                                      : FaceTag::NEUMANN_N;
  };
  for (int i = 0; i < nx; ++i) {
    g.boundary_faces.push_back({g.node_index(i, 0), g.node_index(i + 1, 0),
                                RectEdge::Bottom, tag_for(RectEdge::Bottom),
                                g.hx});
    g.boundary_faces.push_back({g.node_index(i, ny), g.node_index(i + 1, ny),
                                RectEdge::Top, tag_for(RectEdge::Top), g.hx});
  }
  for (int j = 0; j < ny; ++j) {
    g.boundary_faces.push_back({g.node_index(0, j), g.node_index(0, j + 1),
                                RectEdge::Left, tag_for(RectEdge::Left),
                                g.hy});
    g.boundary_faces.push_back({g.node_index(nx, j), g.node_index(nx, j + 1),
                                RectEdge::Right, tag_for(RectEdge::Right),
                                g.hy});
  }
  return g;
}

// Constrained vector-displacement DOF indices (2 per Γ_D node), sorted.
inline std::vector<int> dirichlet_dofs(const Grid& grid) {
  std::vector<char> on_gd(grid.n_nodes(), 0);
  for (const auto& f : grid.boundary_faces) {
    if (f.tag == FaceTag::DIRICHLET_D) {
      on_gd[f.node_a] = 1;
      on_gd[f.node_b] = 1;
    }
  }
  std::vector<int> dofs;
  for (int n = 0; n < grid.n_nodes(); ++n) {
    if (on_gd[n]) {
      dofs.push_back(2 * n);
      dofs.push_back(2 * n + 1);
    }
  }
  return dofs;
}

enum class BoundarySubset { ALL_GAMMA, GAMMA_N };

struct BoundaryMassTerms {
  SparseMatrix mass;                 // consistent face mass on the subset
  std::vector<double> face_weights;  // lumped face-length weights per node
};

// Boundary mass machinery for Robin/Neumann terms, per-face two-point Gauss.
inline BoundaryMassTerms boundary_mass_terms(const Grid& grid,
                                             BoundarySubset subset) {
  const int n = grid.n_nodes();
  std::vector<Triplet> trip;
  std::vector<double> weights(n, 0.0);
  std::vector<double> x, w;
  gauss_rule_1d(2, x, w);
  for (const auto& f : grid.boundary_faces) {
    if (subset == BoundarySubset::GAMMA_N && f.tag != FaceTag::NEUMANN_N)
      continue;
    const double jac = 0.5 * f.length;
    double m[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    for (size_t q = 0; q < x.size(); ++q) {
      const double na = 0.5 * (1.0 - x[q]);
      const double nb = 0.5 * (1.0 + x[q]);
      m[0][0] += w[q] * jac * na * na;
      m[0][1] += w[q] * jac * na * nb;
      m[1][0] += w[q] * jac * nb * na;
      m[1][1] += w[q] * jac * nb * nb;
    }
    const int id[2] = {f.node_a, f.node_b};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) trip.push_back({id[a], id[b], m[a][b]});
      weights[id[a]] += 0.5 * f.length;
    }
  }
  return {SparseMatrix::from_triplets(n, n, std::move(trip)),
          std::move(weights)};
}

}  // namespace mechanochem
