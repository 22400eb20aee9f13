#pragma once

#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mechanochem/diagnostics.hpp"
#include "mechanochem/grid.hpp"
#include "mechanochem/state.hpp"

namespace mechanochem {

// 17 significant digits, enough to round-trip a double exactly.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ASCII legacy VTK structured grid with phi, mu, sigma point scalars and
// the displacement vector (z = 0).
inline void write_vtk(const Grid& grid, const FieldState& state,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_vtk: cannot open " + path);
  const int n = grid.n_nodes();
  out << "# vtk DataFile Version 3.0\n";
  out << "mechanochem fields t=" << fmt17(state.time) << "\n";
  out << "ASCII\n";
  out << "DATASET STRUCTURED_GRID\n";
  out << "DIMENSIONS " << grid.nx + 1 << " " << grid.ny + 1 << " 1\n";
  out << "POINTS " << n << " double\n";
  for (int i = 0; i < n; ++i)
    out << fmt17(grid.node_coords[i].x) << " " << fmt17(grid.node_coords[i].y)
        << " 0\n";
  out << "POINT_DATA " << n << "\n";
  auto scalars = [&](const char* name, std::span<const double> field) {
    out << "SCALARS " << name << " double 1\n";
    out << "LOOKUP_TABLE default\n";
    for (int i = 0; i < n; ++i) out << fmt17(field[i]) << "\n";
  };
  scalars("phi", state.phi);
  scalars("mu", state.mu);
  scalars("sigma", state.sigma);
  out << "VECTORS displacement double\n";
  for (int i = 0; i < n; ++i)
    out << fmt17(state.u[2 * i]) << " " << fmt17(state.u[2 * i + 1]) << " 0\n";
  if (!out) throw std::runtime_error("write_vtk: write failed for " + path);
}

inline void write_diagnostics_csv(std::span<const DiagnosticsRecord> records,
                                  const std::string& path) {
  if (records.empty())
    throw std::invalid_argument("write_diagnostics_csv: no records");
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("write_diagnostics_csv: cannot open " + path);
  out << diagnostics_csv_header() << "\n";
  for (const auto& r : records) {
    out << fmt17(r.time) << "," << fmt17(r.total_energy) << ","
        << fmt17(r.ginzburg_landau_part) << "," << fmt17(r.nutrient_part)
        << "," << fmt17(r.elastic_part) << "," << fmt17(r.mass) << ","
        << fmt17(r.sigma_min) << "," << fmt17(r.sigma_max) << ","
        << fmt17(r.sigma_l2_norm) << "," << fmt17(r.sigma_h1_norm) << ","
        << fmt17(r.phi_h1_norm) << "," << fmt17(r.psi_l1_norm) << ","
        << fmt17(r.mu_h1_norm) << "," << fmt17(r.u_h1_norm) << ","
        << fmt17(r.grad_mu_norm) << "," << r.newton_iters << ","
        << r.linear_iters << "\n";
  }
  if (!out)
    throw std::runtime_error("write_diagnostics_csv: write failed for " +
                             path);
}

}  // namespace mechanochem
