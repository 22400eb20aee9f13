#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mechanochem/elasticity.hpp"
#include "mechanochem/materials.hpp"
#include "mechanochem/tensor.hpp"

namespace mechanochem {

// All nodal unknowns at one time level plus the cached 2x2-point strain of u.
struct FieldState {
  double time = 0.0;
  std::vector<double> phi;
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> u;  // interleaved (x, y) per node
  GaussField<SymTensor2> strain;
};

// Every coefficient of the model. Validation messages cite the assumption
// labels the constraints come from.
struct ModelParams {
  double epsilon = 0.05;
  double chi = 0.0;
  double beta = 1.0;
  double kappa = 0.0;
  double sigma_B = 0.0;               // boundary nutrient datum (constant)
  std::vector<double> sigma_B_nodal;  // optional per-node override
  Vec2 traction_g{0.0, 0.0};

  PotentialSplit potential;
  MobilityLaw mobility = MobilityLaw::constant(1.0);
  ElasticLaw elastic;
  SourceLaw sources;

  // Solver knobs. Newton targets newton_tol and accepts newton_accept_tol
  // on stagnation; both sit far below the time-discretisation error.
  double newton_tol = 1e-13;
  double newton_accept_tol = 1e-10;
  int newton_max_iter = 50;
  double cg_tol = 1e-12;

  double sigma_B_max() const {
    double m = sigma_B;
    for (double v : sigma_B_nodal) m = std::max(m, v);
    return m;
  }

  double sigma_B_at(int node) const {
    return sigma_B_nodal.empty() ? sigma_B : sigma_B_nodal[node];
  }

  // M = max(||sigma_c||_inf, ||sigma_B||_inf), the nutrient bound.
  double truncation_M() const {
    return std::max(sigma_B_max(), sources.sigma_c_max());
  }

  void validate() const {
    if (!(epsilon > 0.0))
      throw std::invalid_argument("(A1): epsilon must be a positive constant");
    if (!(beta >= 0.0) || !(kappa >= 0.0) || !(chi >= 0.0))
      throw std::invalid_argument(
          "(A1): beta, kappa, chi must be non-negative");
    if (beta == 0.0 && sources.supply_B == 0.0 && kappa == 0.0)
      throw std::invalid_argument("(A1): beta=0 requires B+kappa>0");
    if (!(sigma_B >= 0.0))
      throw std::invalid_argument("(A5): sigma_B must be non-negative");
    for (double v : sigma_B_nodal)
      if (!(v >= 0.0))
        throw std::invalid_argument("(A5): sigma_B must be non-negative");
    mobility.validate();
    elastic.validate();
    sources.validate();
  }

  // (A6) admissibility of the nutrient initial datum.
  void validate_sigma0(std::span<const double> sigma0) const {
    const double m = truncation_M();
    for (double v : sigma0) {
      if (!(v >= -1e-12) || !(v <= m + 1e-12))
        throw std::invalid_argument(
            "(A6): sigma0 must satisfy 0 <= sigma0 <= M = "
            "max(||sigma_c||,||sigma_B||)");
    }
  }
};

}  // namespace mechanochem
