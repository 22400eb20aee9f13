#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mechanochem/tensor.hpp"

namespace mechanochem {

// Double-well split psi = psi1 + psi2 with psi1 convex and psi2'' bounded.
// The quartic realization is psi1(s) = s^4 + 1, psi2(s) = -2 s^2, giving
// psi(s) = (s^2 - 1)^2.
struct PotentialSplit {
  enum class Kind { QUARTIC };
  Kind kind = Kind::QUARTIC;

  double psi(double s) const {
    const double t = s * s - 1.0;
    return t * t;
  }
  double psi1(double s) const { return s * s * s * s + 1.0; }
  double psi2(double s) const { return -2.0 * s * s; }
  double psi1_prime(double s) const { return 4.0 * s * s * s; }
  double psi1_second(double s) const { return 12.0 * s * s; }
  double psi2_prime(double s) const { return -4.0 * s; }
  double psi2_second_bound() const { return 4.0; }  // C1
};

struct PsiEval {
  double psi = 0.0;
  double psi1_prime = 0.0;
  double psi1_second = 0.0;
  double psi2_prime = 0.0;
};

inline PsiEval psi_eval(const PotentialSplit& split, double s) {
  return {split.psi(s), split.psi1_prime(s), split.psi1_second(s),
          split.psi2_prime(s)};
}

// Mobility with bounds C2 <= m <= C3. The stress-gated law decreases from
// C3 toward C2 as the stress magnitude grows.
struct MobilityLaw {
  enum class Kind { CONSTANT, STRESS_GATED };
  Kind kind = Kind::CONSTANT;
  double c2 = 1.0;
  double c3 = 1.0;

  static MobilityLaw constant(double m) {
    return {Kind::CONSTANT, m, m};
  }
  static MobilityLaw stress_gated(double c2, double c3) {
    return {Kind::STRESS_GATED, c2, c3};
  }

  void validate() const {
    if (!(c2 > 0.0) || !(c3 >= c2))
      throw std::invalid_argument(
          "(A3): mobility bounds require 0 < C2 <= C3");
  }

  double evaluate(double stress_frobenius) const {
    if (kind == Kind::CONSTANT) return c2;
    return c2 + (c3 - c2) / (1.0 + stress_frobenius * stress_frobenius);
  }
};

// Constant isotropic elasticity tensor with Vegard eigenstrain
// Ebar(s) = Ehat + Estar * s.
struct ElasticLaw {
  double lame_lambda = 0.0;
  double lame_mu = 0.5;
  SymTensor2 eigenstrain_offset;  // Ehat
  SymTensor2 eigenstrain_slope;   // Estar

  void validate() const {
    if (!(lame_mu > 0.0) || !(lame_lambda + lame_mu > 0.0))
      throw std::invalid_argument(
          "(A4): elasticity requires lame_mu > 0 and lame_lambda + lame_mu > "
          "0");
  }

  SymTensor2 apply_C(SymTensor2 e) const {
    const double tr = lame_lambda * e.trace();
    return {tr + 2.0 * lame_mu * e.xx, tr + 2.0 * lame_mu * e.yy,
            2.0 * lame_mu * e.xy};
  }

  SymTensor2 eigenstrain(double s) const {
    return eigenstrain_offset + s * eigenstrain_slope;
  }

  // Smallest eigenvalue of C on symmetric tensors.
  double coercivity_C4() const {
    return std::min(2.0 * lame_mu, 2.0 * (lame_lambda + lame_mu));
  }

  // Largest eigenvalue of C on symmetric tensors.
  double operator_norm() const {
    return std::max(2.0 * lame_mu, 2.0 * (lame_lambda + lame_mu));
  }

  // Explicit constant for the growth bounds
  //   |W| + |W_phi| <= C5 (1 + s^2 + |E|^2),  |W_E| <= C5 (1 + |s| + |E|).
  double growth_C5() const {
    const double cop = operator_norm();
    const double eh = eigenstrain_offset.frobenius_norm();
    const double es = eigenstrain_slope.frobenius_norm();
    const double a = std::max({1.0, eh, es});
    const double c_we = cop * a * (1.0 + eh);
    const double c_w = 1.5 * cop * std::max({1.0, eh * eh, es * es});
    const double c_wphi = 3.0 * cop * es * std::max({1.0, eh, es});
    return std::max({c_we, c_w + c_wphi, 1.0});
  }
};

inline double elastic_energy_W(const ElasticLaw& law, double s,
                               SymTensor2 strain) {
  const SymTensor2 e = strain - law.eigenstrain(s);
  return 0.5 * ddot(e, law.apply_C(e));
}

inline double elastic_energy_W(const ElasticLaw& law, double s,
                               const Tensor2& strain) {
  return elastic_energy_W(law, s, require_symmetric(strain));
}

inline SymTensor2 stress_W_E(const ElasticLaw& law, double s,
                             SymTensor2 strain) {
  return law.apply_C(strain - law.eigenstrain(s));
}

inline SymTensor2 stress_W_E(const ElasticLaw& law, double s,
                             const Tensor2& strain) {
  return stress_W_E(law, s, require_symmetric(strain));
}

// Under Vegard's law and constant C: W_phi = -C(E(u) - Ebar(phi)) : Estar.
inline double w_phi(const ElasticLaw& law, double s, SymTensor2 strain) {
  return -ddot(stress_W_E(law, s, strain), law.eigenstrain_slope);
}

// Galerkin-level truncation g(s) = max(0, min(s, ||sigma_B||_inf,
// ||sigma_c||_inf)). Inactive along trajectories once the comparison
// principle holds.
inline double truncate_g(double s, double sB_max, double sc_max) {
  if (sB_max < 0.0 || sc_max < 0.0)
    throw std::invalid_argument("truncate_g: caps must be non-negative");
  return std::max(0.0, std::min({s, sB_max, sc_max}));
}

// Piecewise-constant-in-time rate with left-continuous lookup.
struct RateTable {
  std::vector<double> times{0.0};
  std::vector<double> values{0.0};

  static RateTable constant(double v) { return {{0.0}, {v}}; }

  double operator()(double t) const {
    size_t k = 0;
    for (size_t i = 1; i < times.size(); ++i) {
      if (times[i] < t) k = i;
    }
    return values[k];
  }

  double max_value() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
  }

  void validate(const char* name) const {
    if (times.empty() || times.size() != values.size())
      throw std::invalid_argument(std::string("rate table malformed: ") +
                                  name);
    for (size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1]))
        throw std::invalid_argument(
            std::string("rate table times must increase: ") + name);
    for (double v : values)
      if (!(v >= 0.0))
        throw std::invalid_argument(
            std::string("(A5): rates must be non-negative: ") + name);
  }
};

enum class BoundedFnKind { ONE, CLAMPED_LINEAR };

inline double bounded_f(BoundedFnKind kind, double s) {
  if (kind == BoundedFnKind::ONE) return 1.0;
  return std::clamp(0.5 * (1.0 + s), 0.0, 1.0);
}
inline double bounded_h(BoundedFnKind kind, double s) {
  if (kind == BoundedFnKind::ONE) return 1.0;
  return std::clamp(0.5 * (1.0 + s), 0.0, 1.0);
}
inline double bounded_k(BoundedFnKind kind, double s) {
  if (kind == BoundedFnKind::ONE) return 1.0;
  return std::clamp(s, -1.0, 1.0);
}

// Source data for U and S: proliferation/apoptosis/consumption rates,
// capillary supply, and the bounded shape functions f, h, k.
struct SourceLaw {
  RateTable lambda_p = RateTable::constant(0.0);
  RateTable lambda_a = RateTable::constant(0.0);
  RateTable lambda_c = RateTable::constant(0.0);
  double supply_B = 0.0;
  double sigma_c = 0.0;                // capillary concentration (constant)
  std::vector<double> sigma_c_nodal;   // optional nodal override
  BoundedFnKind f_kind = BoundedFnKind::CLAMPED_LINEAR;
  BoundedFnKind h_kind = BoundedFnKind::CLAMPED_LINEAR;
  BoundedFnKind k_kind = BoundedFnKind::CLAMPED_LINEAR;
  double lipschitz_L = 1.0;

  double f(double s) const { return bounded_f(f_kind, s); }
  double h(double s) const { return bounded_h(h_kind, s); }
  double k(double s) const { return bounded_k(k_kind, s); }

  double sigma_c_max() const {
    double m = sigma_c;
    for (double v : sigma_c_nodal) m = std::max(m, v);
    return m;
  }

  double sigma_c_at(int node) const {
    return sigma_c_nodal.empty() ? sigma_c : sigma_c_nodal[node];
  }

  void validate() const {
    lambda_p.validate("lambda_p");
    lambda_a.validate("lambda_a");
    lambda_c.validate("lambda_c");
    if (!(supply_B >= 0.0))
      throw std::invalid_argument("(A1): B must be non-negative");
    if (!(sigma_c >= 0.0))
      throw std::invalid_argument("(A5): sigma_c must be non-negative");
    for (double v : sigma_c_nodal)
      if (!(v >= 0.0))
        throw std::invalid_argument("(A5): sigma_c must be non-negative");
  }
};

// U = lambda_p f(phi) sigma / (1 + |W_E|) - lambda_a k(phi), Frobenius
// stress magnitude.
inline double source_U(const SourceLaw& srcs, const ElasticLaw& law, double t,
                       double phi, double sigma, SymTensor2 strain) {
  const double stress = stress_W_E(law, phi, strain).frobenius_norm();
  return srcs.lambda_p(t) * srcs.f(phi) * sigma / (1.0 + stress) -
         srcs.lambda_a(t) * srcs.k(phi);
}

// S = -lambda_c h(phi) sigma + B (sigma_c - sigma).
inline double source_S(const SourceLaw& srcs, double t, double phi,
                       double sigma) {
  return -srcs.lambda_c(t) * srcs.h(phi) * sigma +
         srcs.supply_B * (srcs.sigma_c - sigma);
}

}  // namespace mechanochem
