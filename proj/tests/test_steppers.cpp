#include <catch_amalgamated.hpp>

#include <random>

#include "mechanochem/diagnostics.hpp"
#include "mechanochem/steppers.hpp"

using namespace mechanochem;

namespace {

std::vector<double> smooth_random_field(const Grid& g, uint64_t seed,
                                        double amp = 0.5) {
  // low-mode random combination, smooth on the grid scale
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  double c[3][3];
  for (auto& row : c)
    for (auto& v : row) v = d(rng);
  std::vector<double> f(g.n_nodes());
  for (int i = 0; i < g.n_nodes(); ++i) {
    const double x = g.node_coords[i].x / g.lx;
    const double y = g.node_coords[i].y / g.ly;
    double s = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        s += c[a][b] * std::cos(a * M_PI * x) * std::cos(b * M_PI * y);
    f[i] = amp * s;
  }
  return f;
}

ModelParams decoupled_params() {
  ModelParams p;
  p.epsilon = 0.1;
  p.chi = 0.0;
  p.beta = 1.0;
  p.kappa = 0.0;
  p.sigma_B = 1.0;
  p.sources.supply_B = 1.0;
  p.sources.sigma_c = 1.0;
  p.elastic.lame_mu = 0.5;
  return p;
}

// Independent evaluation of the discrete weak-form residuals of the
// Cahn-Hilliard step at (phi_new, mu_new), reassembled from scratch with
// its own quadrature tables.
struct WeakFormOracle {
  const Grid& g;
  const ModelParams& p;
  double dt;
  double t_new;
  std::vector<double> phi_old, sigma_new, u_new, sigma_old, u_old;

  // 3-point Gauss data, independent of ElementQuadrature
  static constexpr double gp3[3] = {-0.7745966692414834, 0.0,
                                    0.7745966692414834};
  static constexpr double gw3[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

  double shape(int a, double xi, double eta) const {
    const double sx = (a == 0 || a == 3) ? (1 - xi) : (1 + xi);
    const double sy = (a == 0 || a == 1) ? (1 - eta) : (1 + eta);
    return 0.25 * sx * sy;
  }
  Vec2 shape_grad(int a, double xi, double eta) const {
    const double gx = ((a == 0 || a == 3) ? -1.0 : 1.0) * 0.25 *
                      ((a == 0 || a == 1) ? (1 - eta) : (1 + eta));
    const double gy = ((a == 0 || a == 1) ? -1.0 : 1.0) * 0.25 *
                      ((a == 0 || a == 3) ? (1 - xi) : (1 + xi));
    return {gx * 2.0 / g.hx, gy * 2.0 / g.hy};
  }

  SymTensor2 strain_at(std::span<const double> u,
                       const std::array<int, 4>& nodes, double xi,
                       double eta) const {
    double uxx = 0, uxy = 0, uyx = 0, uyy = 0;
    for (int a = 0; a < 4; ++a) {
      const Vec2 gr = shape_grad(a, xi, eta);
      uxx += gr.x * u[2 * nodes[a]];
      uxy += gr.y * u[2 * nodes[a]];
      uyx += gr.x * u[2 * nodes[a] + 1];
      uyy += gr.y * u[2 * nodes[a] + 1];
    }
    return {uxx, uyy, 0.5 * (uxy + uyx)};
  }

  // residuals of (w:1) and (w:2) against every nodal basis function
  std::pair<std::vector<double>, std::vector<double>> residuals(
      std::span<const double> phi_new, std::span<const double> mu_new) const {
    std::vector<double> r1(g.n_nodes(), 0.0), r2(g.n_nodes(), 0.0);
    const double jac = 0.25 * g.hx * g.hy;
    for (int cj = 0; cj < g.ny; ++cj) {
      for (int ci = 0; ci < g.nx; ++ci) {
        const auto nodes = g.cell_nodes(ci, cj);
        for (int qj = 0; qj < 3; ++qj) {
          for (int qi = 0; qi < 3; ++qi) {
            const double xi = gp3[qi], eta = gp3[qj];
            const double w = gw3[qi] * gw3[qj] * jac;
            double phin = 0, phio = 0, mun = 0, sign = 0, sigo = 0;
            Vec2 gphi{0, 0}, gmu{0, 0};
            for (int a = 0; a < 4; ++a) {
              const double na = shape(a, xi, eta);
              const Vec2 gr = shape_grad(a, xi, eta);
              phin += na * phi_new[nodes[a]];
              phio += na * phi_old[nodes[a]];
              mun += na * mu_new[nodes[a]];
              sign += na * sigma_new[nodes[a]];
              sigo += na * sigma_old[nodes[a]];
              gphi = gphi + phi_new[nodes[a]] * gr;
              gmu = gmu + mu_new[nodes[a]] * gr;
            }
            const SymTensor2 strain_new = strain_at(u_new, nodes, xi, eta);
            const SymTensor2 strain_old = strain_at(u_old, nodes, xi, eta);
            double mob_stress = 0.0;
            if (p.mobility.kind == MobilityLaw::Kind::STRESS_GATED)
              mob_stress =
                  stress_W_E(p.elastic, phio, strain_old).frobenius_norm();
            const double mob = p.mobility.evaluate(mob_stress);
            const double usrc =
                source_U(p.sources, p.elastic, t_new, phio, sign, strain_new);
            const double psi_imp = p.potential.psi1_prime(phin);
            const double psi_exp = p.potential.psi2_prime(phio);
            const double wphi = w_phi(p.elastic, phin, strain_new);
            for (int a = 0; a < 4; ++a) {
              const double na = shape(a, xi, eta);
              const Vec2 gr = shape_grad(a, xi, eta);
              r1[nodes[a]] += w * ((phin - phio) * na +
                                   dt * mob * dot(gmu, gr) - dt * usrc * na);
              r2[nodes[a]] +=
                  w * (mun * na - p.epsilon * dot(gphi, gr) -
                       (psi_imp + psi_exp) * na / p.epsilon +
                       p.chi * sign * na - wphi * na);
            }
          }
        }
      }
    }
    return {r1, r2};
  }
};

}  // namespace

TEST_CASE("mollifier preserves constants", "[steppers]") {
  const Grid g = build_grid(8, 8, 1.0, 1.0, {RectEdge::Left});
  std::vector<double> c(g.n_nodes(), 0.37);
  for (double delta : {1.0, 1e-2}) {
    const auto m = mollify_initial(g, c, delta);
    for (double v : m) CHECK(v == Catch::Approx(0.37).margin(1e-11));
  }
  CHECK_THROWS_AS(mollify_initial(g, c, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(mollify_initial(g, c, 1.5), std::invalid_argument);
}

TEST_CASE("mollifier contracts the L2 norm and the gradient", "[steppers]") {
  const Grid g = build_grid(12, 12, 1.0, 1.0, {RectEdge::Left});
  const auto ws = make_norm_workspace(g);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> phi0(g.n_nodes());
    for (auto& v : phi0) v = d(rng);
    for (double delta : {1.0, 1e-2}) {
      const auto m = mollify_initial(g, phi0, delta);
      CHECK(l2_norm(ws, m) <= l2_norm(ws, phi0) + 1e-10);
      CHECK(h1_seminorm(ws, m) <= h1_seminorm(ws, phi0) + 1e-10);
    }
  }
}

TEST_CASE("mollifier converges as delta goes to zero", "[steppers]") {
  const Grid g = build_grid(12, 12, 1.0, 1.0, {RectEdge::Left});
  const auto ws = make_norm_workspace(g);
  const auto phi0 = smooth_random_field(g, 99);
  std::vector<double> errs;
  std::vector<double> diff(g.n_nodes());
  for (double delta : {1e-1, 1e-2, 1e-3}) {
    const auto m = mollify_initial(g, phi0, delta);
    for (int i = 0; i < g.n_nodes(); ++i) diff[i] = m[i] - phi0[i];
    errs.push_back(l2_norm(ws, diff));
  }
  CHECK(errs[0] > errs[1]);
  CHECK(errs[1] > errs[2]);
}

TEST_CASE("mollifier strictly smooths a checkerboard", "[steppers]") {
  const Grid g = build_grid(8, 8, 1.0, 1.0, {RectEdge::Left});
  const auto ws = make_norm_workspace(g);
  std::vector<double> cb(g.n_nodes());
  for (int j = 0; j <= g.ny; ++j)
    for (int i = 0; i <= g.nx; ++i)
      cb[g.node_index(i, j)] = ((i + j) % 2 == 0) ? 1.0 : -1.0;
  const auto m = mollify_initial(g, cb, 1.0);
  CHECK(h1_seminorm(ws, m) < h1_seminorm(ws, cb) - 1e-6);
}

TEST_CASE("nutrient equilibria", "[steppers]") {
  const Grid g = build_grid(8, 8, 1.0, 1.0, {RectEdge::Left});
  std::vector<double> phi(g.n_nodes(), -0.3);

  // capillary equilibrium: beta=0, kappa=0, B=1, sigma_c = 1
  ModelParams cap;
  cap.beta = 0.0;
  cap.kappa = 0.0;
  cap.sources.supply_B = 1.0;
  cap.sources.sigma_c = 1.0;
  cap.elastic.lame_mu = 0.5;
  auto ctx = make_stepper_context(g, cap);
  std::vector<double> s0(g.n_nodes(), 0.0);
  auto [s1, rep1] = nutrient_step(ctx, phi, s0, 1.0, 0.1);
  for (double v : s1) CHECK(v == Catch::Approx(1.0).margin(1e-12));

  // Robin equilibrium: beta=0, B=0, kappa=1, sigma_B = 0.7
  ModelParams rob;
  rob.beta = 0.0;
  rob.kappa = 1.0;
  rob.sigma_B = 0.7;
  rob.sources.sigma_c = 0.7;
  rob.elastic.lame_mu = 0.5;
  auto ctx2 = make_stepper_context(g, rob);
  auto [s2, rep2] = nutrient_step(ctx2, phi, s0, 1.0, 0.1);
  for (double v : s2) CHECK(v == Catch::Approx(0.7).margin(1e-12));
}

TEST_CASE("nutrient step matches a dense elimination oracle", "[steppers]") {
  const Grid g = build_grid(16, 16, 1.0, 1.0, {RectEdge::Left});
  ModelParams p;
  p.beta = 1.0;
  p.kappa = 0.0;
  p.sigma_B = 1.0;
  p.sources.lambda_c = RateTable::constant(1.0);
  p.sources.h_kind = BoundedFnKind::ONE;
  p.sources.sigma_c = 1.0;
  p.sources.supply_B = 0.0;
  p.elastic.lame_mu = 0.5;
  // (A1) holds since beta > 0
  auto ctx = make_stepper_context(g, p);
  const auto phi = smooth_random_field(g, 5);
  std::vector<double> s_old(g.n_nodes(), 1.0);
  const double dt = 0.1;
  auto [s_new, rep] = nutrient_step(ctx, phi, s_old, dt, dt);
  for (double v : s_new) {
    CHECK(v >= -1e-12);
    CHECK(v <= 1.0 + 1e-12);
  }

  // dense re-solve of the same system
  const int n = g.n_nodes();
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  const auto& k = ctx.stiffness;
  for (int r = 0; r < n; ++r)
    for (int j = k.row_offsets()[r]; j < k.row_offsets()[r + 1]; ++j)
      a[r][k.col_indices()[j]] += k.values()[j];
  std::vector<double> rhs(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double react = p.sources.lambda_c(dt) * p.sources.h(phi[i]);
    a[i][i] += p.beta / dt * ctx.lumped_mass[i] + ctx.lumped_mass[i] * react;
    rhs[i] = p.beta / dt * ctx.lumped_mass[i] * s_old[i];
  }
  // forward elimination
  for (int kk = 0; kk < n; ++kk) {
    int piv = kk;
    for (int i = kk + 1; i < n; ++i)
      if (std::abs(a[i][kk]) > std::abs(a[piv][kk])) piv = i;
    std::swap(a[kk], a[piv]);
    std::swap(rhs[kk], rhs[piv]);
    for (int i = kk + 1; i < n; ++i) {
      const double m = a[i][kk] / a[kk][kk];
      for (int j = kk; j < n; ++j) a[i][j] -= m * a[kk][j];
      rhs[i] -= m * rhs[kk];
    }
  }
  std::vector<double> x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = rhs[i];
    for (int j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
    x[i] = s / a[i][i];
  }
  for (int i = 0; i < n; ++i)
    CHECK(s_new[i] == Catch::Approx(x[i]).margin(1e-8));
}

TEST_CASE("quasi-static nutrient requires B + kappa > 0", "[steppers]") {
  const Grid g = build_grid(4, 4, 1.0, 1.0, {RectEdge::Left});
  ModelParams p;
  p.beta = 1.0;  // passes validate; drop to 0 for the stepper call
  p.kappa = 0.0;
  p.elastic.lame_mu = 0.5;
  auto ctx = make_stepper_context(g, p);
  ctx.params.beta = 0.0;
  std::vector<double> phi(g.n_nodes(), 0.0), s0(g.n_nodes(), 0.0);
  CHECK_THROWS_WITH(
      nutrient_step(ctx, phi, s0, 0.1, 0.1),
      Catch::Matchers::ContainsSubstring("quasi-static nutrient system "
                                         "singular"));
}

TEST_CASE("ch_step keeps spatial constants fixed", "[steppers]") {
  const Grid g = build_grid(8, 8, 1.0, 1.0, {RectEdge::Left});
  auto p = decoupled_params();
  auto ctx = make_stepper_context(g, p);
  FieldState st;
  st.phi.assign(g.n_nodes(), 0.6);
  st.sigma.assign(g.n_nodes(), 1.0);
  st.u.assign(2 * g.n_nodes(), 0.0);
  st.strain = strain_field(g, st.u);
  st.mu = initial_mu(ctx, st.phi, st.sigma, st.u);
  auto [phi1, mu1, rep] = ch_step(ctx, st, st.sigma, st.u, 1e-3, 1e-3);
  const double mu_expect =
      (p.potential.psi1_prime(0.6) + p.potential.psi2_prime(0.6)) / p.epsilon;
  for (int i = 0; i < g.n_nodes(); ++i) {
    CHECK(phi1[i] == Catch::Approx(0.6).margin(1e-12));
    CHECK(mu1[i] == Catch::Approx(mu_expect).margin(1e-10));
  }
}

TEST_CASE("ch_step keeps the psi'(0) = 0 rest state", "[steppers]") {
  const Grid g = build_grid(8, 8, 1.0, 1.0, {RectEdge::Left});
  auto p = decoupled_params();
  auto ctx = make_stepper_context(g, p);
  FieldState st;
  st.phi.assign(g.n_nodes(), 0.0);
  st.sigma.assign(g.n_nodes(), 1.0);
  st.u.assign(2 * g.n_nodes(), 0.0);
  st.strain = strain_field(g, st.u);
  st.mu.assign(g.n_nodes(), 0.0);
  auto [phi1, mu1, rep] = ch_step(ctx, st, st.sigma, st.u, 1e-3, 1e-3);
  for (int i = 0; i < g.n_nodes(); ++i) {
    CHECK(phi1[i] == Catch::Approx(0.0).margin(1e-13));
    CHECK(mu1[i] == Catch::Approx(0.0).margin(1e-13));
  }
}

TEST_CASE("ch_step satisfies the weak forms against every basis function",
          "[steppers]") {
  const Grid g = build_grid(8, 8, 1.0, 1.0, {RectEdge::Left});
  ModelParams p;
  p.epsilon = 0.1;
  p.chi = 0.4;
  p.beta = 1.0;
  p.kappa = 1.0;
  p.sigma_B = 1.0;
  p.sources.lambda_p = RateTable::constant(0.5);
  p.sources.lambda_a = RateTable::constant(0.2);
  p.sources.lambda_c = RateTable::constant(1.0);
  p.sources.supply_B = 1.0;
  p.sources.sigma_c = 1.0;
  p.mobility = MobilityLaw::stress_gated(0.5, 1.5);
  p.elastic.lame_lambda = 1.0;
  p.elastic.lame_mu = 1.0;
  p.elastic.eigenstrain_slope = {0.05, 0.05, 0.01};
  p.traction_g = {0.1, 0.0};
  auto ctx = make_stepper_context(g, p);

  FieldState st;
  st.phi = smooth_random_field(g, 17, 0.8);
  st.sigma.assign(g.n_nodes(), 0.8);
  auto [u_old, urep0] = solve_displacement(ctx.elastic, st.phi);
  st.u = u_old;
  st.strain = strain_field(g, st.u);
  st.mu = initial_mu(ctx, st.phi, st.sigma, st.u);

  const double dt = 1e-3;
  auto [u_new, urep] = solve_displacement(ctx.elastic, st.phi);
  auto [sigma_new, srep] = nutrient_step(ctx, st.phi, st.sigma, dt, dt);
  auto [phi_new, mu_new, nrep] = ch_step(ctx, st, sigma_new, u_new, dt, dt);

  WeakFormOracle oracle{g,      p,          dt,    dt,
                        st.phi, sigma_new,  u_new, st.sigma,
                        st.u};
  const auto [r1, r2] = oracle.residuals(phi_new, mu_new);
  for (int i = 0; i < g.n_nodes(); ++i) {
    CHECK(std::abs(r1[i]) <= 1e-9);
    CHECK(std::abs(r2[i]) <= 1e-9);
  }
}

TEST_CASE("coupled_step has the expected stationary point", "[steppers]") {
  const Grid g = build_grid(8, 8, 1.0, 1.0, {RectEdge::Left});
  ModelParams p;
  p.epsilon = 0.1;
  p.beta = 1.0;
  p.kappa = 0.0;
  p.sources.supply_B = 1.0;
  p.sources.sigma_c = 1.0;
  p.sigma_B = 1.0;
  p.elastic.lame_mu = 0.5;
  auto ctx = make_stepper_context(g, p);
  FieldState st;
  st.phi.assign(g.n_nodes(), 1.0);  // psi'(1) = 0
  st.sigma.assign(g.n_nodes(), 1.0);
  st.u.assign(2 * g.n_nodes(), 0.0);
  st.strain = strain_field(g, st.u);
  st.mu.assign(g.n_nodes(), 0.0);
  const auto out = coupled_step(ctx, st, 1e-2);
  for (int i = 0; i < g.n_nodes(); ++i) {
    CHECK(out.phi[i] == Catch::Approx(1.0).margin(1e-12));
    CHECK(out.sigma[i] == Catch::Approx(1.0).margin(1e-12));
    CHECK(out.mu[i] == Catch::Approx(0.0).margin(1e-11));
  }
  for (double v : out.u) CHECK(v == Catch::Approx(0.0).margin(1e-13));
}

TEST_CASE("discrete mass balance per step", "[steppers]") {
  const Grid g = build_grid(12, 12, 1.0, 1.0, {RectEdge::Left});
  ModelParams p;
  p.epsilon = 0.1;
  p.chi = 0.3;
  p.beta = 1.0;
  p.kappa = 1.0;
  p.sigma_B = 1.0;
  p.sources.lambda_p = RateTable::constant(0.5);
  p.sources.lambda_a = RateTable::constant(0.1);
  p.sources.lambda_c = RateTable::constant(1.0);
  p.sources.supply_B = 1.0;
  p.sources.sigma_c = 1.0;
  p.elastic.lame_lambda = 1.0;
  p.elastic.lame_mu = 1.0;
  p.elastic.eigenstrain_slope = {0.05, 0.05, 0.0};
  auto ctx = make_stepper_context(g, p);
  const auto q3 = element_quadrature(3);

  FieldState st;
  st.phi = smooth_random_field(g, 21, 0.7);
  st.sigma.assign(g.n_nodes(), 1.0);
  auto [u0, ur] = solve_displacement(ctx.elastic, st.phi);
  st.u = u0;
  st.strain = strain_field(g, st.u);
  st.mu = initial_mu(ctx, st.phi, st.sigma, st.u);

  const double dt = 2e-3;
  for (int step = 0; step < 5; ++step) {
    const FieldState old = st;
    st = coupled_step(ctx, st, dt);
    // independent quadrature of U(phi_old, sigma_new, strain(u_new))
    const auto phi_q = interpolate_at_gauss(g, q3, old.phi);
    const auto sig_q = interpolate_at_gauss(g, q3, st.sigma);
    const auto strain_q = strain_at_gauss(g, q3, st.u);
    std::vector<double> uq(phi_q.size());
    for (size_t i = 0; i < phi_q.size(); ++i)
      uq[i] = source_U(p.sources, p.elastic, st.time, phi_q[i], sig_q[i],
                       strain_q[i]);
    const double int_u = integrate_gauss(g, q3, uq);
    const auto mold = ctx.mass.multiply(old.phi);
    const auto mnew = ctx.mass.multiply(st.phi);
    double dm = 0.0, mass_old = 0.0;
    for (int i = 0; i < g.n_nodes(); ++i) {
      dm += mnew[i] - mold[i];
      mass_old += mold[i];
    }
    CHECK(std::abs(dm - dt * int_u) <= 1e-10 * (1.0 + std::abs(mass_old)));
  }
}

TEST_CASE("gradient-flow energy decay with zero tolerance", "[steppers]") {
  const Grid g = build_grid(16, 16, 1.0, 1.0, {RectEdge::Left});
  ModelParams p;
  p.epsilon = 0.1;
  p.chi = 0.0;
  p.beta = 1.0;
  p.kappa = 1.0;
  p.sigma_B = 1.0;
  p.sources.sigma_c = 1.0;
  p.elastic.lame_mu = 0.5;  // no eigenstrain: elasticity decoupled
  const auto phi0 = smooth_random_field(g, 31, 0.9);
  std::vector<double> s0(g.n_nodes(), 1.0);
  const auto res = run_simulation(g, p, phi0, s0, 2e-3, 30);
  for (size_t i = 1; i < res.records.size(); ++i) {
    const double e0 = res.records[i - 1].total_energy;
    const double e1 = res.records[i].total_energy;
    CHECK(e1 <= e0 + 1e-12 * std::max(1.0, std::abs(e0)));
  }
}

TEST_CASE("coupled energy monotonicity with Vegard coupling", "[steppers]") {
  // empirical: coupling on, sources off, dt below h^2
  const Grid g = build_grid(16, 16, 1.0, 1.0, {RectEdge::Left});
  ModelParams p;
  p.epsilon = 0.1;
  p.chi = 0.0;
  p.beta = 1.0;
  p.kappa = 1.0;
  p.sigma_B = 1.0;
  p.sources.sigma_c = 1.0;
  p.elastic.lame_lambda = 1.0;
  p.elastic.lame_mu = 1.0;
  p.elastic.eigenstrain_slope = {0.05, 0.05, 0.0};
  const auto phi0 = smooth_random_field(g, 37, 0.9);
  std::vector<double> s0(g.n_nodes(), 1.0);
  const auto res = run_simulation(g, p, phi0, s0, 3e-3, 20);
  for (size_t i = 1; i < res.records.size(); ++i) {
    const double e0 = res.records[i - 1].total_energy;
    const double e1 = res.records[i].total_energy;
    CHECK(e1 <= e0 + 1e-9 * std::max(1.0, std::abs(e0)));
  }
}

TEST_CASE("comparison principle under the tumour-seed scenario",
          "[steppers]") {
  const Grid g = build_grid(32, 32, 1.0, 1.0, {RectEdge::Left});
  ModelParams p;
  p.epsilon = 0.05;
  p.chi = 0.5;
  p.beta = 1.0;
  p.kappa = 1.0;
  p.sigma_B = 1.0;
  p.sources.lambda_p = RateTable::constant(0.5);
  p.sources.lambda_a = RateTable::constant(0.1);
  p.sources.lambda_c = RateTable::constant(1.0);
  p.sources.supply_B = 1.0;
  p.sources.sigma_c = 1.0;
  p.elastic.lame_lambda = 1.0;
  p.elastic.lame_mu = 1.0;
  p.elastic.eigenstrain_slope = {0.05, 0.05, 0.0};
  std::vector<double> phi0(g.n_nodes());
  for (int i = 0; i < g.n_nodes(); ++i) {
    const double d = std::hypot(g.node_coords[i].x - 0.5,
                                g.node_coords[i].y - 0.5);
    phi0[i] = std::tanh((0.2 - d) / (std::sqrt(2.0) * p.epsilon));
  }
  std::vector<double> s0(g.n_nodes(), 1.0);
  const auto res = run_simulation(g, p, phi0, s0, 1.5e-3, 10);
  for (const auto& r : res.records) {
    CHECK(r.sigma_min >= -1e-12);
    CHECK(r.sigma_max <= 1.0 + 1e-12);
    CHECK(std::isfinite(r.total_energy));
  }
}

TEST_CASE("truncation is inactive along trajectories", "[steppers]") {
  const Grid g = build_grid(12, 12, 1.0, 1.0, {RectEdge::Left});
  ModelParams p;
  p.epsilon = 0.1;
  p.beta = 1.0;
  p.kappa = 1.0;
  p.sigma_B = 1.0;
  p.sources.lambda_p = RateTable::constant(0.5);
  p.sources.lambda_c = RateTable::constant(1.0);
  p.sources.supply_B = 1.0;
  p.sources.sigma_c = 1.0;
  p.elastic.lame_mu = 0.5;
  const double m_bound = p.truncation_M();
  const auto q3 = element_quadrature(3);
  std::vector<double> phi0(g.n_nodes());
  for (int i = 0; i < g.n_nodes(); ++i) {
    const double d = std::hypot(g.node_coords[i].x - 0.5,
                                g.node_coords[i].y - 0.5);
    phi0[i] = std::tanh((0.2 - d) / (std::sqrt(2.0) * p.epsilon));
  }
  std::vector<double> s0(g.n_nodes(), 1.0);
  std::vector<FieldState> states;
  auto hook = [&](const FieldState& s, const DiagnosticsRecord&) {
    states.push_back(s);
  };
  run_simulation(g, p, phi0, s0, 2e-3, 10, hook);
  for (size_t n = 1; n < states.size(); ++n) {
    const auto phi_q = interpolate_at_gauss(g, q3, states[n - 1].phi);
    const auto sig_q = interpolate_at_gauss(g, q3, states[n].sigma);
    const auto strain_q = strain_at_gauss(g, q3, states[n].u);
    for (size_t i = 0; i < phi_q.size(); ++i) {
      const double raw = source_U(p.sources, p.elastic, states[n].time,
                                  phi_q[i], sig_q[i], strain_q[i]);
      const double truncated =
          source_U(p.sources, p.elastic, states[n].time, phi_q[i],
                   truncate_g(sig_q[i], m_bound, m_bound), strain_q[i]);
      CHECK(raw == Catch::Approx(truncated).margin(1e-13));
    }
  }
}

TEST_CASE("run_simulation basics", "[steppers]") {
  const Grid g = build_grid(8, 8, 1.0, 1.0, {RectEdge::Left});
  auto p = decoupled_params();
  std::vector<double> phi0(g.n_nodes(), 1.0);
  std::vector<double> s0(g.n_nodes(), 1.0);

  // n_steps = 0: initial state back, single record
  const auto res0 = run_simulation(g, p, phi0, s0, 1e-3, 0);
  CHECK(res0.records.size() == 1);
  CHECK(res0.final_state.time == 0.0);
  CHECK(res0.final_state.phi == phi0);

  // stationary scenario over many steps
  const auto res = run_simulation(g, p, phi0, s0, 1e-3, 100);
  double drift = 0.0;
  for (int i = 0; i < g.n_nodes(); ++i)
    drift = std::max(drift, std::abs(res.final_state.phi[i] - 1.0));
  CHECK(drift <= 1e-9);

  // sigma0 above M violates (A6)
  std::vector<double> bad(g.n_nodes(), 2.0);
  CHECK_THROWS_WITH(run_simulation(g, p, phi0, bad, 1e-3, 1),
                    Catch::Matchers::ContainsSubstring("(A6)"));
}

TEST_CASE("run_simulation is deterministic", "[steppers]") {
  const Grid g = build_grid(8, 8, 1.0, 1.0, {RectEdge::Left});
  ModelParams p;
  p.epsilon = 0.1;
  p.chi = 0.3;
  p.beta = 0.5;
  p.kappa = 1.0;
  p.sigma_B = 1.0;
  p.sources.lambda_p = RateTable::constant(0.5);
  p.sources.lambda_c = RateTable::constant(1.0);
  p.sources.sigma_c = 1.0;
  p.elastic.lame_lambda = 1.0;
  p.elastic.lame_mu = 1.0;
  p.elastic.eigenstrain_slope = {0.05, 0.05, 0.0};
  const auto phi0 = smooth_random_field(g, 53, 0.8);
  std::vector<double> s0(g.n_nodes(), 1.0);
  const auto r1 = run_simulation(g, p, phi0, s0, 2e-3, 10);
  const auto r2 = run_simulation(g, p, phi0, s0, 2e-3, 10);
  REQUIRE(r1.records.size() == r2.records.size());
  for (size_t i = 0; i < r1.records.size(); ++i) {
    CHECK(r1.records[i].total_energy == r2.records[i].total_energy);
    CHECK(r1.records[i].mass == r2.records[i].mass);
    CHECK(r1.records[i].sigma_max == r2.records[i].sigma_max);
  }
  CHECK(r1.final_state.phi == r2.final_state.phi);
  CHECK(r1.final_state.u == r2.final_state.u);
}
