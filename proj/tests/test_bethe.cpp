#include <bc1/bethe.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

using bc1::BetheState;
using bc1::cplx;
using bc1::Couplings;
using bc1::LatticeContext;
using bc1::OperatorParams;
using bc1::SolveOptions;

namespace {

const cplx kGamma{0.1712, 0.0313};

LatticeContext test_lattice() { return LatticeContext({1.0, 0.0}, {0.3, 1.1}); }

Couplings make(std::array<int, 4> m, std::array<int, 4> mp, cplx g = kGamma) {
  Couplings c;
  c.m = m;
  c.m_prime = mp;
  c.gamma = g;
  return c;
}

// closed-form k for the single-equation A1 case m_0 = 1:
// e^{4 gamma k} = sigma(t - 2 gamma) / sigma(t + 2 gamma)
cplx a1_closed_form_k(const LatticeContext& ctx, cplx t) {
  return (ctx.sigma_log(t - 2.0 * kGamma) - ctx.sigma_log(t + 2.0 * kGamma)) / (4.0 * kGamma);
}

}  // namespace

TEST_CASE("psi evaluation") {
  auto ctx = test_lattice();
  oracle::Rng rng(31);
  SECTION("empty product is a pure exponential") {
    BetheState st{{}, cplx(0.4, -0.2)};
    const cplx z = rng.in_cell(ctx, 0.9);
    CHECK(psi_eval(ctx, st, z) == std::exp(st.k * z));
  }
  SECTION("psi(-t_1) = 0") {
    BetheState st{{rng.in_cell(ctx, 0.6), rng.in_cell(ctx, 0.6)}, cplx(0.3, 0.1)};
    CHECK(std::abs(psi_eval(ctx, st, -st.t[0])) == 0.0);
    CHECK(std::abs(psi_eval(ctx, st, -st.t[1])) == 0.0);
  }
  SECTION("quasi-periodicity multiplier e^{2 m eta_s delta}") {
    BetheState st{{rng.in_cell(ctx, 0.6), rng.in_cell(ctx, 0.6), rng.in_cell(ctx, 0.6)},
                  cplx(0.21, 0.11)};
    const double m = st.t.size();
    for (int s = 1; s <= 2; ++s) {
      const cplx z = rng.in_cell(ctx, 0.5);
      const cplx delta{0.137, 0.041};
      const cplx r1 = psi_eval(ctx, st, z + 2.0 * ctx.omega(s)) / psi_eval(ctx, st, z);
      const cplx r2 =
          psi_eval(ctx, st, z + delta + 2.0 * ctx.omega(s)) / psi_eval(ctx, st, z + delta);
      const cplx expect = std::exp(2.0 * m * ctx.eta(s) * delta);
      CHECK(std::abs(r2 / r1 - expect) < 1e-10 * std::abs(expect));
    }
  }
}

TEST_CASE("psi derivatives") {
  auto ctx = test_lattice();
  oracle::Rng rng(32);
  SECTION("order 1, m = 1: psi'(0) = k sigma(t) + sigma'(t)") {
    const cplx t = rng.in_cell(ctx, 0.6);
    const cplx k{0.37, -0.22};
    BetheState st{{t}, k};
    const auto d = psi_log_derivs(ctx, st, cplx(0.0), 1);
    const cplx sigma_prime = ctx.sigma(t) * ctx.zeta(t);
    CHECK(std::abs(d[0] - ctx.sigma(t)) < 1e-13 * std::abs(ctx.sigma(t)));
    CHECK(std::abs(d[1] - (k * ctx.sigma(t) + sigma_prime)) < 1e-12);
  }
  SECTION("m = 0: psi^{(n)} = k^n e^{kz}") {
    BetheState st{{}, cplx(0.5, 0.3)};
    const cplx z = rng.in_cell(ctx, 0.5);
    const auto d = psi_log_derivs(ctx, st, z, 4);
    for (int n = 0; n <= 4; ++n) {
      const cplx expect = std::pow(st.k, n) * std::exp(st.k * z);
      CHECK(std::abs(d[n] - expect) < 1e-12 * std::abs(expect));
    }
  }
  SECTION("matches finite differences at random points") {
    for (int trial = 0; trial < 8; ++trial) {
      BetheState st{{rng.in_cell(ctx, 0.6), rng.in_cell(ctx, 0.6)}, rng.box(0.5)};
      const cplx z = rng.in_cell(ctx, 0.6);
      const auto d = psi_log_derivs(ctx, st, z, 3);
      auto f = [&](cplx w) { return psi_eval(ctx, st, w); };
      for (int n = 1; n <= 3; ++n) {
        const cplx fd = oracle::diff_n(f, z, n, 1e-2);
        CHECK(std::abs(fd - d[n]) < 1e-7 * std::max(1.0, std::abs(d[n])));
      }
    }
  }
  SECTION("well-defined when a factor sits at a sigma zero") {
    const cplx t = -ctx.omega(1);  // psi factor vanishes at z = omega_1
    BetheState st{{t, rng.in_cell(ctx, 0.5)}, cplx(0.2, 0.1)};
    const auto d = psi_log_derivs(ctx, st, ctx.omega(1), 3);
    CHECK(std::abs(d[0]) < 1e-12);
    auto f = [&](cplx w) { return psi_eval(ctx, st, w); };
    const cplx fd = oracle::diff_n(f, ctx.omega(1), 1, 1e-2);
    CHECK(std::abs(fd - d[1]) < 1e-7 * std::max(1.0, std::abs(d[1])));
  }
}

TEST_CASE("bethe residual") {
  auto ctx = test_lattice();
  oracle::Rng rng(33);
  SECTION("bookkeeping: equation count and order") {
    const auto eqs = bc1::bethe_equations(make({1, 1, 0, 0}, {1, 0, 0, 0}));
    REQUIRE(eqs.size() == 3);
    CHECK((eqs[0].s == 0 && eqs[0].j == 1 && !eqs[0].odd_family));
    CHECK((eqs[1].s == 0 && eqs[1].j == 1 && eqs[1].odd_family));
    CHECK((eqs[2].s == 1 && eqs[2].j == 1 && !eqs[2].odd_family));
    CHECK(eqs[0].d() == 2);
    CHECK(eqs[1].d() == 1);
  }
  SECTION("A1 m_0 = 1 closed form zeroes the residual") {
    OperatorParams params(ctx, make({1, 0, 0, 0}, {0, 0, 0, 0}));
    const cplx t = 0.3 * ctx.omega1() + 0.2 * ctx.omega2();
    BetheState st{{t}, a1_closed_form_k(ctx, t)};
    const auto r = bc1::bethe_residual(params, st);
    REQUIRE(r.size() == 1);
    CHECK(std::abs(r[0]) < 1e-13);
  }
  SECTION("residual exponentiates to the psi-ratio form of the equations") {
    OperatorParams params(ctx, make({2, 0, 0, 0}, {0, 1, 0, 0}));
    BetheState st{{rng.in_cell(ctx, 0.5), rng.in_cell(ctx, 0.5), rng.in_cell(ctx, 0.5)},
                  rng.box(0.4)};
    const auto r = bc1::bethe_residual(params, st);
    const auto eqs = bc1::bethe_equations(params.couplings());
    const double mt = params.couplings().total();
    for (std::size_t e = 0; e < eqs.size(); ++e) {
      const cplx w = ctx.omega(eqs[e].s);
      const cplx dg = double(eqs[e].d()) * kGamma;
      // exp(r) = psi(w - d g) e^{2 d g m eta_s} / psi(w + d g): the k-dependence is
      // already inside the psi exponentials
      const cplx lhs = psi_eval(ctx, st, w - dg) * std::exp(2.0 * dg * mt * ctx.eta(eqs[e].s));
      const cplx ratio = lhs / psi_eval(ctx, st, w + dg);
      CHECK(std::abs(std::exp(r[e]) - ratio) < 1e-11 * std::abs(ratio));
    }
  }
  SECTION("singular configuration flags the equation index") {
    OperatorParams params(ctx, make({1, 0, 0, 0}, {0, 0, 0, 0}));
    BetheState st{{-2.0 * kGamma}, cplx(0.1, 0.0)};  // t + omega_0 + 2 gamma = 0
    try {
      (void)bc1::bethe_residual(params, st);
      FAIL("expected SingularEquation");
    } catch (const bc1::SingularEquation& e) {
      CHECK(e.equation_index() == 0);
    }
  }
}

TEST_CASE("newton solver") {
  auto ctx = test_lattice();
  oracle::Rng rng(34);
  SECTION("m = 0 is trivially converged with epsilon = 2 cosh(2 gamma k)") {
    OperatorParams params(ctx, make({0, 0, 0, 0}, {0, 0, 0, 0}));
    SolveOptions opts;
    opts.normalize_k = false;
    BetheState init{{}, cplx(0.31, 0.17)};
    const auto sol = bc1::solve_newton(params, init, opts);
    CHECK(sol.residual_norm == 0.0);
    const cplx expect = std::exp(2.0 * kGamma * init.k) + std::exp(-2.0 * kGamma * init.k);
    CHECK(std::abs(sol.eigenvalue - expect) < 1e-12 * std::abs(expect));
  }
  SECTION("A1 m_0 = 1 from a perturbed closed-form seed converges fast") {
    OperatorParams params(ctx, make({1, 0, 0, 0}, {0, 0, 0, 0}));
    const cplx t = 0.3 * ctx.omega1() + 0.2 * ctx.omega2();
    SolveOptions opts;
    opts.normalize_k = false;
    opts.max_seeds = 1;
    BetheState init{{t + cplx(0.01, -0.01)}, a1_closed_form_k(ctx, t)};
    const auto sol = bc1::solve_newton(params, init, opts);
    CHECK(sol.iterations <= 6);
    CHECK(sol.residual_norm < 1e-11);
    CHECK(std::abs(sol.state.t[0] - t) < 1e-9);
    CHECK(sol.certificate < 1e-8);
  }
  SECTION("FixSum gauge solves for (t, k) holding sum(t) fixed") {
    OperatorParams params(ctx, make({1, 0, 0, 0}, {0, 0, 0, 0}));
    const cplx t = 0.3 * ctx.omega1() + 0.2 * ctx.omega2();
    const cplx k0 = a1_closed_form_k(ctx, t);
    SolveOptions opts;
    opts.gauge = bc1::Gauge::FixSum;
    opts.normalize_k = false;
    opts.max_seeds = 1;
    BetheState init{{t}, k0 + cplx(0.05, -0.02)};  // k free, sum(t) pinned at t
    const auto sol = bc1::solve_newton(params, init, opts);
    CHECK(sol.residual_norm < 1e-11);
    CHECK(std::abs(sol.state.t[0] - t) < 1e-10);
    CHECK(std::abs(sol.state.k - k0) < 1e-9);
  }
  SECTION("singular start raises the flagged-equation error") {
    OperatorParams params(ctx, make({1, 0, 0, 0}, {0, 0, 0, 0}));
    SolveOptions opts;
    opts.max_seeds = 1;
    BetheState init{{-2.0 * kGamma}, cplx(0.1, 0.0)};
    CHECK_THROWS_AS(bc1::solve_newton(params, init, opts), bc1::SingularEquation);
  }
  SECTION("random-seed solve for a mixed coupling set certifies") {
    OperatorParams params(ctx, make({1, 0, 1, 0}, {0, 0, 0, 0}));
    SolveOptions opts;
    opts.rng_seed = 99;
    BetheState init{{rng.in_cell(ctx, 0.7), rng.in_cell(ctx, 0.7)}, cplx(0.23, 0.05)};
    const auto sol = bc1::solve_newton(params, init, opts);
    CHECK(sol.residual_norm < 1e-10);
    CHECK(sol.certificate < 1e-8);
  }
}

TEST_CASE("eigenvalue extraction") {
  auto ctx = test_lattice();
  SECTION("independent of the evaluation point") {
    OperatorParams params(ctx, make({1, 0, 0, 0}, {0, 0, 0, 0}));
    const cplx t = 0.27 * ctx.omega1() + 0.31 * ctx.omega2();
    BetheState st{{t}, a1_closed_form_k(ctx, t)};
    const cplx eps = bc1::eigenvalue(params, st);
    auto psi = [&](cplx z) { return psi_eval(ctx, st, z); };
    const cplx z2 = 2.0 * kGamma + 0.37 * ctx.omega1();
    const cplx eps2 = params.apply(psi, z2) / psi(z2);
    CHECK(std::abs(eps - eps2) < 1e-9 * std::abs(eps));
    // agrees with L psi / psi across a 50-point grid
    const double cert = bc1::certify_eigen(params, st, eps, bc1::default_grid(ctx, 50, 0.85));
    CHECK(cert < 1e-9);
  }
}

TEST_CASE("certification") {
  auto ctx = test_lattice();
  oracle::Rng rng(36);
  SECTION("negative control: random state must not certify") {
    OperatorParams params(ctx, make({1, 0, 0, 0}, {0, 0, 0, 0}));
    BetheState st{{rng.in_cell(ctx, 0.6)}, rng.box(0.5)};
    cplx eps;
    try {
      eps = bc1::eigenvalue(params, st);
    } catch (const std::runtime_error&) {
      SUCCEED("no admissible point even");
      return;
    }
    const double cert = bc1::certify_eigen(params, st, eps, bc1::default_grid(ctx, 50, 0.85));
    CHECK(cert > 1e-3);
  }
  SECTION("negative control: perturbing one t_i of a solution breaks the certificate") {
    OperatorParams params(ctx, make({1, 0, 0, 0}, {0, 0, 0, 0}));
    const cplx t = 0.3 * ctx.omega1() + 0.2 * ctx.omega2();
    BetheState st{{t}, a1_closed_form_k(ctx, t)};
    const cplx eps = bc1::eigenvalue(params, st);
    BetheState bad = st;
    bad.t[0] += 1e-3;
    const double cert = bc1::certify_eigen(params, bad, eps, bc1::default_grid(ctx, 50, 0.85));
    CHECK(cert > 1e-5);
  }
  SECTION("two-family m = 2 solve certifies") {
    OperatorParams params(ctx, make({1, 0, 1, 0}, {0, 0, 0, 0}));
    SolveOptions opts;
    opts.rng_seed = 5;
    BetheState init{{cplx(0.2, 0.3), cplx(-0.1, 0.4)}, cplx(0.19, -0.07)};
    const auto sol = bc1::solve_newton(params, init, opts);
    CHECK(sol.certificate < 1e-8);
  }
}

TEST_CASE("q-space preservation") {
  auto ctx = test_lattice();
  SECTION("certified solution satisfies the Q conditions at omega_s and a translate") {
    OperatorParams params(ctx, make({1, 0, 0, 0}, {1, 0, 0, 0}));
    SolveOptions opts;
    opts.rng_seed = 12;
    BetheState init{{cplx(0.25, 0.31), cplx(-0.15, 0.22)}, cplx(0.21, 0.08)};
    const auto sol = bc1::solve_newton(params, init, opts);
    REQUIRE(sol.certificate < 1e-8);
    const auto rep = bc1::q_space_check(params, sol);
    CHECK(rep.items.size() >= 2);
    CHECK(rep.max_condition_residual() < 1e-9);
    CHECK(rep.evenness < 1e-8);
    CHECK(rep.periodicity < 1e-8);
  }
  SECTION("m = 0 report is vacuous") {
    OperatorParams params(ctx, make({0, 0, 0, 0}, {0, 0, 0, 0}));
    SolveOptions opts;
    BetheState init{{}, cplx(0.4, 0.1)};
    const auto sol = bc1::solve_newton(params, init, opts);
    const auto rep = bc1::q_space_check(params, sol);
    CHECK(rep.items.empty());
  }
}

TEST_CASE("residual invariances") {
  auto ctx = test_lattice();
  oracle::Rng rng(37);
  OperatorParams params(ctx, make({1, 1, 0, 0}, {1, 0, 0, 0}));
  BetheState st{{rng.in_cell(ctx, 0.5), rng.in_cell(ctx, 0.5), rng.in_cell(ctx, 0.5)},
                rng.box(0.4)};
  const auto r0 = bc1::bethe_residual(params, st);
  SECTION("t_j -> t_j + 2 omega_s with k -> k - 2 eta_s") {
    for (int s = 1; s <= 2; ++s) {
      BetheState shifted = st;
      shifted.t[1] += 2.0 * ctx.omega(s);
      shifted.k -= 2.0 * ctx.eta(s);
      const auto r1 = bc1::bethe_residual(params, shifted);
      for (std::size_t e = 0; e < r0.size(); ++e) CHECK(std::abs(r1[e] - r0[e]) < 1e-10);
    }
  }
  SECTION("k -> k + pi i / gamma") {
    BetheState shifted = st;
    shifted.k += cplx(0.0, bc1::kPi) / kGamma;
    const auto r1 = bc1::bethe_residual(params, shifted);
    for (std::size_t e = 0; e < r0.size(); ++e) CHECK(std::abs(r1[e] - r0[e]) < 1e-10);
  }
  SECTION("permutations of t") {
    BetheState perm = st;
    std::swap(perm.t[0], perm.t[2]);
    const auto r1 = bc1::bethe_residual(params, perm);
    for (std::size_t e = 0; e < r0.size(); ++e) CHECK(std::abs(r1[e] - r0[e]) < 1e-10);
  }
  SECTION("rejected solutions: t_i + t_j on the lattice") {
    std::vector<cplx> bad{cplx(0.3, 0.2), -cplx(0.3, 0.2) + 2.0 * ctx.omega1()};
    CHECK_THROWS_AS(bc1::check_excluded_set(ctx, bad), bc1::RejectedSolution);
  }
}
