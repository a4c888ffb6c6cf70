#include <bc1/operator.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

using bc1::cplx;
using bc1::Couplings;
using bc1::LatticeContext;
using bc1::OperatorParams;

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

// entire test functions of the form e^{kz} prod_i sigma(z + t_i)
struct ThetaFn {
  const LatticeContext* ctx;
  cplx k;
  std::vector<cplx> t;
  cplx operator()(cplx z) const {
    cplx v = std::exp(k * z);
    for (const cplx& ti : t) v *= ctx->sigma(z + ti);
    return v;
  }
};

ThetaFn random_theta_fn(const LatticeContext& ctx, oracle::Rng& rng, int n) {
  ThetaFn f;
  f.ctx = &ctx;
  f.k = rng.box(0.8);
  for (int i = 0; i < n; ++i) f.t.push_back(rng.in_cell(ctx, 0.7));
  return f;
}

}  // namespace

TEST_CASE("coefficient a") {
  auto ctx = test_lattice();
  oracle::Rng rng(21);
  SECTION("A1 reduction: only m_0 = m nonzero gives sigma(z-2gm)/sigma(z)") {
    for (int m0 : {1, 2, 3}) {
      OperatorParams params(ctx, make({m0, 0, 0, 0}, {0, 0, 0, 0}));
      for (int i = 0; i < 20; ++i) {
        const cplx z = rng.in_cell(ctx, 0.8);
        if (ctx.lattice_distance(z) < 0.05) continue;
        const cplx expect = ctx.sigma(z - 2.0 * kGamma * double(m0)) / ctx.sigma(z);
        CHECK(std::abs(params.coeff_a(z) - expect) < 1e-12 * std::abs(expect));
      }
    }
  }
  SECTION("a vanishes at 2 gamma m_0") {
    for (int m0 : {1, 2, 3}) {
      OperatorParams params(ctx, make({m0, 0, 1, 0}, {0, 1, 0, 0}));
      CHECK(std::abs(params.coeff_a(2.0 * kGamma * double(m0))) == 0.0);
    }
  }
  SECTION("all couplings zero: a = 1 exactly, everywhere") {
    OperatorParams params(ctx, make({0, 0, 0, 0}, {0, 0, 0, 0}));
    CHECK(params.coeff_a(rng.in_cell(ctx, 0.9)) == cplx(1.0));
    CHECK(params.coeff_a(cplx(0.0)) == cplx(1.0));  // would-be pole cancels identically
  }
  SECTION("denominator pole raises with the factor location") {
    OperatorParams params(ctx, make({1, 0, 0, 0}, {0, 0, 0, 0}));
    CHECK_THROWS_AS(params.coeff_a(cplx(0.0)), bc1::PoleError);
  }
}

TEST_CASE("coefficient b") {
  auto ctx = test_lattice();
  oracle::Rng rng(22);
  OperatorParams params(ctx, make({2, 1, 0, 0}, {1, 0, 0, 1}));
  SECTION("b(z) = a(-z) exactly") {
    for (int i = 0; i < 10; ++i) {
      const cplx z = rng.in_cell(ctx, 0.8);
      CHECK(params.coeff_b(z) == params.coeff_a(-z));
    }
  }
  SECTION("mirror zero") {
    CHECK(std::abs(params.coeff_b(-2.0 * kGamma * 2.0)) == 0.0);
  }
  SECTION("couplings zero") {
    OperatorParams id(ctx, make({0, 0, 0, 0}, {0, 0, 0, 0}));
    CHECK(id.coeff_b(rng.in_cell(ctx, 0.9)) == cplx(1.0));
  }
}

TEST_CASE("c weights") {
  auto ctx = test_lattice();
  SECTION("all m' zero kills every weight") {
    OperatorParams params(ctx, make({2, 1, 3, 1}, {0, 0, 0, 0}));
    for (int p = 0; p < 4; ++p) CHECK(params.c_weight(p) == cplx(0.0));
    CHECK(params.coeff_c(cplx(0.21, 0.13)) == cplx(0.0));
  }
  SECTION("m'_0 = 1: c_0 = -sigma(2 gamma), others vanish") {
    OperatorParams params(ctx, make({0, 0, 0, 0}, {1, 0, 0, 0}));
    const cplx expect = -ctx.sigma(2.0 * kGamma);
    CHECK(std::abs(params.c_weight(0) - expect) < 1e-13 * std::abs(expect));
    for (int p = 1; p < 4; ++p) CHECK(params.c_weight(p) == cplx(0.0));
  }
  SECTION("permutation bookkeeping is bit-stable") {
    OperatorParams params(ctx, make({1, 2, 0, 1}, {1, 0, 2, 1}));
    for (int r = 0; r < 4; ++r) {
      OperatorParams perm = params.permuted(r);
      for (int p = 0; p < 4; ++p) {
        const cplx lhs = perm.c_weight(p);
        const cplx rhs = params.c_weight(bc1::kHalfPeriodPermutation[r][p]);
        CHECK(std::abs(lhs - rhs) <= 1e-15 * std::abs(rhs));
      }
    }
  }
}

TEST_CASE("coefficient c") {
  auto ctx = test_lattice();
  oracle::Rng rng(23);
  OperatorParams params(ctx, make({1, 0, 2, 0}, {1, 1, 0, 1}));
  SECTION("even at 100 random points") {
    int checked = 0;
    for (int i = 0; checked < 100 && i < 400; ++i) {
      const cplx z = rng.in_cell(ctx, 0.9);
      bool ok = true;
      for (int p = 0; p < 4 && ok; ++p)
        for (const cplx arg : {z - kGamma, z + kGamma, -z - kGamma, -z + kGamma})
          if (ctx.shifted_zero_distance(p, arg) < 0.02) ok = false;
      if (!ok) continue;
      ++checked;
      const cplx cz = params.coeff_c(z);
      CHECK(std::abs(cz - params.coeff_c(-z)) < 1e-11 * std::max(1.0, std::abs(cz)));
    }
    CHECK(checked == 100);
  }
  SECTION("half-period covariance c_mu(z + omega_r) = c_{permuted mu}(z)") {
    for (int r = 0; r < 4; ++r) {
      OperatorParams perm = params.permuted(r);
      for (int i = 0; i < 10; ++i) {
        const cplx z = rng.in_cell(ctx, 0.6);
        cplx lhs, rhs;
        try {
          lhs = params.coeff_c(z + ctx.omega(r));
          rhs = perm.coeff_c(z);
        } catch (const bc1::PoleError&) {
          continue;
        }
        CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(rhs)));
      }
    }
  }
}

TEST_CASE("applying L") {
  auto ctx = test_lattice();
  oracle::Rng rng(24);
  SECTION("free operator acts on exponentials by 2 cosh(2 gamma k)") {
    OperatorParams params(ctx, make({0, 0, 0, 0}, {0, 0, 0, 0}));
    for (int i = 0; i < 5; ++i) {
      const cplx k = rng.box(1.0);
      const cplx z = rng.in_cell(ctx, 0.8);
      const cplx ratio =
          params.apply([&](cplx x) { return std::exp(k * x); }, z) / std::exp(k * z);
      const cplx expect = 2.0 * std::cosh(2.0 * kGamma * k);
      CHECK(std::abs(ratio - expect) < 1e-12 * std::abs(expect));
    }
  }
  SECTION("A1 couplings reproduce the two-term operator") {
    OperatorParams params(ctx, make({2, 0, 0, 0}, {0, 0, 0, 0}));
    auto f = random_theta_fn(ctx, rng, 2);
    for (int i = 0; i < 10; ++i) {
      const cplx z = rng.in_cell(ctx, 0.8);
      if (ctx.lattice_distance(z) < 0.05) continue;
      const cplx mu = 4.0 * kGamma;
      const cplx two_term = ctx.sigma(z - mu) / ctx.sigma(z) * f(z + 2.0 * kGamma) +
                            ctx.sigma(z + mu) / ctx.sigma(z) * f(z - 2.0 * kGamma);
      const cplx lz = params.apply(f, z);
      CHECK(std::abs(lz - two_term) < 1e-11 * std::max(1.0, std::abs(two_term)));
    }
  }
  SECTION("z <-> -z invariance on even test functions, random couplings") {
    int tested = 0;
    for (int trial = 0; trial < 40 && tested < 20; ++trial) {
      Couplings c = make({int(rng.uniform(0, 2.99)), int(rng.uniform(0, 1.99)), 0, 0},
                         {int(rng.uniform(0, 1.99)), 0, int(rng.uniform(0, 1.99)), 0});
      if (c.total() > 6 || c.total() == 0) continue;
      ++tested;
      OperatorParams params(ctx, c);
      auto g = random_theta_fn(ctx, rng, 2);
      auto even = [&](cplx x) { return g(x) + g(-x); };
      for (int i = 0; i < 5; ++i) {
        const cplx z = rng.in_cell(ctx, 0.7);
        cplx l1, l2;
        try {
          l1 = params.apply(even, z);
          l2 = params.apply(even, -z);
        } catch (const bc1::PoleError&) {
          continue;
        }
        CHECK(std::abs(l1 - l2) < 1e-10 * std::max(1.0, std::abs(l1)));
      }
    }
    CHECK(tested == 20);
  }
}

TEST_CASE("permutations and conjugation") {
  auto ctx = test_lattice();
  oracle::Rng rng(25);
  OperatorParams params(ctx, make({1, 1, 0, 0}, {1, 0, 1, 0}));
  SECTION("pi_r(0) = r and the group law") {
    for (int r = 0; r < 4; ++r) CHECK(bc1::kHalfPeriodPermutation[r][0] == r);
    for (int r = 0; r < 4; ++r)
      for (int p = 0; p < 4; ++p) {
        const int q = bc1::kHalfPeriodPermutation[r][p];
        for (int s = 0; s < 4; ++s)
          CHECK(bc1::kHalfPeriodPermutation[r][bc1::kHalfPeriodPermutation[p][s]] ==
                bc1::kHalfPeriodPermutation[q][s]);
      }
  }
  SECTION("lambda_r = -eta_r * m_total, and the a/b covariance factors it encodes") {
    const double mt = params.couplings().total();
    CHECK(std::abs(params.lambda_shift(1, 0) + ctx.eta(1) * mt) < 1e-14);
    CHECK(std::abs(params.lambda_shift(0, 1) + ctx.eta(2) * mt) < 1e-14);
    CHECK(std::abs(params.lambda_shift(-1, -1) + ctx.eta(3) * mt) < 1e-13);
    const cplx z{0.1317, 0.0821};
    for (int r = 1; r <= 3; ++r) {
      auto perm = params.permuted(r);
      const cplx fac = std::exp(-ctx.eta(r) * 2.0 * kGamma * mt);
      const cplx lhs_a = params.coeff_a(z + ctx.omega(r));
      const cplx lhs_b = params.coeff_b(z + ctx.omega(r));
      CHECK(std::abs(lhs_a - perm.coeff_a(z) * fac) < 1e-11 * std::abs(lhs_a));
      CHECK(std::abs(lhs_b - perm.coeff_b(z) / fac) < 1e-11 * std::abs(lhs_b));
    }
  }
  SECTION("conjugation identity") {
    auto f = random_theta_fn(ctx, rng, 2);
    const cplx z = rng.in_cell(ctx, 0.5);
    CHECK(params.covariance_residual(0, 0, f, z) < 1e-14);
    CHECK(params.covariance_residual(1, 0, f, z) < 1e-9);
    CHECK(params.covariance_residual(2, 0, f, z) < 1e-9);  // full period, identity class
  }
  SECTION("conjugation identity across omega choices and test functions") {
    const std::array<std::pair<int, int>, 4> omegas{{{1, 0}, {0, 1}, {-1, -1}, {1, 2}}};
    for (int trial = 0; trial < 10; ++trial) {
      auto f = random_theta_fn(ctx, rng, 2);
      for (auto [n1, n2] : omegas) {
        const cplx z = rng.in_cell(ctx, 0.5);
        double r;
        try {
          r = params.covariance_residual(n1, n2, f, z);
        } catch (const bc1::PoleError&) {
          continue;
        }
        CHECK(r < 1e-9);
      }
    }
  }
}

TEST_CASE("structure report") {
  auto ctx = test_lattice();
  SECTION("A1 couplings m_0 = 2") {
    OperatorParams params(ctx, make({2, 0, 0, 0}, {0, 0, 0, 0}));
    auto rep = params.structure_report();
    for (const auto& item : rep.items) {
      INFO(item.name);
      CHECK(item.residual < 1e-10);
    }
  }
  SECTION("m'_0 = 1: a vanishes at gamma and residues balance") {
    OperatorParams params(ctx, make({0, 0, 0, 0}, {1, 0, 0, 0}));
    CHECK(std::abs(params.coeff_a(kGamma)) == 0.0);
    auto rep = params.structure_report();
    CHECK(rep.pass(1e-9));
    // the residues really are nonzero before cancellation
    CHECK(std::abs(rep.res_a_at_minus_gamma) > 1e-3);
    CHECK(std::abs(rep.res_a_at_minus_gamma + rep.res_c_at_minus_gamma) <
          1e-10 * std::abs(rep.res_a_at_minus_gamma));
    CHECK(std::abs(rep.res_a_at_minus_gamma + rep.res_b_at_gamma) <
          1e-10 * std::abs(rep.res_a_at_minus_gamma));
  }
  SECTION("generic couplings pass at 1e-9") {
    for (const Couplings& c :
         {make({1, 1, 0, 0}, {1, 0, 1, 0}), make({2, 0, 1, 0}, {0, 1, 0, 1}),
          make({3, 2, 1, 0}, {1, 1, 1, 1})}) {
      OperatorParams params(ctx, c);
      auto rep = params.structure_report();
      INFO("m_total = " << c.total());
      CHECK(rep.pass(1e-9));
    }
  }
  SECTION("rejects negative couplings naming the field") {
    try {
      OperatorParams params(ctx, make({-1, 0, 0, 0}, {0, 0, 0, 0}));
      FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("m[0]") != std::string::npos);
    }
  }
  SECTION("rejects rationally-resonant gamma") {
    CHECK_THROWS_AS(OperatorParams(ctx, make({1, 0, 0, 0}, {0, 0, 0, 0},
                                             0.25 * ctx.omega1() + 0.5 * ctx.omega2())),
                    std::invalid_argument);
  }
}
