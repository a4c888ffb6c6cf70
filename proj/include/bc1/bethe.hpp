#pragma once

// Bethe ansatz machinery for the BC1 Ruijsenaars operator: the ansatz function
// psi(z) = e^{kz} prod_i sigma(z + t_i), the residual system in log form, a damped
// Newton solver with analytic Jacobian, eigenvalue extraction and certification.

#include "bc1/operator.hpp"

#include <optional>
#include <random>

namespace bc1 {

class SingularEquation : public std::runtime_error {
 public:
  SingularEquation(int index, const std::string& what)
      : std::runtime_error("bethe equation " + std::to_string(index) + ": " + what),
        index_(index) {}
  int equation_index() const { return index_; }

 private:
  int index_;
};

class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, double final_residual, int iterations)
      : std::runtime_error(what + " (residual " + std::to_string(final_residual) + " after " +
                           std::to_string(iterations) + " iterations)"),
        final_residual_(final_residual),
        iterations_(iterations) {}
  double final_residual() const { return final_residual_; }
  int iterations() const { return iterations_; }

 private:
  double final_residual_;
  int iterations_;
};

/// Converged to the excluded configuration set (some t_i + t_j on the period lattice),
/// where the ansatz degenerates.
class RejectedSolution : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class InsufficientGrid : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BetheState {
  std::vector<cplx> t;
  cplx k{0.0, 0.0};
};

struct BetheSolution {
  BetheState state;
  cplx eigenvalue{};
  double residual_norm = 0.0;
  double certificate = 0.0;
  cplx q{};
  int iterations = 0;
  bool near_coincident_t = false;  // t_i ~ t_j mod 2*Gamma (allowed, reported)
};

enum class Gauge { FixK, FixSum };

struct SolveOptions {
  double tol = 1e-11;
  int max_iter = 40;
  int max_seeds = 20;
  Gauge gauge = Gauge::FixK;
  std::uint64_t rng_seed = 1;
  int grid_count = 50;
  double grid_scale = 0.85;
  double cert_tol = 1e-8;
  bool normalize_k = true;
};

/// One Bethe equation: shift d*gamma at half-period omega_s, with d = 2j (even
/// family, j = 1..m_s) or d = 2j-1 (odd family, j = 1..m'_s).
struct BetheEquation {
  int s;
  int j;
  bool odd_family;
  int d() const { return odd_family ? 2 * j - 1 : 2 * j; }
};

inline std::vector<BetheEquation> bethe_equations(const Couplings& cpl) {
  std::vector<BetheEquation> eqs;
  for (int s = 0; s < 4; ++s) {
    for (int j = 1; j <= cpl.m[s]; ++j) eqs.push_back({s, j, false});
    for (int j = 1; j <= cpl.m_prime[s]; ++j) eqs.push_back({s, j, true});
  }
  return eqs;
}

namespace detail {

// Dense complex LU solve with partial pivoting (systems here have <= ~25 unknowns).
inline std::vector<cplx> lu_solve(std::vector<cplx> A, std::vector<cplx> b) {
  const std::size_t n = b.size();
  if (A.size() != n * n) throw std::logic_error("lu_solve: shape mismatch");
  std::vector<std::size_t> piv(n);
  for (std::size_t i = 0; i < n; ++i) piv[i] = i;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t best = col;
    double mag = std::abs(A[piv[col] * n + col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double m2 = std::abs(A[piv[r] * n + col]);
      if (m2 > mag) {
        mag = m2;
        best = r;
      }
    }
    if (mag == 0.0) throw std::runtime_error("lu_solve: singular Jacobian");
    std::swap(piv[col], piv[best]);
    const cplx pivval = A[piv[col] * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const cplx f = A[piv[r] * n + col] / pivval;
      A[piv[r] * n + col] = f;
      for (std::size_t c2 = col + 1; c2 < n; ++c2) A[piv[r] * n + c2] -= f * A[piv[col] * n + c2];
      b[piv[r]] -= f * b[piv[col]];
    }
  }
  std::vector<cplx> x(n);
  for (std::size_t i = n; i-- > 0;) {
    cplx acc = b[piv[i]];
    for (std::size_t c2 = i + 1; c2 < n; ++c2) acc -= A[piv[i] * n + c2] * x[c2];
    x[i] = acc / A[piv[i] * n + i];
  }
  return x;
}

inline double canonical_uniform(std::mt19937_64& eng) { return double(eng() >> 11) * 0x1p-53; }

inline cplx random_cell_point(const LatticeContext& ctx, std::mt19937_64& eng, double scale) {
  const double u = canonical_uniform(eng) - 0.5, v = canonical_uniform(eng) - 0.5;
  return 2.0 * scale * (u * ctx.omega1() + v * ctx.omega2());
}

inline cplx wrap_branch(cplx r) {
  return r - cplx(0.0, 2.0 * kPi * std::round(r.imag() / (2.0 * kPi)));
}

inline cplx recenter_branch(cplx r, cplx prev) {
  return r - cplx(0.0, 2.0 * kPi * std::round((r.imag() - prev.imag()) / (2.0 * kPi)));
}

inline double inf_norm(const std::vector<cplx>& v) {
  double n = 0.0;
  for (const cplx& x : v) n = std::max(n, std::abs(x));
  return n;
}

}  // namespace detail

/// psi(z) = e^{kz} prod_i sigma(z + t_i).
inline cplx psi_eval(const LatticeContext& ctx, const BetheState& st, cplx z) {
  cplx v = std::exp(st.k * z);
  for (const cplx& ti : st.t) v *= ctx.sigma(z + ti);
  return v;
}

/// log psi on some branch; usable where psi itself overflows.
inline cplx psi_log(const LatticeContext& ctx, const BetheState& st, cplx z) {
  cplx v = st.k * z;
  for (const cplx& ti : st.t) v += ctx.sigma_log(z + ti);
  return v;
}

/// Taylor coefficients of psi at z0, orders 0..n (product of per-factor series).
inline std::vector<cplx> psi_taylor(const LatticeContext& ctx, const BetheState& st, cplx z0,
                                    std::size_t n) {
  std::vector<cplx> series = detail::exp_series(std::exp(st.k * z0), st.k, n);
  for (const cplx& ti : st.t)
    series = detail::series_mul(series, ctx.sigma_taylor(z0 + ti, n), n);
  return series;
}

/// psi, psi', ..., psi^{(order)} at z. Derivatives come from the Bell-type recursion
/// on the per-factor log derivatives; factors sitting at a sigma zero are handled by
/// the series path inside sigma_taylor.
inline std::vector<cplx> psi_log_derivs(const LatticeContext& ctx, const BetheState& st, cplx z,
                                        std::size_t order) {
  auto series = psi_taylor(ctx, st, z, order);
  double fact = 1.0;
  for (std::size_t j = 0; j <= order; ++j) {
    if (j > 0) fact *= double(j);
    series[j] *= fact;
  }
  return series;
}

/// Residuals r_{s,j} = log(LHS) - log(RHS) of the Bethe system, branch-normalized to
/// Im in (-pi, pi] (or re-centered on `prev` when given).
inline std::vector<cplx> bethe_residual(const OperatorParams& params, const BetheState& st,
                                        const std::vector<cplx>* prev = nullptr) {
  const auto& ctx = params.ctx();
  const auto& cpl = params.couplings();
  if (int(st.t.size()) != cpl.total())
    throw std::invalid_argument("bethe_residual: state has " + std::to_string(st.t.size()) +
                                " parameters, couplings need " + std::to_string(cpl.total()));
  const auto eqs = bethe_equations(cpl);
  const double mt = cpl.total();
  std::vector<cplx> r(eqs.size());
  for (std::size_t e = 0; e < eqs.size(); ++e) {
    const auto& eq = eqs[e];
    const cplx dg = double(eq.d()) * cpl.gamma;
    const cplx ws = ctx.omega(eq.s);
    cplx acc = 2.0 * dg * (mt * ctx.eta(eq.s) - st.k);
    for (const cplx& ti : st.t) {
      const cplx xm = ti + ws - dg, xp = ti + ws + dg;
      if (ctx.lattice_distance(xm) < ctx.pole_tol() || ctx.lattice_distance(xp) < ctx.pole_tol())
        throw SingularEquation(int(e), "sigma factor vanishes at t_i + omega_s -+ d*gamma");
      acc += ctx.sigma_log(xm) - ctx.sigma_log(xp);
    }
    r[e] = prev ? detail::recenter_branch(detail::wrap_branch(acc), (*prev)[e])
                : detail::wrap_branch(acc);
  }
  return r;
}

/// Jacobian of the residual: d r_e / d t_i = zeta(t_i+w_s-dg) - zeta(t_i+w_s+dg),
/// d r_e / d k = -2 d gamma.
inline void bethe_jacobian(const OperatorParams& params, const BetheState& st,
                           std::vector<cplx>& dt, std::vector<cplx>& dk) {
  const auto& ctx = params.ctx();
  const auto& cpl = params.couplings();
  const auto eqs = bethe_equations(cpl);
  const std::size_t m = st.t.size();
  dt.assign(eqs.size() * m, cplx(0.0));
  dk.assign(eqs.size(), cplx(0.0));
  for (std::size_t e = 0; e < eqs.size(); ++e) {
    const cplx dg = double(eqs[e].d()) * cpl.gamma;
    const cplx ws = ctx.omega(eqs[e].s);
    for (std::size_t i = 0; i < m; ++i)
      dt[e * m + i] = ctx.zeta(st.t[i] + ws - dg) - ctx.zeta(st.t[i] + ws + dg);
    dk[e] = -2.0 * dg;
  }
}

/// Deterministic verification grid inside the fundamental cell.
inline std::vector<cplx> default_grid(const LatticeContext& ctx, int count, double scale,
                                      std::uint64_t seed = 0x5eedf00d) {
  std::mt19937_64 eng(seed);
  std::vector<cplx> g;
  g.reserve(count);
  for (int i = 0; i < count; ++i) g.push_back(detail::random_cell_point(ctx, eng, 0.5 * scale));
  return g;
}

struct NewtonOutcome {
  BetheState state;
  double residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Damped Newton iteration at the given gauge. Does not throw on plain
/// non-convergence; singular configurations raise SingularEquation only if the
/// starting point itself is singular.
inline NewtonOutcome newton_correct(const OperatorParams& params, const BetheState& init,
                                    const SolveOptions& opts) {
  NewtonOutcome out;
  out.state = init;
  const std::size_t m = init.t.size();
  std::vector<cplx> r = bethe_residual(params, out.state);
  out.residual_norm = detail::inf_norm(r);
  const cplx sum0 = [&] {
    cplx s = 0.0;
    for (const cplx& ti : init.t) s += ti;
    return s;
  }();
  for (out.iterations = 0; out.iterations < opts.max_iter; ++out.iterations) {
    if (out.residual_norm < opts.tol) {
      out.converged = true;
      return out;
    }
    std::vector<cplx> jt, jk;
    bethe_jacobian(params, out.state, jt, jk);
    const std::size_t n = (opts.gauge == Gauge::FixK) ? m : m + 1;
    std::vector<cplx> A(n * n, cplx(0.0)), rhs(n, cplx(0.0));
    for (std::size_t e = 0; e < m; ++e) {
      for (std::size_t i = 0; i < m; ++i) A[e * n + i] = jt[e * m + i];
      if (opts.gauge == Gauge::FixSum) A[e * n + m] = jk[e];
      rhs[e] = -r[e];
    }
    if (opts.gauge == Gauge::FixSum) {
      for (std::size_t i = 0; i < m; ++i) A[m * n + i] = 1.0;
      cplx s = 0.0;
      for (const cplx& ti : out.state.t) s += ti;
      rhs[m] = -(s - sum0);
    }
    std::vector<cplx> step;
    try {
      step = detail::lu_solve(std::move(A), std::move(rhs));
    } catch (const std::runtime_error&) {
      return out;  // singular Jacobian: report non-convergence
    }
    bool accepted = false;
    for (double alpha = 1.0; alpha > 1.0 / 128.0; alpha *= 0.5) {
      BetheState trial = out.state;
      for (std::size_t i = 0; i < m; ++i) trial.t[i] += alpha * step[i];
      if (opts.gauge == Gauge::FixSum) trial.k += alpha * step[m];
      std::vector<cplx> rt;
      try {
        rt = bethe_residual(params, trial, &r);
      } catch (const SingularEquation&) {
        continue;
      }
      const double norm_t = detail::inf_norm(rt);
      if (norm_t < out.residual_norm * (1.0 - 0.25 * alpha) || norm_t < opts.tol) {
        out.state = std::move(trial);
        r = std::move(rt);
        out.residual_norm = norm_t;
        accepted = true;
        break;
      }
    }
    if (!accepted) return out;
  }
  out.converged = out.residual_norm < opts.tol;
  return out;
}

inline void check_excluded_set(const LatticeContext& ctx, const std::vector<cplx>& t,
                               double tol_scale = 1e-8) {
  const double tol = tol_scale * std::max(1.0, ctx.min_half_period());
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j)
      if (ctx.lattice_distance(t[i] + t[j]) < tol)
        throw RejectedSolution("solution has t_" + std::to_string(i + 1) + " + t_" +
                               std::to_string(j + 1) + " on the period lattice");
}

inline bool has_near_coincidence(const LatticeContext& ctx, const std::vector<cplx>& t) {
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j)
      if (ctx.lattice_distance(t[i] - t[j]) < 1e-6 * std::max(1.0, ctx.min_half_period()))
        return true;
  return false;
}

/// Normalize k to Im(2 gamma k) in (-pi, pi]; when all m'_s = 0 the half shift
/// k -> k + pi i/(2 gamma) is also a symmetry and k is reduced to (-pi/2, pi/2].
inline cplx normalize_k(const Couplings& cpl, cplx k) {
  const cplx g = cpl.gamma;
  cplx y = 2.0 * g * k;
  k -= cplx(0.0, kPi) / g * std::round(y.imag() / (2.0 * kPi));
  if (cpl.all_m_prime_zero()) {
    y = 2.0 * g * k;
    k -= cplx(0.0, kPi) / (2.0 * g) * std::round(y.imag() / kPi);
  }
  return k;
}

/// Eigenvalue epsilon = (L psi)(z*) / psi(z*); z* = 2 gamma m_0 when m_0 > 0,
/// otherwise the admissible grid point maximizing |psi|.
inline cplx eigenvalue(const OperatorParams& params, const BetheState& st) {
  const auto& ctx = params.ctx();
  const auto& cpl = params.couplings();
  auto psi = [&](cplx z) { return psi_eval(ctx, st, z); };
  auto try_at = [&](cplx z) -> std::optional<cplx> {
    try {
      const cplx pz = psi(z);
      if (std::abs(pz) < 1e-12) return std::nullopt;
      return params.apply(psi, z) / pz;
    } catch (const PoleError&) {
      return std::nullopt;
    } catch (const SigmaOverflow&) {
      return std::nullopt;
    }
  };
  if (cpl.m[0] > 0)
    if (auto v = try_at(2.0 * cpl.gamma * double(cpl.m[0]))) return *v;
  // fallback: best grid point
  const auto grid = default_grid(ctx, 64, 0.8);
  std::optional<cplx> best_z;
  double best_mag = -1.0;
  for (const cplx& z : grid) {
    try {
      const double mag = std::abs(psi(z));
      if (mag > best_mag) {
        best_mag = mag;
        best_z = z;
      }
    } catch (const SigmaOverflow&) {
    }
  }
  if (best_z)
    if (auto v = try_at(*best_z)) return *v;
  throw std::runtime_error("eigenvalue: no admissible evaluation point found");
}

/// max over the grid of |(L psi)(z) - eps psi(z)| / max(|eps psi(z)|, floor).
/// Points at coefficient poles, psi zeros, or with badly conditioned cancellation
/// are filtered; fewer than 10 admissible points is an error.
inline double certify_eigen(const OperatorParams& params, const BetheState& st, cplx eps,
                            const std::vector<cplx>& grid) {
  const auto& ctx = params.ctx();
  auto psi = [&](cplx z) { return psi_eval(ctx, st, z); };
  double max_abs_psi = 0.0;
  for (const cplx& z : grid) {
    try {
      max_abs_psi = std::max(max_abs_psi, std::abs(psi(z)));
    } catch (const SigmaOverflow&) {
    }
  }
  if (max_abs_psi == 0.0) throw InsufficientGrid("certify_eigen: psi vanishes on the grid");
  const double floor_scale = 1e-3 * std::abs(eps) * max_abs_psi;
  int used = 0;
  double worst = 0.0;
  for (const cplx& z : grid) {
    cplx lhs, pz;
    double kappa;
    try {
      pz = psi(z);
      if (std::abs(pz) < 1e-6 * max_abs_psi) continue;
      const cplx tg = 2.0 * params.gamma();
      const cplx aa = params.coeff_a(z), bb = params.coeff_b(z), cc = params.coeff_c(z);
      const cplx pp = psi(z + tg), pm = psi(z - tg);
      kappa = std::abs(aa * pp) + std::abs(bb * pm) + std::abs(cc * pz);
      lhs = aa * pp + bb * pm + cc * pz;
    } catch (const PoleError&) {
      continue;
    } catch (const SigmaOverflow&) {
      continue;
    }
    if (kappa > 1e5 * std::max(std::abs(eps * pz), floor_scale)) continue;  // ill-conditioned
    ++used;
    worst = std::max(worst,
                     std::abs(lhs - eps * pz) / std::max(std::abs(eps * pz), floor_scale));
  }
  if (used < 10)
    throw InsufficientGrid("certify_eigen: only " + std::to_string(used) +
                           " admissible grid points");
  return worst;
}

/// Full solve: damped Newton from `init`, resampling t on failure, then validation,
/// k normalization, eigenvalue and certification.
inline BetheSolution solve_newton(const OperatorParams& params, const BetheState& init,
                                  const SolveOptions& opts = {}) {
  const auto& ctx = params.ctx();
  const auto& cpl = params.couplings();
  if (int(init.t.size()) != cpl.total())
    throw std::invalid_argument("solve_newton: init length " + std::to_string(init.t.size()) +
                                " != m_total " + std::to_string(cpl.total()));
  std::mt19937_64 eng(opts.rng_seed);
  NewtonOutcome best;
  for (int attempt = 0; attempt < std::max(1, opts.max_seeds); ++attempt) {
    BetheState start = init;
    if (attempt > 0)
      for (auto& ti : start.t) ti = detail::random_cell_point(ctx, eng, 0.8);
    NewtonOutcome out;
    try {
      out = newton_correct(params, start, opts);
    } catch (const SingularEquation&) {
      if (opts.max_seeds <= 1) throw;
      continue;
    }
    if (out.converged) {
      best = out;
      break;
    }
    if (out.residual_norm < best.residual_norm) best = out;
  }
  if (!best.converged)
    throw SolveError("solve_newton: no convergence", best.residual_norm, best.iterations);

  check_excluded_set(ctx, best.state.t);

  BetheSolution sol;
  sol.state = best.state;
  if (opts.normalize_k) sol.state.k = normalize_k(cpl, sol.state.k);
  sol.residual_norm = detail::inf_norm(bethe_residual(params, sol.state));
  sol.iterations = best.iterations;
  sol.near_coincident_t = has_near_coincidence(ctx, sol.state.t);
  sol.q = std::exp(2.0 * cpl.gamma * sol.state.k);
  sol.eigenvalue = eigenvalue(params, sol.state);
  sol.certificate = certify_eigen(params, sol.state, sol.eigenvalue,
                                  default_grid(ctx, opts.grid_count, opts.grid_scale));
  return sol;
}

struct QSpaceItem {
  int s;
  int j;
  bool odd_family;
  bool translated;  // condition checked at omega_s + 2*omega_1 instead of omega_s
  double residual;
};

struct QSpaceReport {
  std::vector<QSpaceItem> items;
  double evenness = 0.0;     // max |f(z) - f(-z)| / |f|, f = L psi / psi
  double periodicity = 0.0;  // max |f(z + 2 omega_1) - f(z)| / |f|
  double max_condition_residual() const {
    double w = 0.0;
    for (const auto& it : items) w = std::max(w, it.residual);
    return w;
  }
};

/// Verifies that phi = L psi satisfies the defining conditions of the invariant
/// space Q at omega_s and at the translate omega_s + 2 omega_1, and that
/// f = L psi / psi is even and 2 omega_1 periodic on a grid.
inline QSpaceReport q_space_check(const OperatorParams& params, const BetheSolution& sol) {
  const auto& ctx = params.ctx();
  const auto& cpl = params.couplings();
  const double mt = cpl.total();
  auto psi = [&](cplx z) { return psi_eval(ctx, sol.state, z); };
  auto phi = [&](cplx z) { return params.apply(psi, z); };
  QSpaceReport rep;
  const auto eqs = bethe_equations(cpl);
  for (const auto& eq : eqs) {
    for (bool translated : {false, true}) {
      const cplx w = ctx.omega(eq.s) + (translated ? 2.0 * ctx.omega(1) : cplx(0.0));
      // eta(omega) for omega = n1 w1 + n2 w2
      cplx eta_w = ctx.eta(eq.s) + (translated ? 2.0 * ctx.eta(1) : cplx(0.0));
      const cplx dg = double(eq.d()) * cpl.gamma;
      cplx plus, minus;
      try {
        plus = phi(w + dg);
        minus = phi(w - dg);
      } catch (const PoleError&) {
        continue;
      }
      const cplx fac = std::exp(2.0 * dg * mt * eta_w);
      const double scale = std::max({std::abs(plus), std::abs(minus * fac), 1e-30});
      rep.items.push_back(
          {eq.s, eq.j, eq.odd_family, translated, std::abs(plus - minus * fac) / scale});
    }
  }
  const auto grid = default_grid(ctx, 24, 0.7, 0xabcdef12);
  for (const cplx& z : grid) {
    try {
      const cplx f0 = phi(z) / psi(z);
      const cplx fm = phi(-z) / psi(-z);
      const cplx fp = phi(z + 2.0 * ctx.omega(1)) / psi(z + 2.0 * ctx.omega(1));
      const double scale = std::max(std::abs(f0), 1e-30);
      rep.evenness = std::max(rep.evenness, std::abs(f0 - fm) / scale);
      rep.periodicity = std::max(rep.periodicity, std::abs(fp - f0) / scale);
    } catch (const PoleError&) {
    } catch (const SigmaOverflow&) {
    }
  }
  return rep;
}

}  // namespace bc1
