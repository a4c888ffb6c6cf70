#pragma once

// Spectral-curve machinery: predictor-corrector continuation of Bethe solutions in
// q = e^{2 gamma k}, the involution nu: t -> -t, and canonicalization modulo the
// lattice/permutation/k-shift symmetries of the solution variety.

#include "bc1/bethe.hpp"

namespace bc1 {

class InvolutionMismatch : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CurveSample {
  cplx q{};
  BetheState state;
  cplx eigenvalue{};
  double residual_norm = 0.0;
  double certificate = 0.0;
  int arc_index = 0;
  int branch_id = 0;
  int eigen_sign = 1;        // half-strip reduction bookkeeping (all-m'-zero case)
  bool excluded_flag = false;  // t_i + t_j fell on the period lattice at this sample
};

struct TraceOptions {
  double corrector_tol = 1e-11;
  double cert_tol = 1e-7;
  int max_corrector_iter = 14;
  int max_step_halvings = 10;
  int grid_count = 50;
  double grid_scale = 0.85;
  int branch_id = 0;
};

struct TraceResult {
  std::vector<CurveSample> samples;
  bool stalled = false;
  std::string diagnostics;
};

namespace detail {

inline CurveSample build_sample(const OperatorParams& params, const BetheState& st,
                                int arc_index, const TraceOptions& opts) {
  CurveSample smp;
  smp.state = st;
  smp.q = std::exp(2.0 * params.gamma() * st.k);
  smp.arc_index = arc_index;
  smp.branch_id = opts.branch_id;
  smp.residual_norm = inf_norm(bethe_residual(params, st));
  try {
    check_excluded_set(params.ctx(), st.t);
  } catch (const RejectedSolution&) {
    smp.excluded_flag = true;
  }
  smp.eigenvalue = eigenvalue(params, st);
  smp.certificate = certify_eigen(params, st, smp.eigenvalue,
                                  default_grid(params.ctx(), opts.grid_count, opts.grid_scale));
  return smp;
}

}  // namespace detail

/// Continuation along the waypoints `q_path` (the first entry must match the seed's q).
/// Tangent predictor from the analytic Jacobian, Newton corrector at fixed k, step
/// halving on failure. A stall returns the partial trace with diagnostics.
inline TraceResult trace(const OperatorParams& params, const BetheSolution& seed,
                         const std::vector<cplx>& q_path, const TraceOptions& opts = {}) {
  const cplx gamma = params.gamma();
  TraceResult result;
  if (q_path.empty()) {
    result.diagnostics = "empty q path";
    return result;
  }
  if (std::abs(q_path.front() - seed.q) > 1e-8 * std::max(1.0, std::abs(seed.q)))
    throw std::invalid_argument("trace: q_path must start at the seed's q");

  BetheState cur = seed.state;
  const std::size_t m = cur.t.size();
  result.samples.push_back(detail::build_sample(params, cur, 0, opts));

  SolveOptions copts;
  copts.tol = opts.corrector_tol;
  copts.max_iter = opts.max_corrector_iter;
  copts.gauge = Gauge::FixK;

  const auto eqs = bethe_equations(params.couplings());
  for (std::size_t wp = 1; wp < q_path.size(); ++wp) {
    const cplx seg = std::log(q_path[wp] / q_path[wp - 1]);  // principal; waypoints are close
    double remaining = 1.0, h = 1.0;
    int halvings = 0;
    while (remaining > 1e-15) {
      const double frac = std::min(h, remaining);
      const cplx dk = seg * frac / (2.0 * gamma);
      // tangent predictor: J_t dt = 2 d_e gamma dk
      BetheState trial = cur;
      trial.k += dk;
      if (m > 0) {
        std::vector<cplx> jt, jk;
        bethe_jacobian(params, cur, jt, jk);
        std::vector<cplx> rhs(eqs.size());
        for (std::size_t e = 0; e < eqs.size(); ++e) rhs[e] = -jk[e] * dk;
        try {
          const auto dt = detail::lu_solve(jt, rhs);
          for (std::size_t i = 0; i < m; ++i) trial.t[i] += dt[i];
        } catch (const std::runtime_error&) {
          // fall through: corrector from the unpredicted point
        }
      }
      bool ok = false;
      NewtonOutcome out;
      try {
        out = newton_correct(params, trial, copts);
        ok = out.converged;
      } catch (const SingularEquation&) {
        ok = false;
      }
      if (ok) {
        cur = out.state;
        remaining -= frac;
        h = std::min(1.0, 2.0 * h);
      } else {
        h *= 0.5;
        if (++halvings > opts.max_step_halvings) {
          result.stalled = true;
          result.diagnostics = "corrector stalled at waypoint " + std::to_string(wp) +
                               " (remaining fraction " + std::to_string(remaining) + ")";
          return result;
        }
      }
    }
    CurveSample smp = detail::build_sample(params, cur, int(wp), opts);
    if (smp.certificate > opts.cert_tol) {
      result.stalled = true;
      result.diagnostics = "certification " + std::to_string(smp.certificate) +
                           " above tolerance at waypoint " + std::to_string(wp);
      return result;
    }
    result.samples.push_back(std::move(smp));
  }
  return result;
}

/// The involution nu: (t, k) -> (-t, -k), q -> 1/q. Re-polishes and re-certifies;
/// the eigenvalue must match the original to tolerance or the call throws.
inline CurveSample involute(const OperatorParams& params, const CurveSample& sample,
                            const TraceOptions& opts = {}) {
  BetheState nu = sample.state;
  for (auto& ti : nu.t) ti = -ti;
  nu.k = -nu.k;
  SolveOptions copts;
  copts.tol = opts.corrector_tol;
  copts.max_iter = opts.max_corrector_iter;
  const auto out = newton_correct(params, nu, copts);
  if (!out.converged)
    throw InvolutionMismatch("involute: corrector failed, residual " +
                             std::to_string(out.residual_norm));
  CurveSample smp = detail::build_sample(params, out.state, sample.arc_index, opts);
  smp.branch_id = sample.branch_id;
  smp.eigen_sign = sample.eigen_sign;
  if (smp.certificate > opts.cert_tol)
    throw InvolutionMismatch("involute: certification failed (" +
                             std::to_string(smp.certificate) + ")");
  const double scale = std::max(1.0, std::abs(sample.eigenvalue));
  if (std::abs(smp.eigenvalue - sample.eigenvalue) > 1e-8 * scale)
    throw InvolutionMismatch("involute: eigenvalue mismatch " +
                             std::to_string(std::abs(smp.eigenvalue - sample.eigenvalue)));
  return smp;
}

/// Canonical representative modulo the three symmetries of the solution set:
/// t_j -> t_j + 2 omega_s with k -> k - 2 eta_s (cell reduction), permutations of t
/// (sorted), and k -> k + pi i / gamma (strip reduction; half strip with an
/// eigenvalue sign flag when all m'_s = 0).
inline CurveSample equivalence_reduce(const OperatorParams& params, const CurveSample& sample) {
  const auto& ctx = params.ctx();
  const cplx gamma = params.gamma();
  CurveSample out = sample;
  for (auto& ti : out.state.t) {
    const CellPoint r = ctx.reduce(ti);
    ti = r.zhat;
    out.state.k += 2.0 * (double(r.n1) * ctx.eta(1) + double(r.n2) * ctx.eta(2));
  }
  std::sort(out.state.t.begin(), out.state.t.end(), [](const cplx& a, const cplx& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  // full-strip reduction (no eigenvalue effect)
  out.state.k -= cplx(0.0, kPi) / gamma *
                 std::round((2.0 * gamma * out.state.k).imag() / (2.0 * kPi));
  if (params.couplings().all_m_prime_zero()) {
    const long n2 = std::lround((2.0 * gamma * out.state.k).imag() / kPi);
    if (n2 != 0) {
      out.state.k -= cplx(0.0, kPi) / (2.0 * gamma) * double(n2);
      if (n2 & 1L) {
        out.eigen_sign = -out.eigen_sign;
        out.eigenvalue = -out.eigenvalue;
      }
    }
  }
  out.q = std::exp(2.0 * gamma * out.state.k);
  return out;
}

/// Shift points of the excluded-set closure: omega_s + 2 j gamma (even family) and
/// omega_s + (2j-1) gamma (odd family), one per equation. The |q| -> 0 end of a
/// branch approaches these.
inline std::vector<cplx> degenerate_points(const OperatorParams& params) {
  const auto eqs = bethe_equations(params.couplings());
  std::vector<cplx> pts;
  pts.reserve(eqs.size());
  for (const auto& eq : eqs)
    pts.push_back(params.ctx().omega(eq.s) + double(eq.d()) * params.gamma());
  return pts;
}

/// max over t_i of the distance (mod 2 Gamma) to the degenerate set; monitors the
/// approach to the q -> 0 limit points.
inline double degenerate_distance(const OperatorParams& params, const BetheState& st) {
  const auto pts = degenerate_points(params);
  const auto& ctx = params.ctx();
  double worst = 0.0;
  for (const cplx& ti : st.t) {
    double best = std::numeric_limits<double>::infinity();
    for (const cplx& p : pts) best = std::min(best, ctx.lattice_distance(ti - p));
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace bc1
