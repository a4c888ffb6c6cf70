#pragma once

// Weierstrass sigma/zeta/wp for an arbitrary complex lattice, evaluated through
// Jacobi theta series with quasi-periodic argument reduction. Everything else in
// this library is built on top of the LatticeContext defined here.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bc1 {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

inline std::string to_display(cplx z) {
  std::ostringstream os;
  os << "(" << z.real() << (z.imag() < 0 ? "" : "+") << z.imag() << "i)";
  return os.str();
}

/// Evaluation requested too close to a lattice pole.
class PoleError : public std::domain_error {
 public:
  PoleError(const std::string& what, cplx nearest)
      : std::domain_error(what + " near lattice point " + to_display(nearest)),
        nearest_(nearest) {}
  cplx nearest_lattice_point() const { return nearest_; }

 private:
  cplx nearest_;
};

/// The quasi-periodicity prefactor of sigma overflowed double range.
class SigmaOverflow : public std::range_error {
 public:
  SigmaOverflow(double exponent)
      : std::range_error("sigma prefactor exponent " + std::to_string(exponent) +
                         " exceeds double range"),
        exponent_(exponent) {}
  double exponent() const { return exponent_; }

 private:
  double exponent_;
};

/// z = zhat + 2*(n1*omega1 + n2*omega2) with zhat in the cell centered at 0.
struct CellPoint {
  cplx zhat;
  long n1 = 0;
  long n2 = 0;
};

/// Nearest point of the period lattice 2*Gamma.
struct LatticeNeighbor {
  cplx point;     // the lattice point itself
  cplx delta;     // z - point
  double dist;    // |delta|
  long n1, n2;    // point = 2*(n1*omega1 + n2*omega2)
};

namespace detail {

inline const std::vector<std::vector<double>>& binomials(std::size_t upto) {
  static const std::vector<std::vector<double>> table = [] {
    std::vector<std::vector<double>> t;
    t.reserve(96);
    for (std::size_t n = 0; n < 96; ++n) {
      std::vector<double> row(n + 1, 1.0);
      for (std::size_t k = 1; k < n; ++k) row[k] = t[n - 1][k - 1] + t[n - 1][k];
      t.push_back(std::move(row));
    }
    return t;
  }();
  if (upto >= table.size()) throw std::logic_error("binomial table exceeded");
  return table;
}

// Truncated power-series helpers (coefficient vectors in h).
inline std::vector<cplx> series_mul(const std::vector<cplx>& a, const std::vector<cplx>& b,
                                    std::size_t n) {
  std::vector<cplx> out(n + 1, cplx(0.0));
  for (std::size_t i = 0; i <= n && i < a.size(); ++i) {
    if (a[i] == cplx(0.0)) continue;
    const std::size_t jmax = std::min(n - i, b.size() ? b.size() - 1 : 0);
    for (std::size_t j = 0; j <= jmax; ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

// exp of a series with vanishing constant term.
inline std::vector<cplx> series_exp(const std::vector<cplx>& p, std::size_t n) {
  std::vector<cplx> e(n + 1, cplx(0.0));
  e[0] = 1.0;
  for (std::size_t m = 1; m <= n; ++m) {
    cplx acc = 0.0;
    for (std::size_t j = 1; j <= m && j < p.size(); ++j)
      acc += static_cast<double>(j) * p[j] * e[m - j];
    e[m] = acc / static_cast<double>(m);
  }
  return e;
}

// Series of c*exp(b*h) up to order n.
inline std::vector<cplx> exp_series(cplx c, cplx b, std::size_t n) {
  std::vector<cplx> out(n + 1);
  out[0] = c;
  for (std::size_t j = 1; j <= n; ++j) out[j] = out[j - 1] * b / static_cast<double>(j);
  return out;
}

}  // namespace detail

struct LatticeOptions {
  double check_tol = 1e-11;       // tolerance for identity checks performed by callers
  double pole_tol_scale = 1e-10;  // pole proximity threshold, relative to min half-period
};

/// Immutable elliptic-function environment for half-periods (omega1, omega2),
/// period lattice 2*Gamma with Gamma = Z*omega1 + Z*omega2.
class LatticeContext {
 public:
  LatticeContext(cplx omega1, cplx omega2, LatticeOptions opts = {}) : opts_(opts) {
    if (omega1 == cplx(0.0) || !std::isfinite(std::abs(omega1)) ||
        !std::isfinite(std::abs(omega2)))
      throw std::invalid_argument("lattice: omega1 must be nonzero and finite");
    tau_ = omega2 / omega1;
    if (!(tau_.imag() > 0.0))
      throw std::invalid_argument(
          "degenerate lattice: Im(omega2/omega1) must be positive, got " +
          std::to_string(tau_.imag()));
    nome_ = std::exp(cplx(0.0, kPi) * tau_);
    if (std::abs(nome_) >= 1.0 - 1e-6)
      throw std::invalid_argument("degenerate lattice: |nome| = " +
                                  std::to_string(std::abs(nome_)) + " too close to 1");
    omega_ = {cplx(0.0), omega1, omega2, -omega1 - omega2};

    // Reduced theta coefficients b_n = (-1)^n q^{n(n+1)}; the common factor
    // 2 q^{1/4} cancels in every ratio used below.
    const double imt = kPi * tau_.imag();
    std::size_t nterms = 4;
    while (nterms < 192 &&
           std::exp(-imt * (double(nterms) * double(nterms) + 0.5 * double(nterms) - 0.25)) *
                   std::pow(2.0 * double(nterms) + 1.0, 3.0) >
               1e-22)
      ++nterms;
    nterms_ = nterms + 2;
    tcoef_.resize(nterms_ + 8);  // extra terms back the error_estimate probe
    tcoef_[0] = 1.0;
    const cplx q2 = nome_ * nome_;
    cplx qp = 1.0;
    for (std::size_t n = 1; n < tcoef_.size(); ++n) {
      qp *= q2;
      tcoef_[n] = -tcoef_[n - 1] * qp;
    }

    // eta constants: eta1 from theta null values, eta2 via Legendre.
    const auto t0 = theta_block(cplx(0.0));
    theta1p0_ = t0[1];
    eta_[0] = 0.0;
    eta_[1] = -kPi * kPi * t0[3] / (12.0 * omega1 * t0[1]);
    eta_[2] = (eta_[1] * omega2 - cplx(0.0, kPi / 2.0)) / omega1;
    eta_[3] = -eta_[1] - eta_[2];

    // Cell reduction matrix for z = 2a*omega1 + 2b*omega2.
    const cplx p1 = 2.0 * omega1, p2 = 2.0 * omega2;
    const double det = p1.real() * p2.imag() - p2.real() * p1.imag();
    inv_[0] = p2.imag() / det;
    inv_[1] = -p2.real() / det;
    inv_[2] = -p1.imag() / det;
    inv_[3] = p1.real() / det;

    min_hp_ = std::min({std::abs(omega1), std::abs(omega2), std::abs(omega_[3])});
    pole_tol_ = opts_.pole_tol_scale * min_hp_;
    taylor_switch_ = 0.3 * min_hp_;

    for (int r = 1; r < 4; ++r) {
      sigma_w_[r] = sigma(omega_[r]);
      log_sigma_w_[r] = std::log(sigma_w_[r]);
    }

    // Invariants from the half-period values of wp.
    const cplx e1 = wp(omega_[1]), e2 = wp(omega_[2]), e3 = wp(omega_[3]);
    g2_ = 2.0 * (e1 * e1 + e2 * e2 + e3 * e3);
    g3_ = 4.0 * e1 * e2 * e3;

    // Laurent coefficients c_n of wp at 0 (wp = 1/z^2 + sum c_n z^{2n-2}).
    wp_c_.assign(kSigmaSeriesK + 1, cplx(0.0));
    wp_c_[2] = g2_ / 20.0;
    wp_c_[3] = g3_ / 28.0;
    for (std::size_t k = 4; k <= kSigmaSeriesK; ++k) {
      cplx s = 0.0;
      for (std::size_t mm = 2; mm <= k - 2; ++mm) s += wp_c_[mm] * wp_c_[k - mm];
      wp_c_[k] = 3.0 * s / ((2.0 * double(k) + 1.0) * (double(k) - 3.0));
    }
  }

  cplx omega(int s) const { return omega_[s]; }
  cplx omega1() const { return omega_[1]; }
  cplx omega2() const { return omega_[2]; }
  cplx omega3() const { return omega_[3]; }
  cplx eta(int s) const { return eta_[s]; }
  cplx tau() const { return tau_; }
  cplx nome() const { return nome_; }
  cplx g2() const { return g2_; }
  cplx g3() const { return g3_; }
  double check_tol() const { return opts_.check_tol; }
  double pole_tol() const { return pole_tol_; }
  double min_half_period() const { return min_hp_; }

  /// Reduce z into the fundamental cell centered at 0.
  CellPoint reduce(cplx z) const {
    const double a = inv_[0] * z.real() + inv_[1] * z.imag();
    const double b = inv_[2] * z.real() + inv_[3] * z.imag();
    CellPoint r;
    r.n1 = std::lround(a);
    r.n2 = std::lround(b);
    r.zhat = z - 2.0 * (double(r.n1) * omega_[1] + double(r.n2) * omega_[2]);
    return r;
  }

  /// Nearest point of 2*Gamma (scans the reduced cell's neighbor corners, so it
  /// is correct for skewed lattices as well).
  LatticeNeighbor nearest_lattice_point(cplx z) const {
    const CellPoint r = reduce(z);
    LatticeNeighbor best;
    double best_n2 = std::numeric_limits<double>::infinity();
    for (long dn = -1; dn <= 1; ++dn)
      for (long dm = -1; dm <= 1; ++dm) {
        const cplx pt = 2.0 * (double(r.n1 + dn) * omega_[1] + double(r.n2 + dm) * omega_[2]);
        const cplx d = z - pt;
        const double n2 = d.real() * d.real() + d.imag() * d.imag();
        if (n2 < best_n2) {
          best_n2 = n2;
          best = {pt, d, 0.0, r.n1 + dn, r.n2 + dm};
        }
      }
    best.dist = std::sqrt(best_n2);
    return best;
  }

  /// Distance from z to the period lattice 2*Gamma.
  double lattice_distance(cplx z) const { return nearest_lattice_point(z).dist; }

  /// Weierstrass sigma. Entire, odd, sigma'(0) = 1; exact zero on 2*Gamma.
  cplx sigma(cplx z) const {
    const CellPoint r = reduce(z);
    const cplx base = sigma_cell(r.zhat);
    if (r.n1 == 0 && r.n2 == 0) return base;
    const cplx X = quasi_exponent(r);
    if (X.real() > 690.0) throw SigmaOverflow(X.real());
    const double sign = ((r.n1 + r.n2 + r.n1 * r.n2) & 1L) ? -1.0 : 1.0;
    return sign * base * std::exp(X);
  }

  /// log sigma(z) on some branch; safe for arguments where sigma itself overflows.
  cplx sigma_log(cplx z) const {
    const CellPoint r = reduce(z);
    const cplx base = sigma_cell(r.zhat);
    const double parity = ((r.n1 + r.n2 + r.n1 * r.n2) & 1L) ? kPi : 0.0;
    return std::log(base) + quasi_exponent(r) + cplx(0.0, parity);
  }

  /// Weierstrass zeta: zeta(z) = sigma'(z)/sigma(z), simple poles with residue 1 on 2*Gamma.
  cplx zeta(cplx z) const {
    const CellPoint r = reduce(z);
    require_regular(z, "zeta");
    const auto th = theta_block(vof(r.zhat), 1);
    return eta_[1] * r.zhat / omega_[1] + (kPi / (2.0 * omega_[1])) * th[1] / th[0] +
           2.0 * (double(r.n1) * eta_[1] + double(r.n2) * eta_[2]);
  }

  /// Weierstrass wp = -zeta'.
  cplx wp(cplx z) const {
    const CellPoint r = reduce(z);
    require_regular(z, "wp");
    const auto th = theta_block(vof(r.zhat), 2);
    const cplx lt = th[1] / th[0];
    const cplx s = kPi / (2.0 * omega_[1]);
    return -eta_[1] / omega_[1] - s * s * (th[2] / th[0] - lt * lt);
  }

  cplx wp_prime(cplx z) const {
    const CellPoint r = reduce(z);
    require_regular(z, "wp_prime");
    const auto th = theta_block(vof(r.zhat));
    const cplx lt = th[1] / th[0];
    const cplx s = kPi / (2.0 * omega_[1]);
    return -s * s * s * (th[3] / th[0] - 3.0 * lt * th[2] / th[0] + 2.0 * lt * lt * lt);
  }

  /// wp, wp', ..., wp^{(nmax)} via the differentiated cubic: wp'' = 6 wp^2 - g2/2.
  std::vector<cplx> wp_derivs(cplx z, std::size_t nmax) const {
    std::vector<cplx> p(nmax + 1);
    p[0] = wp(z);
    if (nmax >= 1) p[1] = wp_prime(z);
    if (nmax >= 2) p[2] = 6.0 * p[0] * p[0] - g2_ / 2.0;
    const auto& B = detail::binomials(nmax);
    for (std::size_t n = 1; n + 2 <= nmax; ++n) {
      cplx acc = 0.0;
      for (std::size_t j = 0; j <= n; ++j) acc += B[n][j] * p[j] * p[n - j];
      p[n + 2] = 6.0 * acc;
    }
    return p;
  }

  /// Shifted sigma: sigma_0 = sigma; sigma_r(z) = e^{-eta_r z} sigma(z+omega_r)/sigma(omega_r),
  /// even with sigma_r(0) = 1 for r = 1,2,3.
  cplx sigma_shifted(int r, cplx z) const {
    if (r == 0) return sigma(z);
    return std::exp(-eta_[r] * z) * sigma(z + omega_[r]) / sigma_w_[r];
  }

  cplx sigma_shifted_log(int r, cplx z) const {
    if (r == 0) return sigma_log(z);
    return -eta_[r] * z + sigma_log(z + omega_[r]) - log_sigma_w_[r];
  }

  /// zeta_p(z) = sigma_p'(z)/sigma_p(z) = -eta_p + zeta(z + omega_p).
  cplx zeta_shifted(int p, cplx z) const {
    if (p == 0) return zeta(z);
    return -eta_[p] + zeta(z + omega_[p]);
  }

  /// Distance from z to the zero set of sigma_p (= omega_p + 2*Gamma).
  double shifted_zero_distance(int p, cplx z) const { return lattice_distance(z - omega_[p]); }

  /// Taylor coefficients of sigma(x0 + h) in h, orders 0..n. Stays accurate at and
  /// near lattice zeros by switching to the series expansion of sigma about 0.
  std::vector<cplx> sigma_taylor(cplx x0, std::size_t n) const {
    const LatticeNeighbor nb = nearest_lattice_point(x0);
    if (nb.dist >= taylor_switch_) {
      // log-derivative (Bell) route at a regular, well-separated point
      const cplx val = sigma(x0);
      std::vector<cplx> u(n + 1);  // u[j] = (log sigma)^{(j)}(x0), j >= 1
      if (n >= 1) u[1] = zeta(x0);
      if (n >= 2) {
        const auto p = wp_derivs(x0, n >= 2 ? n - 2 : 0);
        for (std::size_t j = 2; j <= n; ++j) u[j] = -p[j - 2];
      }
      std::vector<cplx> d(n + 1);  // derivatives of sigma
      d[0] = val;
      const auto& B = detail::binomials(n);
      for (std::size_t mth = 0; mth + 1 <= n; ++mth) {
        cplx acc = 0.0;
        for (std::size_t i = 0; i <= mth; ++i) acc += B[mth][i] * u[i + 1] * d[mth - i];
        d[mth + 1] = acc;
      }
      double fact = 1.0;
      for (std::size_t j = 0; j <= n; ++j) {
        if (j > 0) fact *= double(j);
        d[j] /= fact;
      }
      return d;
    }
    // series about the nearest lattice zero, carried back by the quasi-period factor:
    // sigma(x0+h) = sign * exp(2 eta_w (delta + omega_w + h)) * sigma0(delta + h)
    const cplx delta = nb.delta;
    const std::size_t ns = n + 28;
    std::vector<cplx> logp(ns + 1, cplx(0.0));
    for (std::size_t kk = 2; kk <= kSigmaSeriesK && 2 * kk <= ns; ++kk)
      logp[2 * kk] = -wp_c_[kk] / (2.0 * double(kk) * (2.0 * double(kk) - 1.0));
    const auto eseries = detail::series_exp(logp, ns);
    // sigma0 coefficients a_i: sigma0(u) = u * exp(P(u)) -> a_i = eseries[i-1]
    // shift to u = delta + h: S[j] = sum_i a_i C(i,j) delta^{i-j}
    const auto& B = detail::binomials(ns);
    std::vector<cplx> S(n + 1, cplx(0.0));
    for (std::size_t j = 0; j <= n; ++j) {
      cplx dp = 1.0;
      for (std::size_t i = j; i <= ns; ++i) {
        const cplx ai = (i == 0) ? cplx(0.0) : eseries[i - 1];
        S[j] += ai * B[i][j] * dp;
        dp *= delta;
      }
    }
    const cplx eta_w = double(nb.n1) * eta_[1] + double(nb.n2) * eta_[2];
    const cplx omega_w = double(nb.n1) * omega_[1] + double(nb.n2) * omega_[2];
    const double sign = ((nb.n1 + nb.n2 + nb.n1 * nb.n2) & 1L) ? -1.0 : 1.0;
    const cplx c0 = sign * std::exp(2.0 * eta_w * (delta + omega_w));
    return detail::series_mul(detail::exp_series(c0, 2.0 * eta_w, n), S, n);
  }

  /// Re-evaluates sigma and zeta with a longer series tail; returns the relative
  /// difference as a cheap truncation-error estimate.
  double error_estimate(cplx z) const {
    const CellPoint r = reduce(z);
    const cplx v = vof(r.zhat);
    const auto a = theta_block(v, nterms_, 1);
    const auto b = theta_block(v, nterms_ + 8, 1);
    double worst = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double scale = std::max(std::abs(b[i]), 1e-300);
      worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
  }

 private:
  static constexpr std::size_t kSigmaSeriesK = 24;

  cplx vof(cplx zhat) const { return kPi * zhat / (2.0 * omega_[1]); }

  cplx quasi_exponent(const CellPoint& r) const {
    const cplx eta_w = double(r.n1) * eta_[1] + double(r.n2) * eta_[2];
    const cplx omega_w = double(r.n1) * omega_[1] + double(r.n2) * omega_[2];
    return 2.0 * eta_w * (r.zhat + omega_w);
  }

  // sigma on the reduced cell (no quasi-period factor beyond the Gaussian).
  cplx sigma_cell(cplx zhat) const {
    const auto th = theta_block(vof(zhat), 0);
    return (2.0 * omega_[1] / kPi) * std::exp(eta_[1] * zhat * zhat / (2.0 * omega_[1])) *
           th[0] / theta1p0_;
  }

  void require_regular(cplx z, const char* fn) const {
    const LatticeNeighbor nb = nearest_lattice_point(z);
    if (nb.dist < pole_tol_)
      throw PoleError(std::string(fn) + ": argument " + to_display(z) + " too close to a pole",
                      nb.point);
  }

  // Theta(v), Theta'(v), Theta''(v), Theta'''(v) for the reduced theta series
  // Theta(v) = sum_n b_n sin((2n+1)v); only orders <= upto are accumulated.
  std::array<cplx, 4> theta_block(cplx v, int upto = 3) const {
    return theta_block(v, nterms_, upto);
  }

  std::array<cplx, 4> theta_block(cplx v, std::size_t terms, int upto) const {
    // sin/cos of the complex v from three real transcendentals
    const double sa = std::sin(v.real()), ca = std::cos(v.real());
    const double eb = std::exp(v.imag()), emb = 1.0 / eb;
    const double ch = 0.5 * (eb + emb), sh = 0.5 * (eb - emb);
    const cplx s1(sa * ch, ca * sh), c1(ca * ch, -sa * sh);
    const cplx s2 = 2.0 * s1 * c1, c2 = c1 * c1 - s1 * s1;
    cplx sn = s1, cn = c1;
    std::array<cplx, 4> acc{cplx(0.0), cplx(0.0), cplx(0.0), cplx(0.0)};
    for (std::size_t nth = 0; nth < terms && nth < tcoef_.size(); ++nth) {
      const cplx w = tcoef_[nth];
      const double f = 2.0 * double(nth) + 1.0;
      acc[0] += w * sn;
      if (upto >= 1) acc[1] += w * f * cn;
      if (upto >= 2) acc[2] -= w * f * f * sn;
      if (upto >= 3) acc[3] -= w * f * f * f * cn;
      const cplx ns = sn * c2 + cn * s2;
      cn = cn * c2 - sn * s2;
      sn = ns;
    }
    return acc;
  }

  LatticeOptions opts_;
  std::array<cplx, 4> omega_{};
  std::array<cplx, 4> eta_{};
  cplx tau_{}, nome_{};
  cplx theta1p0_{};
  std::array<cplx, 4> sigma_w_{};
  std::array<cplx, 4> log_sigma_w_{};
  cplx g2_{}, g3_{};
  std::vector<cplx> tcoef_;
  std::vector<cplx> wp_c_;
  std::size_t nterms_ = 0;
  std::array<double, 4> inv_{};
  double min_hp_ = 0.0, pole_tol_ = 0.0, taylor_switch_ = 0.0;
};

}  // namespace bc1
