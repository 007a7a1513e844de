#pragma once

// Single-excitation emission in front of a mirror: the delay equation
//   eps'(t) = -Gamma/2 eps(t) + Gamma/2 e^{i phi} eps(t - tau) Theta(t - tau),  eps(0) = 1
// solved by the method of steps, its closed-form series, and the Markovian rates.

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <vector>

#include "wqed/core.hpp"

namespace wqed {

struct AmplitudeSeries {
  double dt = 0.0;
  std::vector<double> t;
  std::vector<cplx> eps;

  std::vector<double> population() const {
    std::vector<double> p(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) p[i] = std::norm(eps[i]);
    return p;
  }
};

namespace detail {

// Cubic Hermite interpolation on [0, h] with end values/derivatives.
inline cplx hermite(cplx y0, cplx d0, cplx y1, cplx d1, double h, double s) {
  const double u = s / h;
  const double u2 = u * u, u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * y0 + (u3 - 2 * u2 + u) * h * d0 + (-2 * u3 + 3 * u2) * y1 +
         (u3 - u2) * h * d1;
}

}  // namespace detail

/// Fixed-step fourth-order integration on a delay-commensurate grid.
///
/// History values are read back by exact index offset; the half-step stages
/// of each step need the history between grid points, which comes from a
/// cubic Hermite interpolant built from the stored values and one-sided
/// derivatives (the only derivative jump sits at t = tau, a grid point).
inline AmplitudeSeries solve_delay_ode(double Gamma, double tau, double phi, double t_max,
                                       double dt) {
  require(Gamma > 0 && tau > 0, Errc::invalid_parameter, "Gamma and tau must be > 0");
  require(dt > 0, Errc::invalid_parameter, "dt must be > 0");
  require(dt <= tau, Errc::resolution, "dt must not exceed tau");
  require(t_max >= tau, Errc::invalid_parameter, "t_max must be >= tau");
  const double ratio = tau / dt;
  const long M = std::lround(ratio);
  require(std::abs(ratio - static_cast<double>(M)) <= 1e-9 * ratio, Errc::grid,
          "dt must divide tau exactly");

  const long n_steps = static_cast<long>(std::ceil(t_max / dt - 1e-9));
  const cplx feedback = 0.5 * Gamma * std::exp(I * phi);
  const double decay = 0.5 * Gamma;

  AmplitudeSeries out;
  out.dt = dt;
  out.t.resize(n_steps + 1);
  out.eps.resize(n_steps + 1);
  // one-sided derivatives at grid points
  std::vector<cplx> d_right(n_steps + 1), d_left(n_steps + 1);

  auto delayed_grid = [&](long j) -> cplx { return j >= 0 ? out.eps[j] : cplx{}; };
  // history on [t_j, t_{j+1}] at offset s, for the shifted argument (j may be < 0)
  auto history = [&](long j, double s) -> cplx {
    if (j < 0) return {};
    if (s <= 0) return out.eps[j];
    return detail::hermite(out.eps[j], d_right[j], out.eps[j + 1], d_left[j + 1], dt, s);
  };

  out.t[0] = 0.0;
  out.eps[0] = 1.0;
  auto set_derivs = [&](long k) {
    const cplx base = -decay * out.eps[k];
    d_left[k] = base + (k > M ? feedback * delayed_grid(k - M) : cplx{});
    d_right[k] = base + (k >= M ? feedback * delayed_grid(k - M) : cplx{});
  };
  set_derivs(0);

  for (long k = 0; k < n_steps; ++k) {
    const long j = k - M;  // history interval index for this step
    const cplx y = out.eps[k];
    const cplx h0 = history(j, 0.0);
    const cplx hm = history(j, 0.5 * dt);
    const cplx h1 = history(j, dt);
    const cplx k1 = -decay * y + feedback * h0;
    const cplx k2 = -decay * (y + 0.5 * dt * k1) + feedback * hm;
    const cplx k3 = -decay * (y + 0.5 * dt * k2) + feedback * hm;
    const cplx k4 = -decay * (y + dt * k3) + feedback * h1;
    out.eps[k + 1] = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.t[k + 1] = static_cast<double>(k + 1) * dt;
    set_derivs(k + 1);
  }
  return out;
}

/// Closed form obtained by unrolling the method of steps:
/// eps(t) = sum_{n=0}^{floor(t/tau)} (Gamma e^{i phi}/2)^n (t - n tau)^n / n! e^{-Gamma (t - n tau)/2}.
inline cplx analytic_series(double Gamma, double tau, double phi, double t) {
  require(Gamma > 0 && tau > 0, Errc::invalid_parameter, "Gamma and tau must be > 0");
  require(t >= 0, Errc::invalid_parameter, "t must be >= 0");
  const long n_max = static_cast<long>(std::floor(t / tau));
  cplx sum{};
  for (long n = 0; n <= n_max; ++n) {
    const double u = t - static_cast<double>(n) * tau;
    if (u < 0 || (n > 0 && u == 0)) break;
    double log_mag = -0.5 * Gamma * u - std::lgamma(static_cast<double>(n) + 1.0);
    if (n > 0) log_mag += static_cast<double>(n) * std::log(0.5 * Gamma * u);
    sum += std::exp(log_mag) * std::exp(I * (static_cast<double>(n) * phi));
  }
  return sum;
}

/// Population decay rate in the short-delay limit, Gamma (1 - cos phi).
inline double markovian_rate(double Gamma, double phi) {
  require(Gamma > 0, Errc::invalid_parameter, "Gamma must be > 0");
  const double s = std::sin(0.5 * phi);
  return 2.0 * Gamma * s * s;
}

/// Bad-cavity population decay rate 4 g0^2 / gamma. The amplitude decays at half this rate.
inline double purcell_rate(double g0, double gamma) {
  require(gamma > 0, Errc::invalid_parameter, "gamma must be > 0");
  return 4.0 * g0 * g0 / gamma;
}

/// Earliest full delay window over which the population stops changing
/// (|p(t) - p(t - tau)| < tol for every t in the window). Returns the population
/// at the end of that window.
inline std::optional<double> detect_plateau(const AmplitudeSeries& s, double tau,
                                            double tol = 1e-6) {
  const long M = std::lround(tau / s.dt);
  const auto p = s.population();
  const long n = static_cast<long>(p.size());
  long run = 0;
  for (long k = M; k < n; ++k) {
    if (std::abs(p[k] - p[k - M]) < tol) {
      if (++run > M) return p[k];
    } else {
      run = 0;
    }
  }
  return std::nullopt;
}

/// Least-squares rate of p(t) ~ A exp(-rate t) over samples with t <= t_end.
inline double fit_decay_rate(const std::vector<double>& t, const std::vector<double>& p,
                             double t_end) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  long n = 0;
  for (std::size_t i = 0; i < t.size() && i < p.size(); ++i) {
    if (t[i] > t_end) break;
    if (p[i] <= 0) continue;
    const double y = std::log(p[i]);
    sx += t[i];
    sy += y;
    sxx += t[i] * t[i];
    sxy += t[i] * y;
    ++n;
  }
  require(n >= 2, Errc::invalid_parameter, "need at least two samples to fit a rate");
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -slope;
}

inline void write_csv(std::ostream& os, const AmplitudeSeries& s) {
  os << "t,re_eps,im_eps,population\n";
  char buf[160];
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10e,%.12e,%.12e,%.12e\n", s.t[i], s.eps[i].real(),
                  s.eps[i].imag(), std::norm(s.eps[i]));
    os << buf;
  }
}

}  // namespace wqed
