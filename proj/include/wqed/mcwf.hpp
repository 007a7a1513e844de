#pragma once

// Monte-Carlo wave-function unravelling of a Lindblad generator.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "wqed/hamiltonian.hpp"
#include "wqed/result.hpp"

namespace wqed {

struct McwfOptions {
  double abs_tol = 1e-9;
  double rel_tol = 1e-7;
  double initial_dt = 1e-3;
  double jump_time_tol = 1e-6;
  double leakage_threshold = 1e-3;
  unsigned threads = 1;
  std::size_t chunk = 16;  // trajectories per work item; fixes the reduction order
};

namespace detail {

/// Running mean / M2 (Welford), merged pairwise in a fixed order.
struct Moments {
  std::size_t n = 0;
  std::vector<double> mean, m2;

  explicit Moments(std::size_t len = 0) : mean(len, 0.0), m2(len, 0.0) {}

  void push(const std::vector<double>& x) {
    ++n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(n);
      m2[i] += d * (x[i] - mean[i]);
    }
  }

  void merge(const Moments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n), nt = na + nb;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = o.mean[i] - mean[i];
      mean[i] += d * nb / nt;
      m2[i] += o.m2[i] + d * d * na * nb / nt;
    }
    n += o.n;
  }
};

/// Stream for trajectory `traj`: depends only on (seed, traj).
inline std::mt19937_64 trajectory_rng(std::uint64_t seed, std::uint64_t traj) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(traj), static_cast<std::uint32_t>(traj >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Trajectory-averaged observables with standard errors of the mean.
///
/// Each trajectory follows the non-Hermitian drift until its squared norm
/// drops below a uniform random threshold; the crossing time is located by
/// bisection on the dense-output interpolant and the channel is drawn from the
/// cumulative jump probabilities in jump order. Results are independent of the
/// thread count.
inline EvolutionResult mcwf_evolve(const Generator& gen, const Vector& psi0,
                                   const std::vector<double>& t_grid, std::size_t n_traj,
                                   std::uint64_t seed, const std::vector<Observable>& observables,
                                   const McwfOptions& opt = {}) {
  namespace ode = boost::numeric::odeint;
  using State = std::vector<cplx>;
  const auto d = static_cast<Eigen::Index>(gen.dim());
  require(psi0.size() == d, Errc::dimension_mismatch, "initial state dimension mismatch");
  require(std::abs(psi0.norm() - 1.0) <= 1e-10, Errc::invalid_parameter,
          "initial state must be normalized");
  require(n_traj >= 1, Errc::invalid_parameter, "n_traj must be >= 1");
  require(!t_grid.empty(), Errc::invalid_parameter, "empty time grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    require(t_grid[i] > t_grid[i - 1], Errc::invalid_parameter, "time grid must increase");
  require(gen.H.is_hermitian(), Errc::non_hermitian, "Hamiltonian is not Hermitian");
  for (const auto& j : gen.jumps) require(j.rate >= 0, Errc::invalid_parameter, "negative rate");

  SparseMatrix heff = gen.H.matrix();
  std::vector<SparseMatrix> js;
  for (const auto& j : gen.jumps) {
    if (j.rate == 0) continue;
    js.push_back(std::sqrt(j.rate) * j.op.matrix());
    heff -= (0.5 * I) * SparseMatrix(SparseMatrix(js.back().adjoint()) * js.back());
  }
  const SparseMatrix mih = -I * heff;
  std::vector<std::pair<SparseMatrix, SparseMatrix>> drive_ops;
  for (const auto& dr : gen.drives)
    drive_ops.emplace_back(-I * dr.op.matrix(), -I * SparseMatrix(dr.op.matrix().adjoint()));
  const Operator boundary = truncation_boundary(gen.space());

  auto rhs = [&](const State& x, State& dxdt, double t) {
    Eigen::Map<const Vector> psi(x.data(), d);
    Eigen::Map<Vector> out(dxdt.data(), d);
    out.noalias() = mih * psi;
    for (std::size_t k = 0; k < drive_ops.size(); ++k) {
      const cplx c = gen.drives[k].coeff(t);
      if (c == cplx{}) continue;
      out += c * (drive_ops[k].first * psi) + std::conj(c) * (drive_ops[k].second * psi);
    }
  };

  const std::size_t n_obs = observables.size();
  const std::size_t n_t = t_grid.size();
  // flattened [obs][time] sample vector of one trajectory
  auto run_trajectory = [&](std::size_t traj, std::vector<double>& sample, double& leak) {
    auto rng = detail::trajectory_rng(seed, traj);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    leak = 0.0;
    auto record = [&](const Vector& raw, std::size_t gi) {
      const Vector psi = raw / raw.norm();
      for (std::size_t k = 0; k < n_obs; ++k) sample[k * n_t + gi] = observables[k].value(psi, t_grid[gi]);
      leak = std::max(leak, boundary.expectation(psi).real());
    };
    auto stepper = ode::make_dense_output(opt.abs_tol, opt.rel_tol, ode::runge_kutta_dopri5<State>());
    State x(psi0.data(), psi0.data() + d);
    double t = t_grid.front();
    std::size_t gi = 0;
    record(psi0, gi++);
    double threshold = uni(rng);
    stepper.initialize(x, t, opt.initial_dt);
    State tmp(static_cast<std::size_t>(d));
    std::size_t steps = 0;
    while (gi < n_t) {
      if (++steps > 50'000'000) fail(Errc::step_underflow, "trajectory exceeded step budget");
      const auto [t_old, t_new] = stepper.do_step(rhs);
      if (!(t_new > t_old)) fail(Errc::step_underflow, "step size underflow in trajectory");
      const auto& xs = stepper.current_state();
      const double norm2 = Eigen::Map<const Vector>(xs.data(), d).squaredNorm();
      double t_end = t_new;
      bool jump = norm2 <= threshold;
      if (jump) {
        double lo = t_old, hi = t_new;
        while (hi - lo > opt.jump_time_tol) {
          const double mid = 0.5 * (lo + hi);
          stepper.calc_state(mid, tmp);
          if (Eigen::Map<const Vector>(tmp.data(), d).squaredNorm() <= threshold)
            hi = mid;
          else
            lo = mid;
        }
        t_end = hi;
      }
      while (gi < n_t && t_grid[gi] <= t_end) {
        stepper.calc_state(t_grid[gi], tmp);
        record(Eigen::Map<const Vector>(tmp.data(), d), gi++);
      }
      if (!jump) continue;
      stepper.calc_state(t_end, tmp);
      Eigen::Map<const Vector> psi(tmp.data(), d);
      std::vector<Vector> cand;
      std::vector<double> w;
      double total = 0;
      for (const auto& J : js) {
        cand.push_back(J * psi);
        w.push_back(cand.back().squaredNorm());
        total += w.back();
      }
      Vector next;
      if (total > 0) {
        const double r = uni(rng) * total;
        double acc = 0;
        std::size_t pick = w.size() - 1;
        for (std::size_t k = 0; k < w.size(); ++k) {
          acc += w[k];
          if (r < acc) {
            pick = k;
            break;
          }
        }
        next = cand[pick] / std::sqrt(w[pick]);
      } else {
        next = psi / psi.norm();
      }
      x.assign(next.data(), next.data() + d);
      threshold = uni(rng);
      stepper.initialize(x, t_end, std::max(opt.initial_dt, 1e3 * opt.jump_time_tol));
    }
  };

  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t n_chunks = (n_traj + chunk - 1) / chunk;
  std::vector<detail::Moments> partial(n_chunks, detail::Moments(n_obs * n_t));
  std::vector<double> chunk_leak(n_chunks, 0.0);
  std::atomic<std::size_t> next_chunk{0};
  std::vector<std::exception_ptr> errors(n_chunks);
  auto worker = [&] {
    std::vector<double> sample(n_obs * n_t);
    for (std::size_t c; (c = next_chunk.fetch_add(1)) < n_chunks;) {
      try {
        for (std::size_t i = c * chunk; i < std::min(n_traj, (c + 1) * chunk); ++i) {
          double leak = 0;
          run_trajectory(i, sample, leak);
          partial[c].push(sample);
          chunk_leak[c] = std::max(chunk_leak[c], leak);
        }
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const unsigned n_threads =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, opt.threads), n_chunks));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  detail::Moments total(n_obs * n_t);
  double max_leak = 0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    total.merge(partial[c]);
    max_leak = std::max(max_leak, chunk_leak[c]);
  }

  EvolutionResult res;
  res.t = t_grid;
  for (const auto& o : observables) res.names.push_back(o.name);
  res.values.assign(n_obs, std::vector<double>(n_t));
  res.stderrs.assign(n_obs, std::vector<double>(n_t));
  const double n = static_cast<double>(n_traj);
  for (std::size_t k = 0; k < n_obs; ++k)
    for (std::size_t i = 0; i < n_t; ++i) {
      res.values[k][i] = total.mean[k * n_t + i];
      const double var = n_traj > 1 ? std::max(0.0, total.m2[k * n_t + i] / (n - 1.0)) : 0.0;
      res.stderrs[k][i] = std::sqrt(var / n);
    }
  res.trace_residual.assign(n_t, 0.0);
  res.max_leakage = max_leak;
  res.truncation_warning = max_leak > opt.leakage_threshold;
  res.meta = {{"n_traj", n_traj}, {"seed", seed}, {"backend", "mcwf"}};
  return res;
}

}  // namespace wqed
