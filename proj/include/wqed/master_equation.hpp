#pragma once

// Lindblad generators: superoperator assembly, adaptive time integration and
// steady states.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>
#include <boost/numeric/odeint.hpp>
#include <unsupported/Eigen/KroneckerProduct>

#include "wqed/hamiltonian.hpp"
#include "wqed/result.hpp"

namespace wqed {

/// Acts on column-stacked density matrices: vec(rho') = L vec(rho).
using Superoperator = Eigen::SparseMatrix<cplx, Eigen::ColMajor>;

namespace detail {

using ColSparse = Eigen::SparseMatrix<cplx, Eigen::ColMajor>;

inline ColSparse sparse_identity(Eigen::Index d) {
  ColSparse I(d, d);
  I.setIdentity();
  return I;
}

inline ColSparse to_col(const SparseMatrix& m) { return ColSparse(m); }

/// H - (i/2) sum_k r_k J_k^dag J_k
inline SparseMatrix effective_hamiltonian(const Operator& H, const std::vector<Jump>& jumps) {
  SparseMatrix heff = H.matrix();
  for (const auto& j : jumps) {
    SparseMatrix jdj = SparseMatrix(j.op.matrix().adjoint()) * j.op.matrix();
    heff -= (0.5 * j.rate) * I * jdj;
  }
  heff.prune(cplx{});
  return heff;
}

}  // namespace detail

inline Superoperator build_liouvillian(const Operator& H, const std::vector<Jump>& jumps) {
  require(H.is_hermitian(), Errc::non_hermitian, "Hamiltonian is not Hermitian");
  const auto d = static_cast<Eigen::Index>(H.dim());
  const auto Id = detail::sparse_identity(d);
  const auto h = detail::to_col(H.matrix());
  Superoperator L = -I * (Superoperator(Eigen::kroneckerProduct(Id, h)) -
                          Superoperator(Eigen::kroneckerProduct(detail::ColSparse(h.transpose()), Id)));
  for (const auto& j : jumps) {
    require(j.rate >= 0, Errc::invalid_parameter, "jump rate must be >= 0");
    if (j.rate == 0) continue;
    const auto J = detail::to_col(j.op.matrix());
    const detail::ColSparse Jc = J.conjugate();
    const detail::ColSparse JdJ = detail::ColSparse(J.adjoint()) * J;
    const detail::ColSparse JdJt = JdJ.transpose();
    L += j.rate * (Superoperator(Eigen::kroneckerProduct(Jc, J)) -
                   0.5 * Superoperator(Eigen::kroneckerProduct(Id, JdJ)) -
                   0.5 * Superoperator(Eigen::kroneckerProduct(JdJt, Id)));
  }
  L.prune(cplx{});
  return L;
}

inline Superoperator build_liouvillian(const Generator& gen) {
  require(gen.drives.empty(), Errc::invalid_parameter,
          "time-dependent generator has no single superoperator");
  return build_liouvillian(gen.H, gen.jumps);
}

inline Vector vectorize(const Matrix& rho) {
  return Eigen::Map<const Vector>(rho.data(), rho.size());
}

inline Matrix unvectorize(const Vector& v, Eigen::Index d) {
  return Eigen::Map<const Matrix>(v.data(), d, d);
}

// -- density-matrix checks ----------------------------------------------------

struct DensityCheck {
  double trace_error = 0;
  double hermiticity_error = 0;
  double min_eigenvalue = 0;
};

inline DensityCheck check_density(const Matrix& rho) {
  DensityCheck c;
  c.trace_error = std::abs(rho.trace() - cplx(1.0));
  c.hermiticity_error = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
  c.min_eigenvalue = es.eigenvalues().minCoeff();
  return c;
}

inline void validate_density(const Matrix& rho) {
  require(rho.rows() == rho.cols(), Errc::dimension_mismatch, "density matrix must be square");
  const auto c = check_density(rho);
  require(c.trace_error <= 1e-8, Errc::invalid_parameter, "density matrix trace != 1");
  require(c.hermiticity_error <= 1e-10, Errc::invalid_parameter, "density matrix not Hermitian");
  require(c.min_eigenvalue >= -1e-8, Errc::invalid_parameter, "density matrix not positive");
}

inline Matrix pure_density(const Vector& psi) { return psi * psi.adjoint(); }

/// Tr over the modes: 2x2 atomic density matrix (levels 0 = g, 1 = e).
inline Matrix atom_reduced(const Matrix& rho, const CompositeSpace& s) {
  Matrix r = Matrix::Zero(2, 2);
  const auto d = s.dim();
  // pair up states that differ only in the atomic level
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (s.code(i) % s.stride(0) != s.code(j) % s.stride(0)) continue;
      r(s.level(i, 0), s.level(j, 0)) += rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  return r;
}

// -- time integration ---------------------------------------------------------

struct IntegrationOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  double initial_dt = 1e-3;
  std::size_t max_steps = 2'000'000;  // between consecutive output times
  std::size_t eig_check_max_dim = 256;
};

namespace detail {

using OdeState = std::vector<cplx>;

template <class System>
void run_dense_output(System&& sys, OdeState& x, const std::vector<double>& t_grid,
                      const IntegrationOptions& opt,
                      const std::function<void(const OdeState&, double)>& observe) {
  namespace ode = boost::numeric::odeint;
  require(t_grid.size() >= 1, Errc::invalid_parameter, "empty time grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    require(t_grid[i] > t_grid[i - 1], Errc::invalid_parameter, "time grid must increase");
  if (t_grid.size() == 1) {
    observe(x, t_grid[0]);
    return;
  }
  auto stepper = ode::make_dense_output(opt.abs_tol, opt.rel_tol, ode::runge_kutta_dopri5<OdeState>());
  try {
    ode::integrate_times(stepper, sys, x, t_grid.begin(), t_grid.end(), opt.initial_dt,
                         [&](const OdeState& s, double t) { observe(s, t); },
                         ode::max_step_checker(static_cast<int>(opt.max_steps)));
  } catch (const ode::odeint_error& e) {
    fail(Errc::step_underflow, std::string("integrator gave up: ") + e.what());
  }
}

}  // namespace detail

/// Evolves rho0 under the generator and samples observables on t_grid.
///
/// Adaptive Dormand-Prince 5(4); the trace is never renormalized, so
/// `trace_residual` is a genuine diagnostic.
inline EvolutionResult integrate_me(const Generator& gen, const Matrix& rho0,
                                    const std::vector<double>& t_grid,
                                    const std::vector<Observable>& observables,
                                    const IntegrationOptions& opt = {}) {
  const auto d = static_cast<Eigen::Index>(gen.dim());
  require(rho0.rows() == d && rho0.cols() == d, Errc::dimension_mismatch,
          "initial state dimension does not match generator");
  validate_density(rho0);
  for (const auto& j : gen.jumps) require(j.rate >= 0, Errc::invalid_parameter, "negative rate");
  require(gen.H.is_hermitian(), Errc::non_hermitian, "Hamiltonian is not Hermitian");

  const SparseMatrix heff = detail::effective_hamiltonian(gen.H, gen.jumps);
  std::vector<SparseMatrix> js;
  for (const auto& j : gen.jumps)
    if (j.rate > 0) js.push_back(std::sqrt(j.rate) * j.op.matrix());
  std::vector<std::pair<SparseMatrix, SparseMatrix>> drive_ops;
  for (const auto& dr : gen.drives)
    drive_ops.emplace_back(dr.op.matrix(), SparseMatrix(dr.op.matrix().adjoint()));

  auto rhs = [&](const detail::OdeState& x, detail::OdeState& dxdt, double t) {
    Eigen::Map<const Matrix> rho(x.data(), d, d);
    Eigen::Map<Matrix> out(dxdt.data(), d, d);
    Matrix A = heff * rho;
    for (std::size_t k = 0; k < drive_ops.size(); ++k) {
      const cplx c = gen.drives[k].coeff(t);
      if (c == cplx{}) continue;
      A += c * (drive_ops[k].first * rho) + std::conj(c) * (drive_ops[k].second * rho);
    }
    A *= -I;
    out = A + A.adjoint();
    for (const auto& J : js) {
      Matrix B = J * rho;
      out += (J * B.adjoint()).adjoint();
    }
  };

  const Operator boundary = truncation_boundary(gen.space());
  EvolutionResult res;
  for (const auto& o : observables) res.names.push_back(o.name);
  res.values.assign(observables.size(), {});
  detail::OdeState x(rho0.data(), rho0.data() + rho0.size());
  detail::run_dense_output(rhs, x, t_grid, opt, [&](const detail::OdeState& s, double t) {
    const Matrix rho = Eigen::Map<const Matrix>(s.data(), d, d);
    res.t.push_back(t);
    for (std::size_t k = 0; k < observables.size(); ++k)
      res.values[k].push_back(observables[k].value(rho, t));
    res.trace_residual.push_back(std::abs(rho.trace() - cplx(1.0)));
    res.max_leakage = std::max(res.max_leakage, boundary.expectation(rho).real());
    if (static_cast<std::size_t>(d) <= opt.eig_check_max_dim) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
      res.min_eigenvalue.push_back(es.eigenvalues().minCoeff());
    }
  });
  return res;
}

/// Same evolution driven directly by a (time-independent) superoperator.
inline EvolutionResult integrate_me(const Superoperator& L, const Matrix& rho0,
                                    const std::vector<double>& t_grid,
                                    const std::vector<Observable>& observables,
                                    const IntegrationOptions& opt = {}) {
  const auto d = rho0.rows();
  require(L.rows() == d * d, Errc::dimension_mismatch, "superoperator does not match state");
  validate_density(rho0);
  auto rhs = [&](const detail::OdeState& x, detail::OdeState& dxdt, double) {
    Eigen::Map<const Vector> v(x.data(), d * d);
    Eigen::Map<Vector> out(dxdt.data(), d * d);
    out = L * v;
  };
  EvolutionResult res;
  for (const auto& o : observables) res.names.push_back(o.name);
  res.values.assign(observables.size(), {});
  detail::OdeState x(rho0.data(), rho0.data() + rho0.size());
  detail::run_dense_output(rhs, x, t_grid, opt, [&](const detail::OdeState& s, double t) {
    const Matrix rho = Eigen::Map<const Matrix>(s.data(), d, d);
    res.t.push_back(t);
    for (std::size_t k = 0; k < observables.size(); ++k)
      res.values[k].push_back(observables[k].value(rho, t));
    res.trace_residual.push_back(std::abs(rho.trace() - cplx(1.0)));
  });
  return res;
}

// -- steady state ---------------------------------------------------------------

struct SteadyStateOptions {
  std::size_t dense_cap = 300;         // above this dimension, relax by time integration
  std::size_t direct_max_dim = 40;     // sparse LU up to here, restarted GMRES above
  std::size_t spectrum_check_max_dim = 16;
  double residual_tol = 1e-10;
  double relax_chunk = 20.0;           // integration window per convergence check
  double relax_max_time = 1e5;
  double relax_tol = 1e-10;
};

struct SteadyState {
  Matrix rho;
  double residual = 0;
  std::string method;
};

/// Null vector of L normalized to unit trace.
///
/// The first row of L is replaced by the trace functional, which makes the
/// bordered system regular exactly when the null space is one-dimensional.
inline SteadyState steady_state(const Superoperator& L, Eigen::Index d,
                                const SteadyStateOptions& opt = {}) {
  require(L.rows() == d * d && L.cols() == d * d, Errc::dimension_mismatch,
          "superoperator does not match dimension");
  double scale = 1.0;
  for (int c = 0; c < L.outerSize(); ++c)
    for (Superoperator::InnerIterator it(L, c); it; ++it) scale = std::max(scale, std::abs(it.value()));
  if (static_cast<std::size_t>(d) <= opt.spectrum_check_max_dim) {
    Eigen::ComplexEigenSolver<Matrix> es(Matrix(L), false);
    std::vector<double> mags;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mags.push_back(std::abs(es.eigenvalues()(i)));
    std::sort(mags.begin(), mags.end());
    if (mags.size() > 1 && mags[1] <= 1e-8 * scale)
      fail(Errc::non_unique_steady_state, "Liouvillian has a degenerate zero eigenvalue");
  }
  // trace row: sum of diagonal entries rho_ii = v[i*(d+1)]
  std::vector<Eigen::Triplet<cplx>> trips;
  trips.reserve(static_cast<std::size_t>(L.nonZeros()) + static_cast<std::size_t>(d));
  for (int c = 0; c < L.outerSize(); ++c)
    for (Superoperator::InnerIterator it(L, c); it; ++it)
      if (it.row() != 0) trips.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index i = 0; i < d; ++i) trips.emplace_back(0, static_cast<int>(i * (d + 1)), 1.0);
  Superoperator B(d * d, d * d);
  B.setFromTriplets(trips.begin(), trips.end());
  B.makeCompressed();
  Vector rhs = Vector::Zero(d * d);
  rhs(0) = 1.0;
  Vector v;
  std::string method;
  if (static_cast<std::size_t>(d) <= opt.direct_max_dim) {
    Eigen::SparseLU<Superoperator> lu;
    lu.compute(B);
    if (lu.info() != Eigen::Success)
      fail(Errc::non_unique_steady_state, "bordered Liouvillian is singular: " + lu.lastErrorMessage());
    v = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !v.allFinite())
      fail(Errc::non_unique_steady_state, "steady-state solve failed");
    method = "bordered-sparse-lu";
  } else {
    // LU fill-in on Kronecker-structured generators grows like a dense factorization
    Eigen::GMRES<Superoperator> gm;
    gm.set_restart(200);
    gm.setTolerance(1e-14);
    gm.setMaxIterations(20000);
    gm.compute(B);
    v = gm.solve(rhs);
    if (gm.info() != Eigen::Success || !v.allFinite())
      fail(Errc::non_unique_steady_state, "iterative steady-state solve did not converge");
    method = "bordered-gmres";
  }
  Matrix rho = unvectorize(v, d);
  rho = 0.5 * (rho + rho.adjoint());
  rho /= rho.trace();
  SteadyState out;
  out.residual = (L * vectorize(rho)).norm();
  out.method = method;
  if (out.residual > opt.residual_tol * scale)
    fail(Errc::non_unique_steady_state,
         "steady-state residual too large (" + std::to_string(out.residual) + ")");
  out.rho = std::move(rho);
  return out;
}

inline SteadyState steady_state(const Generator& gen, const SteadyStateOptions& opt = {}) {
  const auto d = static_cast<Eigen::Index>(gen.dim());
  if (gen.dim() <= opt.dense_cap) return steady_state(build_liouvillian(gen), d, opt);

  // relax from the maximally mixed state until successive windows agree
  Matrix rho = Matrix::Identity(d, d) / static_cast<double>(d);
  double t = 0;
  IntegrationOptions iopt;
  while (t < opt.relax_max_time) {
    Matrix prev = rho;
    std::vector<double> grid{t, t + opt.relax_chunk};
    // integrate_me only samples observables; recover the state via a tiny custom run
    const SparseMatrix heff = detail::effective_hamiltonian(gen.H, gen.jumps);
    std::vector<SparseMatrix> js;
    for (const auto& j : gen.jumps)
      if (j.rate > 0) js.push_back(std::sqrt(j.rate) * j.op.matrix());
    auto rhs = [&](const detail::OdeState& x, detail::OdeState& dxdt, double) {
      Eigen::Map<const Matrix> r(x.data(), d, d);
      Eigen::Map<Matrix> out(dxdt.data(), d, d);
      Matrix A = -I * (heff * r);
      out = A + A.adjoint();
      for (const auto& J : js) {
        Matrix Bm = J * r;
        out += (J * Bm.adjoint()).adjoint();
      }
    };
    detail::OdeState x(rho.data(), rho.data() + rho.size());
    detail::run_dense_output(rhs, x, grid, iopt, [](const detail::OdeState&, double) {});
    rho = Eigen::Map<const Matrix>(x.data(), d, d);
    t += opt.relax_chunk;
    if ((rho - prev).cwiseAbs().maxCoeff() < opt.relax_tol * opt.relax_chunk) {
      SteadyState out;
      rho = 0.5 * (rho + rho.adjoint());
      rho /= rho.trace();
      out.rho = rho;
      out.residual = (rho - prev).norm() / opt.relax_chunk;
      out.method = "time-relaxation";
      return out;
    }
  }
  fail(Errc::non_unique_steady_state, "time relaxation did not converge");
}

}  // namespace wqed
