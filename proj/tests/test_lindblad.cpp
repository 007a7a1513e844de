#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include <gtest/gtest.h>

#include "wqed/dde.hpp"
#include "wqed/master_equation.hpp"

using namespace wqed;

namespace {

Errc error_code(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::config;
}

Generator random_generator(std::mt19937_64& rng, bool with_jumps) {
  std::normal_distribution<double> nd;
  const auto s = CompositeSpace::make({0}, 2);
  const auto d = static_cast<Eigen::Index>(s->dim());
  Matrix h(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) h(r, c) = cplx(nd(rng), nd(rng));
  h = (0.5 * (h + h.adjoint())).eval();
  Generator gen{Operator(s, h.sparseView()), {}, {}};
  if (with_jumps) {
    gen.jumps.push_back({atom_lowering(s), 0.7, "a"});
    gen.jumps.push_back({mode_lowering(s, 0), 0.3, "b"});
  }
  return gen;
}

// Bloch-equation steady excitation of a resonantly driven qubit.
double bloch_rho_ee(double Omega, double kappa, double kappa_phi) {
  const double g2 = 0.5 * (kappa + kappa_phi);
  return Omega * Omega / (2.0 * (kappa * g2 + Omega * Omega));
}

Matrix excited_qubit() {
  Matrix r = Matrix::Zero(2, 2);
  r(1, 1) = 1.0;
  return r;
}

EffectiveModel small_model(double Gt, double phi, int N_A, Frame frame = Frame::rotating) {
  const auto p = params_from_dimensionless(1.0, Gt, phi);
  return build_effective_model(p, snap_block_length(p, 2.0), N_A, frame);
}

}  // namespace

TEST(Liouvillian, PreservesTrace) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const auto gen = random_generator(rng, true);
    const auto L = build_liouvillian(gen);
    const auto d = static_cast<Eigen::Index>(gen.dim());
    const Vector id = vectorize(Matrix::Identity(d, d));
    EXPECT_LT((Matrix(L).adjoint() * id).norm(), 1e-12);
  }
}

TEST(Liouvillian, UnitarySpectrumIsImaginary) {
  std::mt19937_64 rng(2);
  const auto gen = random_generator(rng, false);
  Eigen::ComplexEigenSolver<Matrix> es(Matrix(build_liouvillian(gen)));
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    EXPECT_NEAR(es.eigenvalues()(i).real(), 0.0, 1e-10);
}

TEST(Liouvillian, RejectsDrivesAndNonHermitian) {
  const auto s = CompositeSpace::qubit_only();
  Generator gen{atom_lowering(s), {}, {}};
  EXPECT_EQ(error_code([&] { build_liouvillian(gen); }), Errc::non_hermitian);
  Generator driven{Operator::zero(s), {{atom_lowering(s), [](double) { return cplx(1.0); }, "x"}}, {}};
  EXPECT_ANY_THROW(build_liouvillian(driven));
}

TEST(Integration, SpontaneousDecay) {
  const double kappa = 0.8;
  const auto gen = markovian_qubit(0.0, kappa, 0.0);
  const auto s = gen.space();
  const Operator pe = atom_lowering(s).adjoint() * atom_lowering(s);
  const auto grid = uniform_grid(0.0, 5.0, 20);
  const auto r = integrate_me(gen, excited_qubit(), grid, {Observable("pe", pe)});
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    EXPECT_NEAR(r.values[0][i], std::exp(-kappa * r.t[i]), 1e-8);
    EXPECT_LT(r.trace_residual[i], 1e-8);
    EXPECT_GT(r.min_eigenvalue[i], -1e-9);
  }
}

TEST(Integration, MatchesMatrixExponential) {
  std::mt19937_64 rng(4);
  const auto gen = random_generator(rng, true);
  const auto d = static_cast<Eigen::Index>(gen.dim());
  const Matrix L = Matrix(build_liouvillian(gen));
  Vector psi = Vector::Zero(d);
  psi(1) = 1.0;
  const Matrix rho0 = pure_density(psi);
  const auto obs = std::vector<Observable>{Observable("n", excitation_number(gen.space())),
                                           Observable("sm", atom_lowering(gen.space()))};
  const std::vector<double> grid{0.0, 0.5, 1.3, 2.0};
  const auto r = integrate_me(gen, rho0, grid, obs);
  const auto r2 = integrate_me(build_liouvillian(gen), rho0, grid, obs);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Matrix Lt = L * grid[i];
    const Matrix rho = unvectorize(Lt.exp() * vectorize(rho0), d);
    for (std::size_t k = 0; k < obs.size(); ++k) {
      EXPECT_NEAR(r.values[k][i], obs[k].value(rho, 0.0), 1e-7);
      EXPECT_NEAR(r2.values[k][i], obs[k].value(rho, 0.0), 1e-7);
    }
  }
}

TEST(Integration, ConservesExcitationsWithoutLoss) {
  const auto m = small_model(2.0, pi / 2, 1);
  const auto s = CompositeSpace::make(m.nus(), 2, 2);
  const auto gen = build_generator(m, {}, s);
  Vector psi = Vector::Zero(static_cast<Eigen::Index>(s->dim()));
  psi(static_cast<Eigen::Index>(*s->index_of({1, 1, 0, 0}))) = std::sqrt(0.5);
  psi(static_cast<Eigen::Index>(*s->index_of({0, 0, 1, 0}))) = std::sqrt(0.5);
  const auto r = integrate_me(gen, pure_density(psi), uniform_grid(0.0, 4.0, 8),
                              {Observable("n", excitation_number(s))});
  // |e,1> has two quanta and the other branch one
  for (double v : r.values[0]) EXPECT_NEAR(v, 1.5, 1e-8);
}

TEST(Integration, LabAndRotatingFramesAgree) {
  const auto mr = small_model(1.0, pi / 2, 1, Frame::rotating);
  const auto ml = small_model(1.0, pi / 2, 1, Frame::lab);
  const auto s = CompositeSpace::make(mr.nus(), 1, 1);
  DriveDissipationSpec dr, dl;
  dr.gamma = dl.gamma = mr.gamma;
  dl.frame = Frame::lab;
  const Operator pe = atom_lowering(s).adjoint() * atom_lowering(s);
  const auto grid = uniform_grid(0.0, 2.0, 8);
  const Matrix rho0 = pure_density(excited_vacuum(s));
  const auto a = integrate_me(build_generator(mr, dr, s), rho0, grid, {Observable("pe", pe)});
  const auto b = integrate_me(build_generator(ml, dl, s), rho0, grid, {Observable("pe", pe)});
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(a.values[0][i], b.values[0][i], 1e-6);
}

TEST(Integration, MarkovianLimitRate) {
  // bad-cavity single mode: population decays at Gamma (1 - cos phi)
  for (double phi : {pi / 2, pi}) {
    const auto m = small_model(0.01, phi, 0);
    const auto s = CompositeSpace::make(m.nus(), 1, 1);
    DriveDissipationSpec dd;
    dd.gamma = m.gamma;
    const Operator pe = atom_lowering(s).adjoint() * atom_lowering(s);
    const auto r = integrate_me(build_generator(m, dd, s), pure_density(excited_vacuum(s)),
                                uniform_grid(0.0, 2.0, 100), {Observable("pe", pe)});
    const double rate = fit_decay_rate(r.t, r.values[0], 2.0);
    EXPECT_NEAR(rate / markovian_rate(1.0, phi), 1.0, 0.05) << "phi=" << phi;
  }
}

TEST(Integration, StepBudget) {
  const auto gen = markovian_qubit(1.0, 1.0, 0.0);
  IntegrationOptions opt;
  opt.max_steps = 1;
  opt.initial_dt = 1e-6;
  EXPECT_EQ(error_code([&] { integrate_me(gen, excited_qubit(), {0.0, 10.0}, {}, opt); }),
            Errc::step_underflow);
}

TEST(Integration, RejectsBadInput) {
  const auto gen = markovian_qubit(1.0, 1.0, 0.0);
  EXPECT_EQ(error_code([&] { integrate_me(gen, Matrix::Identity(2, 2), {0.0, 1.0}, {}); }),
            Errc::invalid_parameter);
  EXPECT_EQ(error_code([&] { integrate_me(gen, Matrix::Identity(3, 3) / 3.0, {0.0, 1.0}, {}); }),
            Errc::dimension_mismatch);
  EXPECT_EQ(error_code([&] { integrate_me(gen, excited_qubit(), {1.0, 0.5}, {}); }),
            Errc::invalid_parameter);
}

TEST(SteadyState, BlochFixedPoint) {
  const double Omega = 1.3, kappa = 0.6;
  const auto ss = steady_state(markovian_qubit(Omega, kappa, 0.0));
  EXPECT_NEAR(ss.rho(1, 1).real(), 0.5 * Omega * Omega / (0.5 * kappa * kappa + Omega * Omega),
              1e-12);
  EXPECT_LT(ss.residual, 1e-12);
}

TEST(SteadyState, RandomDrivesStayBelowHalf) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  for (int i = 0; i < 50; ++i) {
    const double Omega = u(rng), kappa = u(rng), kphi = 0.5 * u(rng);
    const auto ss = steady_state(markovian_qubit(Omega, kappa, kphi));
    const double pe = ss.rho(1, 1).real();
    EXPECT_NEAR(pe, bloch_rho_ee(Omega, kappa, kphi), 1e-10);
    EXPECT_LT(pe, 0.5);
    const auto c = check_density(ss.rho);
    EXPECT_LT(c.trace_error, 1e-12);
    EXPECT_GT(c.min_eigenvalue, -1e-12);
    // coherence bounded by the Bloch ellipse |rho_eg|^2 <= rho_ee (1 - rho_ee)
    EXPECT_LE(std::norm(ss.rho(1, 0)), pe * (1 - pe) + 1e-12);
  }
}

TEST(SteadyState, UndrivenRelaxesToGround) {
  const auto ss = steady_state(markovian_qubit(0.0, 1.0, 0.3));
  EXPECT_NEAR(ss.rho(0, 0).real(), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(ss.rho(1, 1)), 0.0, 1e-12);
}

TEST(SteadyState, ZeroGeneratorIsDegenerate) {
  EXPECT_EQ(error_code([] { steady_state(markovian_qubit(0.0, 0.0, 0.0)); }),
            Errc::non_unique_steady_state);
  const Superoperator zero(4, 4);
  EXPECT_EQ(error_code([&] { steady_state(zero, 2); }), Errc::non_unique_steady_state);
}

TEST(SteadyState, IterativeMatchesRelaxation) {
  const auto m = small_model(0.25, pi, 2);
  const auto s = CompositeSpace::make(m.nus(), 3, 3);
  ASSERT_GT(s->dim(), 40u);
  DriveDissipationSpec dd;
  dd.Omega_D = 1.0;
  dd.gamma = m.gamma;
  const auto gen = build_generator(m, dd, s);
  const auto a = steady_state(gen);
  EXPECT_EQ(a.method, "bordered-gmres");
  SteadyStateOptions relax;
  relax.dense_cap = 10;
  const auto b = steady_state(gen, relax);
  EXPECT_EQ(b.method, "time-relaxation");
  EXPECT_LT((a.rho - b.rho).cwiseAbs().maxCoeff(), 1e-6);
  const Matrix ra = atom_reduced(a.rho, *s);
  EXPECT_NEAR(ra.trace().real(), 1.0, 1e-12);
}

TEST(Density, Helpers) {
  const auto s = CompositeSpace::make({0}, 1);
  const Matrix rho = pure_density(excited_vacuum(s));
  const Matrix r = atom_reduced(rho, *s);
  EXPECT_NEAR(r(1, 1).real(), 1.0, 1e-15);
  EXPECT_LT((unvectorize(vectorize(rho), 4) - rho).norm(), 1e-15);
  Matrix bad = rho;
  bad(0, 1) = 0.3;
  EXPECT_EQ(error_code([&] { validate_density(bad); }), Errc::invalid_parameter);
}
