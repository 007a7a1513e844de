#include <cmath>
#include <random>

#include <unsupported/Eigen/KroneckerProduct>

#include <gtest/gtest.h>

#include "wqed/hamiltonian.hpp"

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

// Dense Kronecker product of `local` at position f among factors of dims `dims`.
Matrix kron_embed(const Matrix& local, std::size_t f, const std::vector<int>& dims) {
  Matrix out = Matrix::Identity(1, 1);
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const Matrix m = k == f ? local : Matrix(Matrix::Identity(dims[k], dims[k]));
    out = Matrix(Eigen::kroneckerProduct(out, m));
  }
  return out;
}

EffectiveModel model(double tau, double phi, int N_A, Frame frame = Frame::rotating) {
  const auto p = params_from_dimensionless(1.0, tau, phi);
  return build_effective_model(p, snap_block_length(p, 2.0), N_A, frame);
}

}  // namespace

TEST(Space, DimensionFormula) {
  for (int n_max = 0; n_max <= 3; ++n_max)
    for (int modes = 0; modes <= 3; ++modes) {
      std::vector<int> nus;
      for (int i = 0; i < modes; ++i) nus.push_back(i - 1);
      const auto s = CompositeSpace::make(nus, n_max);
      EXPECT_EQ(s->dim(), static_cast<std::size_t>(2 * std::pow(n_max + 1, modes)));
      EXPECT_EQ(s->dim(), s->full_product_dim());
    }
}

TEST(Space, CapCountsStates) {
  // states with at most K quanta among 1 qubit + M modes (n_max >= K)
  const auto s = CompositeSpace::make({-1, 0, 1}, 3, 2);
  std::size_t brute = 0;
  for (int q = 0; q <= 1; ++q)
    for (int a = 0; a <= 3; ++a)
      for (int b = 0; b <= 3; ++b)
        for (int c = 0; c <= 3; ++c) brute += (q + a + b + c <= 2);
  EXPECT_EQ(s->dim(), brute);
  for (std::size_t i = 0; i < s->dim(); ++i) EXPECT_LE(s->excitation(i), 2);
}

TEST(Space, Errors) {
  EXPECT_EQ(error_code([] { CompositeSpace::make({0, 0}, 1); }), Errc::invalid_parameter);
  EXPECT_EQ(error_code([] { CompositeSpace::make({0}, -1); }), Errc::invalid_parameter);
  const auto s = CompositeSpace::make({0}, 2);
  EXPECT_EQ(error_code([&] { mode_lowering(s, 3); }), Errc::missing_operator);
  EXPECT_EQ(error_code([&] { embed(Matrix::Identity(2, 2), 1, s); }), Errc::dimension_mismatch);
  EXPECT_EQ(error_code([] { collective_mode(CompositeSpace::qubit_only()); }),
            Errc::missing_operator);
}

TEST(Space, EmbedMatchesKroneckerProduct) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  const std::vector<int> nus{-1, 0, 2};
  const auto s = CompositeSpace::make(nus, 2);
  const std::vector<int> dims{2, 3, 3, 3};
  for (std::size_t f = 0; f < dims.size(); ++f) {
    Matrix local(dims[f], dims[f]);
    for (int r = 0; r < dims[f]; ++r)
      for (int c = 0; c < dims[f]; ++c) local(r, c) = cplx(nd(rng), nd(rng));
    EXPECT_LT((embed(local, f, s).dense() - kron_embed(local, f, dims)).norm(), 1e-13);
  }
  EXPECT_LT((atom_lowering(s).dense() - kron_embed(sigma_minus(), 0, dims)).norm(), 1e-14);
  EXPECT_LT((mode_lowering(s, 2).dense() - kron_embed(destroy(3), 3, dims)).norm(), 1e-14);
}

TEST(Space, CommutatorDefectAtTopLevel) {
  const int n_max = 3;
  const auto s = CompositeSpace::make({0}, n_max);
  const Matrix a = mode_lowering(s, 0).dense();
  const Matrix comm = a * a.adjoint() - a.adjoint() * a;
  for (std::size_t i = 0; i < s->dim(); ++i) {
    const bool top = s->level(i, 1) == n_max;
    const auto k = static_cast<Eigen::Index>(i);
    EXPECT_NEAR(comm(k, k).real(), top ? -n_max : 1.0, 1e-14);
  }
  const Matrix sm = atom_lowering(s).dense();
  EXPECT_LT((sm * sm).norm(), 1e-15);
}

TEST(Space, CappedOperatorsAreProjections) {
  const auto full = CompositeSpace::make({-1, 0, 1}, 2);
  const auto capped = CompositeSpace::make({-1, 0, 1}, 2, 2);
  const Matrix big = collective_mode(full).dense();
  const Matrix small = collective_mode(capped).dense();
  for (std::size_t i = 0; i < capped->dim(); ++i)
    for (std::size_t j = 0; j < capped->dim(); ++j) {
      const auto I0 = *full->find_code(capped->code(i));
      const auto J0 = *full->find_code(capped->code(j));
      EXPECT_EQ(small(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                big(static_cast<Eigen::Index>(I0), static_cast<Eigen::Index>(J0)));
    }
}

TEST(Space, TruncationBoundary) {
  const auto s = CompositeSpace::make({0, 1}, 2);
  const Matrix P = truncation_boundary(s).dense();
  EXPECT_EQ(P(0, 0), cplx(0.0));
  const auto top = *s->index_of({0, 2, 0});
  EXPECT_EQ(P(static_cast<Eigen::Index>(top), static_cast<Eigen::Index>(top)), cplx(1.0));
  const auto c = CompositeSpace::make({0, 1}, 3, 2);
  const auto edge = *c->index_of({1, 1, 0});
  EXPECT_EQ(truncation_boundary(c).dense()(static_cast<Eigen::Index>(edge),
                                           static_cast<Eigen::Index>(edge)),
            cplx(1.0));
}

TEST(Hamiltonian, SingleModeForm) {
  const auto m = model(2.0, pi / 2, 0);
  const auto s = CompositeSpace::make({0}, 3);
  const Matrix H = build_hamiltonian(m, {}, s).dense();
  const Matrix a = mode_lowering(s, 0).dense(), sm = atom_lowering(s).dense();
  const double g0 = m.mode(0).g;
  EXPECT_LT((H - g0 * (a.adjoint() * sm + sm.adjoint() * a)).norm(), 1e-14);
}

TEST(Hamiltonian, DecoupledAtNode) {
  const auto m = model(2.0, 2 * pi, 2);
  const auto s = CompositeSpace::make(m.nus(), 1, 1);
  const Operator H = build_hamiltonian(m, {}, s);
  const Vector e = excited_vacuum(s);
  EXPECT_NEAR(std::abs(H.expectation(e)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(e.dot(H.apply(e))), 0.0, 1e-12);
}

TEST(Hamiltonian, ConservesExcitations) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> gt(0.1, 4.0), ph(0.0, 2 * pi);
  for (int trial = 0; trial < 10; ++trial) {
    for (Frame fr : {Frame::rotating, Frame::lab}) {
      const auto m = model(gt(rng), ph(rng), trial % 3, fr);
      const auto s = CompositeSpace::make(m.nus(), 2);
      DriveDissipationSpec dd;
      dd.frame = fr;
      const Operator H = build_hamiltonian(m, dd, s);
      EXPECT_TRUE(H.is_hermitian());
      const SparseMatrix& M = H.matrix();
      for (int r = 0; r < M.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(M, r); it; ++it)
          EXPECT_EQ(s->excitation(static_cast<std::size_t>(it.row())),
                    s->excitation(static_cast<std::size_t>(it.col())));
    }
  }
}

TEST(Hamiltonian, LabFrameAddsFrequencies) {
  const auto mr = model(1.0, pi, 1, Frame::rotating);
  const auto ml = model(1.0, pi, 1, Frame::lab);
  const auto s = CompositeSpace::make(mr.nus(), 2);
  DriveDissipationSpec lab;
  lab.frame = Frame::lab;
  const Matrix diff = build_hamiltonian(ml, lab, s).dense() - build_hamiltonian(mr, {}, s).dense();
  const Matrix N = excitation_number(s).dense();
  EXPECT_LT((diff - mr.params.omega0 * N).norm(), 1e-9 * mr.params.omega0);
}

TEST(Hamiltonian, DriveTerms) {
  const auto m = model(1.0, pi, 0);
  const auto s = CompositeSpace::make(m.nus(), 1);
  DriveDissipationSpec dd;
  dd.Omega_D = 0.8;
  const Matrix H = build_hamiltonian(m, dd, s).dense() - build_hamiltonian(m, {}, s).dense();
  const Matrix sx = atom_lowering(s).dense() + atom_lowering(s).dense().adjoint();
  EXPECT_LT((H - 0.4 * sx).norm(), 1e-14);

  const auto ml = model(1.0, pi, 0, Frame::lab);
  dd.frame = Frame::lab;
  const auto gen = build_generator(ml, dd, s);
  ASSERT_EQ(gen.drives.size(), 1u);
  EXPECT_NEAR(std::abs(gen.drives[0].coeff(0.3) -
                       0.4 * std::exp(-I * (ml.params.omega0 * 0.3))),
              0.0, 1e-14);
}

TEST(Hamiltonian, Jumps) {
  const auto m = model(1.0, pi, 1);
  const auto s = CompositeSpace::make(m.nus(), 1);
  DriveDissipationSpec dd;
  dd.kappa = 0.1;
  dd.kappa_phi = 0.2;
  dd.gamma = m.gamma;
  auto jumps = build_jumps(m, dd, s);
  ASSERT_EQ(jumps.size(), 3u);
  EXPECT_LT((jumps[2].op.dense() - collective_mode(s).dense()).norm(), 1e-15);
  dd.jump_mode = JumpMode::single_mode;
  jumps = build_jumps(m, dd, s);
  EXPECT_LT((jumps[2].op.dense() - mode_lowering(s, 0).dense()).norm(), 1e-15);
}

TEST(Hamiltonian, Errors) {
  const auto m = model(1.0, pi, 1);
  const auto s = CompositeSpace::make(m.nus(), 1);
  DriveDissipationSpec lab;
  lab.frame = Frame::lab;
  EXPECT_EQ(error_code([&] { build_hamiltonian(m, lab, s); }), Errc::frame_mismatch);
  EXPECT_EQ(error_code([&] { build_hamiltonian(m, {}, CompositeSpace::make({0}, 1)); }),
            Errc::dimension_mismatch);
  DriveDissipationSpec bad;
  bad.kappa = -1;
  EXPECT_EQ(error_code([&] { build_hamiltonian(m, bad, s); }), Errc::invalid_parameter);
  EXPECT_EQ(error_code([] { markovian_qubit(1.0, -0.1, 0.0); }), Errc::invalid_parameter);
}
