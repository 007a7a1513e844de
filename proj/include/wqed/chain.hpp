#pragma once

// Discretized semi-infinite waveguide: a tight-binding chain with a hard wall
// behind site 1 and the atom attached to site n0. Exact propagation in the
// sector of at most two quanta, plus the block (A | B) normal-mode analysis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "wqed/core.hpp"
#include "wqed/result.hpp"

namespace wqed {

/// Lattice units: spacing 1, hopping J. omega0 = omega_c - 2 J cos k0.
struct ChainSpec {
  int N = 0;           // sites 1..N
  double omega_c = 0;  // on-site frequency
  double J = 1.0;
  double g_disc = 0;
  int n0 = 0;          // atom site
  double k0 = 0;
  int N_A_sites = 0;   // block A = sites 1..N_A_sites

  // calibration targets (user units) and conversion
  double Gamma = 1.0;
  double tau = 0.0;
  double phi = 0.0;
  double time_unit = 1.0;  // lattice time per user time unit

  double v() const { return 2.0 * J * std::sin(k0); }
  double omega0() const { return omega_c - 2.0 * J * std::cos(k0); }
  double Gamma_lattice() const { return 2.0 * g_disc * g_disc / v(); }
  double tau_lattice() const { return 2.0 * n0 / v(); }

  void validate() const {
    require(N >= 1 && n0 >= 1 && J > 0, Errc::invalid_parameter, "bad chain size or hopping");
    require(n0 <= N_A_sites && N_A_sites < N, Errc::invalid_parameter,
            "need n0 <= N_A_sites < N");
    require(g_disc >= 0, Errc::invalid_parameter, "g_disc must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const ChainSpec& s) {
  j = nlohmann::json{{"N", s.N},         {"omega_c", s.omega_c},     {"J", s.J},
                     {"g_disc", s.g_disc}, {"n0", s.n0},             {"k0", s.k0},
                     {"N_A_sites", s.N_A_sites}, {"v_lattice", s.v()}, {"Gamma", s.Gamma},
                     {"tau", s.tau},     {"phi", s.phi},             {"time_unit", s.time_unit}};
}

/// Picks the branch k0 = (phi + 2 pi m) / (2 n0) inside [0.2 pi, 0.8 pi]
/// closest to the band center (the smaller k0 on a tie), then matches
/// Gamma tau and sizes the chain so nothing returns from the far end before
/// `t_max` (user units).
inline ChainSpec calibrate_chain(double Gamma, double tau, double phi, int sites_per_delay,
                                 double t_max, int margin = 50, double J = 1.0) {
  require(Gamma > 0 && tau > 0, Errc::invalid_parameter, "Gamma and tau must be > 0");
  require(sites_per_delay >= 1, Errc::invalid_parameter, "sites_per_delay must be >= 1");
  require(t_max >= 0 && margin >= 0, Errc::invalid_parameter, "t_max and margin must be >= 0");
  const int n0 = sites_per_delay;
  const double lo = 0.2 * pi, hi = 0.8 * pi;
  const double step = pi / n0;
  const double k_first = phi / (2.0 * n0);
  // all branches k_first + m step with m integer
  const long m_lo = static_cast<long>(std::ceil((lo - k_first) / step - 1e-12));
  const long m_hi = static_cast<long>(std::floor((hi - k_first) / step + 1e-12));
  if (m_lo > m_hi) fail(Errc::calibration, "no wavevector branch inside the band window");
  double best = 0;
  bool found = false;
  for (long m = m_lo; m <= m_hi; ++m) {
    const double k = k_first + static_cast<double>(m) * step;
    if (!found || std::abs(k - 0.5 * pi) < std::abs(best - 0.5 * pi) - 1e-12) {
      best = k;
      found = true;
    }
  }
  ChainSpec s;
  s.J = J;
  s.k0 = best;
  s.n0 = n0;
  s.omega_c = 2.0 * J * std::cos(best);  // atom at omega0 = 0
  const double v = s.v();
  const double gamma_lat = Gamma * tau * v / (2.0 * n0);
  s.g_disc = std::sqrt(0.5 * gamma_lat * v);
  s.Gamma = Gamma;
  s.tau = tau;
  s.phi = phi;
  s.time_unit = Gamma / gamma_lat;
  const double t_lat = t_max * s.time_unit;
  s.N = n0 + static_cast<int>(std::ceil(v * t_lat)) + margin;
  s.N_A_sites = std::min(2 * n0, s.N - 1);
  return s;
}

// -- sector basis --------------------------------------------------------------

/// States with an atom level and at most two photons on the chain.
/// A photon pair is stored as sorted sites (i <= j); 0 means "no photon".
struct ChainBasisState {
  int atom = 0;
  int s1 = 0, s2 = 0;
  int quanta() const { return atom + (s1 > 0) + (s2 > 0); }
};

class ChainSector {
 public:
  ChainSector(int N, int max_excitations, std::size_t size_cap = 2'000'000) : N_(N), K_(max_excitations) {
    require(max_excitations == 1 || max_excitations == 2, Errc::invalid_parameter,
            "max_excitations must be 1 or 2");
    const double n = N;
    const double est = 2.0 * (1.0 + n + (K_ == 2 ? n * (n + 1) / 2.0 : 0.0));
    if (est > static_cast<double>(size_cap))
      fail(Errc::size, "sector dimension " + std::to_string(static_cast<long long>(est)) +
                           " exceeds cap");
    for (int a = 0; a <= 1; ++a) {
      add({a, 0, 0});
      for (int i = 1; i <= N; ++i) {
        if (a + 1 <= K_) add({a, i, 0});
      }
      if (K_ == 2)
        for (int i = 1; i <= N; ++i)
          for (int j = i; j <= N; ++j)
            if (a + 2 <= K_) add({a, i, j});
    }
  }

  std::size_t dim() const { return states_.size(); }
  int sites() const { return N_; }
  int max_excitations() const { return K_; }
  const ChainBasisState& state(std::size_t i) const { return states_[i]; }

  std::optional<std::size_t> find(int atom, int s1, int s2) const {
    if (s1 > s2 && s2 > 0) std::swap(s1, s2);
    if (s1 == 0 && s2 > 0) std::swap(s1, s2);
    auto it = index_.find(key(atom, s1, s2));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::uint64_t key(int a, int s1, int s2) const {
    const auto b = static_cast<std::uint64_t>(N_ + 1);
    return (static_cast<std::uint64_t>(a) * b + static_cast<std::uint64_t>(s1)) * b +
           static_cast<std::uint64_t>(s2);
  }
  void add(ChainBasisState s) {
    index_.emplace(key(s.atom, s.s1, s.s2), states_.size());
    states_.push_back(s);
  }

  int N_;
  int K_;
  std::vector<ChainBasisState> states_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// Sector Hamiltonian (lattice units): omega0 sigma+ sigma- + sum omega_c b^dag b
/// - J sum (b_n^dag b_{n+1} + h.c.) + g_disc (sigma+ b_n0 + h.c.).
inline SparseMatrix chain_hamiltonian(const ChainSpec& spec, const ChainSector& basis) {
  spec.validate();
  require(basis.sites() == spec.N, Errc::dimension_mismatch, "basis built for another chain");
  std::vector<Eigen::Triplet<cplx>> trips;
  const double w0 = spec.omega0();
  for (std::size_t col = 0; col < basis.dim(); ++col) {
    const auto& st = basis.state(col);
    std::vector<int> ph;
    if (st.s1) ph.push_back(st.s1);
    if (st.s2) ph.push_back(st.s2);
    const double diag = w0 * st.atom + spec.omega_c * static_cast<double>(ph.size());
    if (diag != 0) trips.emplace_back(static_cast<int>(col), static_cast<int>(col), diag);
    auto occ = [&](int site) { return static_cast<int>(std::count(ph.begin(), ph.end(), site)); };
    // hopping: move one photon of each distinct occupied site
    for (std::size_t p = 0; p < ph.size(); ++p) {
      if (p == 1 && ph[1] == ph[0]) continue;
      const int from = ph[p];
      const int other = ph.size() == 2 ? ph[1 - p] : 0;
      for (int to : {from - 1, from + 1}) {
        if (to < 1 || to > spec.N) continue;
        const double amp = -spec.J * std::sqrt(static_cast<double>(occ(from))) *
                           std::sqrt(static_cast<double>(occ(to) + 1));
        const auto row = basis.find(st.atom, to, other);
        if (row) trips.emplace_back(static_cast<int>(*row), static_cast<int>(col), amp);
      }
    }
    if (spec.g_disc != 0) {
      if (st.atom == 1 && ph.size() < 2) {
        const double amp = spec.g_disc * std::sqrt(static_cast<double>(occ(spec.n0) + 1));
        const auto row = basis.find(0, ph.empty() ? spec.n0 : ph[0], ph.empty() ? 0 : spec.n0);
        if (row) trips.emplace_back(static_cast<int>(*row), static_cast<int>(col), amp);
      }
      if (st.atom == 0 && occ(spec.n0) > 0) {
        const double amp = spec.g_disc * std::sqrt(static_cast<double>(occ(spec.n0)));
        int rest = 0;
        if (ph.size() == 2) rest = ph[0] == spec.n0 ? ph[1] : ph[0];
        const auto row = basis.find(1, rest, 0);
        if (row) trips.emplace_back(static_cast<int>(*row), static_cast<int>(col), amp);
      }
    }
  }
  const auto d = static_cast<Eigen::Index>(basis.dim());
  SparseMatrix H(d, d);
  H.setFromTriplets(trips.begin(), trips.end());
  return H;
}

// -- initial states ---------------------------------------------------------------

inline Vector chain_excited_atom(const ChainSector& b) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(b.dim()));
  v(static_cast<Eigen::Index>(*b.find(1, 0, 0))) = 1.0;
  return v;
}

/// Single-photon Gaussian wavepacket sum_n f_n b_n^dag with the atom in `atom`.
/// Negative k moves toward the mirror.
inline Vector chain_wavepacket(const ChainSector& b, int atom, double center, double width,
                               double k) {
  require(width > 0, Errc::invalid_parameter, "wavepacket width must be > 0");
  require(atom + 1 <= b.max_excitations(), Errc::invalid_parameter,
          "sector too small for the requested state");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(b.dim()));
  for (int n = 1; n <= b.sites(); ++n) {
    const double u = (n - center) / width;
    v(static_cast<Eigen::Index>(*b.find(atom, n, 0))) = std::exp(-0.25 * u * u) * std::exp(I * (k * n));
  }
  return v / v.norm();
}

// -- propagation --------------------------------------------------------------------

struct ChainEvolution {
  EvolutionResult result;  // columns pop, n_A, n_B (user time units)
  double max_norm_error = 0;
  double max_energy_error = 0;
  Vector final_state;
};

namespace detail {

/// Gershgorin interval containing the spectrum of a Hermitian sparse matrix.
inline std::pair<double, double> gershgorin(const SparseMatrix& H) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int r = 0; r < H.outerSize(); ++r) {
    double c = 0, rad = 0;
    for (SparseMatrix::InnerIterator it(H, r); it; ++it) {
      if (it.col() == r)
        c = it.value().real();
      else
        rad += std::abs(it.value());
    }
    lo = std::min(lo, c - rad);
    hi = std::max(hi, c + rad);
  }
  return {lo, hi};
}

/// exp(-i H dt) psi by a Chebyshev series in the rescaled Hamiltonian.
class ChebyshevPropagator {
 public:
  ChebyshevPropagator(const SparseMatrix& H, double dt) : H_(H) {
    auto [lo, hi] = gershgorin(H);
    a_ = 0.5 * (hi - lo) + 1e-12;
    b_ = 0.5 * (hi + lo);
    const double x = a_ * dt;
    phase_ = std::exp(-I * (b_ * dt));
    const int k_min = static_cast<int>(std::ceil(x)) + 10;
    for (int k = 0;; ++k) {
      const double jk = std::cyl_bessel_j(static_cast<double>(k), x);
      coeffs_.push_back((k == 0 ? 1.0 : 2.0) * std::pow(-I, k) * jk);
      if (k > k_min && std::abs(jk) < 1e-17) break;
      require(k < 100000, Errc::invalid_parameter, "Chebyshev series did not converge");
    }
  }

  Vector apply(const Vector& psi) const {
    // T0 = psi, T1 = Ht psi, T_{k+1} = 2 Ht T_k - T_{k-1}
    Vector t_prev = psi;
    Vector t_cur = scaled(psi);
    Vector out = coeffs_[0] * t_prev + coeffs_[1] * t_cur;
    for (std::size_t k = 2; k < coeffs_.size(); ++k) {
      Vector t_next = 2.0 * scaled(t_cur) - t_prev;
      out += coeffs_[k] * t_next;
      t_prev.swap(t_cur);
      t_cur.swap(t_next);
    }
    return phase_ * out;
  }

  std::size_t order() const { return coeffs_.size(); }

 private:
  Vector scaled(const Vector& v) const { return (H_ * v - b_ * v) / a_; }

  const SparseMatrix& H_;
  double a_ = 1, b_ = 0;
  cplx phase_{1.0};
  std::vector<cplx> coeffs_;
};

}  // namespace detail

/// Exact evolution of psi0 on the chain sector; t_grid in user units starting at 0.
inline ChainEvolution evolve_sector(const ChainSpec& spec, const ChainSector& basis,
                                    const Vector& psi0, const std::vector<double>& t_grid) {
  require(psi0.size() == static_cast<Eigen::Index>(basis.dim()), Errc::dimension_mismatch,
          "initial state does not match sector");
  require(!t_grid.empty() && t_grid.front() >= 0, Errc::invalid_parameter, "bad time grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    require(t_grid[i] > t_grid[i - 1], Errc::invalid_parameter, "time grid must increase");
  const SparseMatrix H = chain_hamiltonian(spec, basis);

  // diagonal observables
  const auto d = static_cast<Eigen::Index>(basis.dim());
  Eigen::VectorXd pop(d), nA(d), nB(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& s = basis.state(static_cast<std::size_t>(i));
    pop(i) = s.atom;
    nA(i) = (s.s1 >= 1 && s.s1 <= spec.N_A_sites) + (s.s2 >= 1 && s.s2 <= spec.N_A_sites);
    nB(i) = (s.s1 > spec.N_A_sites) + (s.s2 > spec.N_A_sites);
  }

  ChainEvolution ev;
  auto& r = ev.result;
  r.names = {"pop", "n_A", "n_B"};
  r.values.assign(3, {});
  const double norm0 = psi0.squaredNorm();
  const double e0 = psi0.dot(H * psi0).real();
  auto record = [&](const Vector& psi, double t) {
    const Eigen::VectorXd p = psi.cwiseAbs2();
    r.t.push_back(t);
    r.values[0].push_back(p.dot(pop));
    r.values[1].push_back(p.dot(nA));
    r.values[2].push_back(p.dot(nB));
    const double nrm = p.sum();
    r.trace_residual.push_back(std::abs(nrm - norm0));
    ev.max_norm_error = std::max(ev.max_norm_error, std::abs(nrm - norm0));
    ev.max_energy_error = std::max(ev.max_energy_error, std::abs(psi.dot(H * psi).real() - e0));
  };

  Vector psi = psi0;
  double t = 0;
  std::map<double, std::unique_ptr<detail::ChebyshevPropagator>> cache;
  std::size_t gi = 0;
  if (t_grid.front() == 0.0) record(psi, t_grid[gi++]);
  for (; gi < t_grid.size(); ++gi) {
    double dt_lat = (t_grid[gi] - t) * spec.time_unit;
    // one grid interval at a time; identical intervals reuse coefficients
    const double key = std::round(dt_lat * 1e12) / 1e12;
    auto& prop = cache[key];
    if (!prop) prop = std::make_unique<detail::ChebyshevPropagator>(H, dt_lat);
    psi = prop->apply(psi);
    t = t_grid[gi];
    record(psi, t);
    if (cache.size() > 8) cache.clear();
  }
  r.meta = {{"max_norm_error", ev.max_norm_error},
            {"max_energy_error", ev.max_energy_error},
            {"sector_dim", basis.dim()},
            {"spec", spec}};
  ev.final_state = std::move(psi);
  return ev;
}

inline void write_chain_csv(std::ostream& os, const EvolutionResult& r) {
  os << "t,pop,n_A,n_B\n";
  char buf[160];
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10e,%.12e,%.12e,%.12e\n", r.t[i], r.values[0][i],
                  r.values[1][i], r.values[2][i]);
    os << buf;
  }
}

// -- block decomposition ----------------------------------------------------------

struct BlockReport {
  double unitarity_error = 0;
  double reassembly_error = 0;
  double omega_A_error = 0;   // diagonal of block A vs omega_c - 2 J cos k_m^A
  double omega_B_error = 0;
  double intra_block_error = 0;  // off-diagonal elements inside each block
  double g_error = 0;            // atom-A couplings vs g_m
  double atom_B_error = 0;       // atom-B couplings (must vanish)
  double ab_error = 0;           // A-B couplings vs -J xi_m chi_m'
  std::vector<double> k_A, omega_A, g_m, g_m_formula, xi, k_B, omega_B, chi;
};

/// Sine normal modes of both blocks; conjugates the one-excitation chain
/// Hamiltonian by U = diag(1, S_A, S_B) and compares every block of the result
/// with its closed form.
inline BlockReport block_transform(const ChainSpec& spec) {
  spec.validate();
  const int N = spec.N, NA = spec.N_A_sites, NB = spec.N - spec.N_A_sites;
  const int D = N + 1;  // atom + sites
  RealMatrix H = RealMatrix::Zero(D, D);
  H(0, 0) = spec.omega0();
  for (int n = 1; n <= N; ++n) H(n, n) = spec.omega_c;
  for (int n = 1; n < N; ++n) H(n, n + 1) = H(n + 1, n) = -spec.J;
  H(0, spec.n0) = H(spec.n0, 0) = spec.g_disc;

  RealMatrix U = RealMatrix::Zero(D, D);
  U(0, 0) = 1.0;
  BlockReport rep;
  const double nA = std::sqrt(2.0 / (NA + 1)), nB = std::sqrt(2.0 / (NB + 1));
  for (int m = 1; m <= NA; ++m) {
    const double k = m * pi / (NA + 1);
    rep.k_A.push_back(k);
    rep.omega_A.push_back(spec.omega_c - 2.0 * spec.J * std::cos(k));
    rep.g_m_formula.push_back(spec.g_disc * nA * std::sin(k * spec.n0));
    rep.xi.push_back(nA * std::sin(k * NA));
    for (int n = 1; n <= NA; ++n) U(m, n) = nA * std::sin(k * n);
  }
  for (int m = 1; m <= NB; ++m) {
    const double k = m * pi / (NB + 1);
    rep.k_B.push_back(k);
    rep.omega_B.push_back(spec.omega_c - 2.0 * spec.J * std::cos(k));
    rep.chi.push_back(nB * std::sin(k));
    for (int n = 1; n <= NB; ++n) U(NA + m, NA + n) = nB * std::sin(k * n);
  }
  rep.unitarity_error = (U.transpose() * U - RealMatrix::Identity(D, D)).cwiseAbs().maxCoeff();
  const RealMatrix Ht = U * H * U.transpose();
  rep.reassembly_error = (U.transpose() * Ht * U - H).cwiseAbs().maxCoeff();

  for (int m = 1; m <= NA; ++m) {
    rep.omega_A_error = std::max(rep.omega_A_error, std::abs(Ht(m, m) - rep.omega_A[m - 1]));
    rep.g_m.push_back(Ht(0, m));
    rep.g_error = std::max(rep.g_error, std::abs(Ht(0, m) - rep.g_m_formula[m - 1]));
    for (int m2 = 1; m2 <= NA; ++m2)
      if (m2 != m) rep.intra_block_error = std::max(rep.intra_block_error, std::abs(Ht(m, m2)));
    for (int mb = 1; mb <= NB; ++mb)
      rep.ab_error = std::max(rep.ab_error, std::abs(Ht(m, NA + mb) -
                                                     (-spec.J * rep.xi[m - 1] * rep.chi[mb - 1])));
  }
  for (int mb = 1; mb <= NB; ++mb) {
    rep.omega_B_error = std::max(rep.omega_B_error, std::abs(Ht(NA + mb, NA + mb) - rep.omega_B[mb - 1]));
    rep.atom_B_error = std::max(rep.atom_B_error, std::abs(Ht(0, NA + mb)));
    for (int m2 = 1; m2 <= NB; ++m2)
      if (m2 != mb) rep.intra_block_error = std::max(rep.intra_block_error, std::abs(Ht(NA + mb, NA + m2)));
  }
  return rep;
}

/// Block-A mode closest to resonance with the atom.
inline int resonant_block_mode(const ChainSpec& spec) {
  const int m0 = static_cast<int>(std::lround(spec.k0 * (spec.N_A_sites + 1) / pi));
  return std::clamp(m0, 1, spec.N_A_sites);
}

}  // namespace wqed
