#pragma once

// Labeled tensor-product space (one qubit followed by truncated bosonic modes)
// and sparse operators on it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wqed/core.hpp"

namespace wqed {

struct Factor {
  enum class Kind { qubit, mode };
  Kind kind = Kind::qubit;
  int nu = 0;       // mode label; unused for the qubit
  int levels = 2;   // local dimension
  std::string label;
};

/// Qubit first, then one mode per retained nu in ascending order.
///
/// Without an excitation cap the basis is the full Kronecker product,
/// enumerated in mixed-radix order with the qubit as the most significant
/// digit. With a cap only states holding at most `max_excitations` quanta in
/// total are kept (same ordering), which makes every operator the projection
/// P O P onto that sector.
class CompositeSpace {
 public:
  static std::shared_ptr<const CompositeSpace> make(std::vector<int> nus, int n_max,
                                                    std::optional<int> max_excitations = {}) {
    require(n_max >= 0, Errc::invalid_parameter, "n_max must be >= 0");
    std::sort(nus.begin(), nus.end());
    require(std::adjacent_find(nus.begin(), nus.end()) == nus.end(), Errc::invalid_parameter,
            "duplicate mode label");
    if (max_excitations) require(*max_excitations >= 0, Errc::invalid_parameter,
                                 "max_excitations must be >= 0");
    auto s = std::shared_ptr<CompositeSpace>(new CompositeSpace());
    s->factors_.push_back({Factor::Kind::qubit, 0, 2, "atom"});
    for (int nu : nus)
      s->factors_.push_back({Factor::Kind::mode, nu, n_max + 1, "mode" + std::to_string(nu)});
    s->cap_ = max_excitations;
    s->enumerate();
    return s;
  }

  static std::shared_ptr<const CompositeSpace> qubit_only() { return make({}, 0); }

  std::size_t dim() const { return codes_.size(); }
  std::size_t factor_count() const { return factors_.size(); }
  const std::vector<Factor>& factors() const { return factors_; }
  const Factor& factor(std::size_t f) const { return factors_.at(f); }
  std::optional<int> max_excitations() const { return cap_; }

  std::size_t qubit_index() const { return 0; }

  std::size_t mode_index(int nu) const {
    for (std::size_t f = 1; f < factors_.size(); ++f)
      if (factors_[f].nu == nu) return f;
    fail(Errc::missing_operator, "no mode nu=" + std::to_string(nu) + " in space");
  }

  std::vector<int> mode_labels() const {
    std::vector<int> out;
    for (std::size_t f = 1; f < factors_.size(); ++f) out.push_back(factors_[f].nu);
    return out;
  }

  /// Local level of factor f in basis state `state`.
  int level(std::size_t state, std::size_t f) const {
    return static_cast<int>((codes_[state] / strides_[f]) % factors_[f].levels);
  }

  int excitation(std::size_t state) const {
    int n = 0;
    for (std::size_t f = 0; f < factors_.size(); ++f) n += level(state, f);
    return n;
  }

  /// Index of the basis state with the given per-factor levels, if retained.
  std::optional<std::size_t> index_of(const std::vector<int>& levels) const {
    require(levels.size() == factors_.size(), Errc::dimension_mismatch, "level vector size");
    std::int64_t code = 0;
    for (std::size_t f = 0; f < factors_.size(); ++f) {
      if (levels[f] < 0 || levels[f] >= factors_[f].levels) return std::nullopt;
      code += levels[f] * strides_[f];
    }
    return find_code(code);
  }

  std::size_t full_product_dim() const {
    std::size_t d = 1;
    for (const auto& f : factors_) d *= static_cast<std::size_t>(f.levels);
    return d;
  }

  std::optional<std::size_t> find_code(std::int64_t code) const {
    auto it = std::lower_bound(codes_.begin(), codes_.end(), code);
    if (it == codes_.end() || *it != code) return std::nullopt;
    return static_cast<std::size_t>(it - codes_.begin());
  }

  std::int64_t code(std::size_t state) const { return codes_[state]; }
  std::int64_t stride(std::size_t f) const { return strides_[f]; }

 private:
  CompositeSpace() = default;

  void enumerate() {
    const std::size_t n = factors_.size();
    strides_.assign(n, 1);
    for (std::size_t f = n; f-- > 1;) strides_[f - 1] = strides_[f] * factors_[f].levels;
    recurse(0, 0, 0);
  }

  void recurse(std::size_t f, std::int64_t code, int used) {
    if (f == factors_.size()) {
      codes_.push_back(code);
      return;
    }
    for (int l = 0; l < factors_[f].levels; ++l) {
      if (cap_ && used + l > *cap_) break;
      recurse(f + 1, code + l * strides_[f], used + l);
    }
  }

  std::vector<Factor> factors_;
  std::vector<std::int64_t> strides_;
  std::vector<std::int64_t> codes_;
  std::optional<int> cap_;
};

using SpacePtr = std::shared_ptr<const CompositeSpace>;

/// Sparse operator bound to a composite space.
class Operator {
 public:
  Operator() = default;
  Operator(SpacePtr space, SparseMatrix m) : space_(std::move(space)), m_(std::move(m)) {
    require(m_.rows() == static_cast<Eigen::Index>(space_->dim()) && m_.cols() == m_.rows(),
            Errc::dimension_mismatch, "operator shape does not match space");
  }

  static Operator zero(SpacePtr s) {
    const auto d = static_cast<Eigen::Index>(s->dim());
    return Operator(s, SparseMatrix(d, d));
  }

  static Operator identity(SpacePtr s) {
    const auto d = static_cast<Eigen::Index>(s->dim());
    SparseMatrix m(d, d);
    m.setIdentity();
    return Operator(s, std::move(m));
  }

  const SpacePtr& space() const { return space_; }
  const SparseMatrix& matrix() const { return m_; }
  Matrix dense() const { return Matrix(m_); }
  std::size_t dim() const { return space_ ? space_->dim() : 0; }

  Operator adjoint() const { return Operator(space_, SparseMatrix(m_.adjoint())); }

  bool is_hermitian(double tol = 1e-12) const {
    SparseMatrix diff = m_ - SparseMatrix(m_.adjoint());
    double mx = 0;
    for (int k = 0; k < diff.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(diff, k); it; ++it) mx = std::max(mx, std::abs(it.value()));
    return mx < tol;
  }

  Operator& operator+=(const Operator& o) {
    check_same(o);
    m_ += o.m_;
    return *this;
  }
  Operator& operator-=(const Operator& o) {
    check_same(o);
    m_ -= o.m_;
    return *this;
  }
  Operator& operator*=(cplx s) {
    m_ *= s;
    return *this;
  }

  friend Operator operator+(Operator a, const Operator& b) { return a += b; }
  friend Operator operator-(Operator a, const Operator& b) { return a -= b; }
  friend Operator operator*(cplx s, Operator a) { return a *= s; }
  friend Operator operator*(double s, Operator a) { return a *= cplx(s); }
  friend Operator operator*(const Operator& a, const Operator& b) {
    a.check_same(b);
    SparseMatrix p = (a.m_ * b.m_).pruned();
    return Operator(a.space_, std::move(p));
  }

  Vector apply(const Vector& psi) const { return m_ * psi; }

  cplx expectation(const Vector& psi) const { return psi.dot(m_ * psi); }

  /// tr(O rho)
  cplx expectation(const Matrix& rho) const {
    cplx s{};
    for (int r = 0; r < m_.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(m_, r); it; ++it) s += it.value() * rho(it.col(), r);
    return s;
  }

 private:
  void check_same(const Operator& o) const {
    require(space_ && o.space_ && space_->dim() == o.space_->dim() &&
                (space_ == o.space_ || space_->factors().size() == o.space_->factors().size()),
            Errc::dimension_mismatch, "operators live on different spaces");
  }

  SpacePtr space_;
  SparseMatrix m_;
};

// -- local single-factor operators ------------------------------------------

/// |g><e| with level 0 = ground, level 1 = excited.
inline Matrix sigma_minus() {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = 1.0;
  return m;
}

inline Matrix destroy(int levels) {
  Matrix m = Matrix::Zero(levels, levels);
  for (int n = 1; n < levels; ++n) m(n - 1, n) = std::sqrt(static_cast<double>(n));
  return m;
}

/// Lifts a local operator on factor f to the composite space (identity elsewhere).
inline Operator embed(const Matrix& local, std::size_t f, const SpacePtr& space) {
  require(f < space->factor_count(), Errc::dimension_mismatch, "factor index out of range");
  const int lv = space->factor(f).levels;
  require(local.rows() == lv && local.cols() == lv, Errc::dimension_mismatch,
          "local operator dimension does not match factor '" + space->factor(f).label + "'");
  std::vector<Eigen::Triplet<cplx>> trips;
  const std::int64_t stride = space->stride(f);
  for (std::size_t s = 0; s < space->dim(); ++s) {
    const int from = space->level(s, f);
    for (int to = 0; to < lv; ++to) {
      const cplx val = local(to, from);
      if (val == cplx{}) continue;
      const auto target = space->find_code(space->code(s) + (to - from) * stride);
      if (!target) continue;
      trips.emplace_back(static_cast<int>(*target), static_cast<int>(s), val);
    }
  }
  const auto d = static_cast<Eigen::Index>(space->dim());
  SparseMatrix m(d, d);
  m.setFromTriplets(trips.begin(), trips.end());
  return Operator(space, std::move(m));
}

inline Operator atom_lowering(const SpacePtr& s) { return embed(sigma_minus(), s->qubit_index(), s); }

inline Operator mode_lowering(const SpacePtr& s, int nu) {
  const auto f = s->mode_index(nu);
  return embed(destroy(s->factor(f).levels), f, s);
}

/// Sum of all mode annihilators, A = sum_nu alpha_nu.
inline Operator collective_mode(const SpacePtr& s) {
  require(s->factor_count() > 1, Errc::missing_operator, "space has no modes");
  Operator A = Operator::zero(s);
  for (int nu : s->mode_labels()) A += mode_lowering(s, nu);
  return A;
}

/// Total quanta: sigma+ sigma- + sum_nu alpha_nu^dag alpha_nu (diagonal).
inline Operator excitation_number(const SpacePtr& s) {
  std::vector<Eigen::Triplet<cplx>> t;
  for (std::size_t i = 0; i < s->dim(); ++i)
    t.emplace_back(static_cast<int>(i), static_cast<int>(i), static_cast<double>(s->excitation(i)));
  const auto d = static_cast<Eigen::Index>(s->dim());
  SparseMatrix m(d, d);
  m.setFromTriplets(t.begin(), t.end());
  return Operator(s, std::move(m));
}

/// Projector onto basis states sitting at the truncation boundary: any mode at
/// its top Fock level, or (with a cap) total quanta equal to the cap.
inline Operator truncation_boundary(const SpacePtr& s) {
  std::vector<Eigen::Triplet<cplx>> t;
  for (std::size_t i = 0; i < s->dim(); ++i) {
    bool edge = s->max_excitations() && s->excitation(i) == *s->max_excitations() &&
                s->factor_count() > 1;
    for (std::size_t f = 1; f < s->factor_count() && !edge; ++f)
      edge = s->level(i, f) == s->factor(f).levels - 1;
    if (edge) t.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
  }
  const auto d = static_cast<Eigen::Index>(s->dim());
  SparseMatrix m(d, d);
  m.setFromTriplets(t.begin(), t.end());
  return Operator(s, std::move(m));
}

inline Vector basis_state(const SpacePtr& s, const std::vector<int>& levels) {
  const auto idx = s->index_of(levels);
  require(idx.has_value(), Errc::invalid_parameter, "requested basis state is not retained");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(s->dim()));
  v(static_cast<Eigen::Index>(*idx)) = 1.0;
  return v;
}

/// |e> (x) vacuum
inline Vector excited_vacuum(const SpacePtr& s) {
  std::vector<int> lv(s->factor_count(), 0);
  lv[0] = 1;
  return basis_state(s, lv);
}

/// |g> (x) vacuum
inline Vector ground_vacuum(const SpacePtr& s) {
  return basis_state(s, std::vector<int>(s->factor_count(), 0));
}

}  // namespace wqed
