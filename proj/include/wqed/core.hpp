#pragma once

// Shared scalar/matrix aliases and the error type used across the toolkit.

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace wqed {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

enum class Errc {
  invalid_parameter,
  geometry,
  resonance_condition,
  infeasible_geometry,
  grid,
  resolution,
  dimension_mismatch,
  non_hermitian,
  frame_mismatch,
  step_underflow,
  non_unique_steady_state,
  calibration,
  size,
  missing_operator,
  config,
  truncation,
};

inline std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::geometry: return "geometry";
    case Errc::resonance_condition: return "resonance-condition";
    case Errc::infeasible_geometry: return "infeasible-geometry";
    case Errc::grid: return "grid";
    case Errc::resolution: return "resolution";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::non_hermitian: return "non-hermitian";
    case Errc::frame_mismatch: return "frame-mismatch";
    case Errc::step_underflow: return "step-underflow";
    case Errc::non_unique_steady_state: return "non-unique-steady-state";
    case Errc::calibration: return "calibration";
    case Errc::size: return "size";
    case Errc::missing_operator: return "missing-operator";
    case Errc::config: return "config";
    case Errc::truncation: return "truncation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace wqed
