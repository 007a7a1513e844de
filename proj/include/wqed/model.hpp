#pragma once

// Physical parameters of the atom-in-front-of-a-mirror setup and the truncated
// multimode effective model of the block adjacent to the atom.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wqed/core.hpp"

namespace wqed {

enum class Frame { rotating, lab };

inline std::string to_string(Frame f) { return f == Frame::rotating ? "rotating" : "lab"; }

inline Frame frame_from_string(const std::string& s) {
  if (s == "rotating") return Frame::rotating;
  if (s == "lab") return Frame::lab;
  fail(Errc::config, "unknown frame '" + s + "' (expected 'rotating' or 'lab')");
}

/// Geometry and coupling of the semi-infinite waveguide setup.
///
/// The derived triple is fixed at construction: decay rate Gamma = 2 g^2 / v,
/// delay tau = 2 x0 / v and round-trip phase phi = 2 (omega0 / v) x0. `phi` is
/// kept unreduced; `phi_mod_2pi()` gives the reduced value.
struct PhysicalParams {
  double omega0 = 0.0;
  double v = 0.0;
  double x0 = 0.0;
  double g = 0.0;

  double Gamma = 0.0;
  double tau = 0.0;
  double phi = 0.0;

  double k0() const { return omega0 / v; }
  double wavelength() const { return 2.0 * pi / k0(); }
  double half_wavelength() const { return pi / k0(); }
  double phi_mod_2pi() const {
    double r = std::fmod(phi, 2.0 * pi);
    return r < 0 ? r + 2.0 * pi : r;
  }
};

inline PhysicalParams derive_params(double omega0, double v, double x0, double g) {
  require(omega0 > 0, Errc::invalid_parameter, "omega0 must be > 0");
  require(v > 0, Errc::invalid_parameter, "v must be > 0");
  require(x0 > 0, Errc::invalid_parameter, "x0 must be > 0");
  require(g > 0, Errc::invalid_parameter, "g must be > 0");
  PhysicalParams p;
  p.omega0 = omega0;
  p.v = v;
  p.x0 = x0;
  p.g = g;
  p.Gamma = 2.0 * g * g / v;
  p.tau = 2.0 * x0 / v;
  p.phi = 2.0 * (omega0 / v) * x0;
  return p;
}

/// Builds a geometry realizing the dimensionless pair (Gamma tau, phi).
///
/// Only phi modulo 2 pi is physical, so the carrier is wound up by whole turns
/// until at least `half_wavelengths_per_x0` half-wavelengths fit between atom
/// and mirror. That keeps the half-wavelength grid fine enough for the block
/// length to land close to any requested L / x0.
inline PhysicalParams params_from_dimensionless(double Gamma, double tau, double phi,
                                                int half_wavelengths_per_x0 = 50,
                                                double v = 1.0) {
  require(Gamma > 0 && tau > 0, Errc::invalid_parameter, "Gamma and tau must be > 0");
  require(phi >= 0, Errc::invalid_parameter, "phi must be >= 0");
  require(half_wavelengths_per_x0 >= 0, Errc::invalid_parameter,
          "half_wavelengths_per_x0 must be >= 0");
  const double x0 = 0.5 * v * tau;
  const double g = std::sqrt(0.5 * Gamma * v);
  // x0 / (lambda0/2) = phi_raw / (2 pi)
  const double needed = 2.0 * pi * half_wavelengths_per_x0;
  double turns = phi >= needed ? 0.0 : std::ceil((needed - phi) / (2.0 * pi));
  double phi_raw = phi + 2.0 * pi * turns;
  if (phi_raw <= 0) phi_raw = 2.0 * pi;  // phi = 0 with no winding requested
  const double omega0 = phi_raw * v / (2.0 * x0);
  return derive_params(omega0, v, x0, g);
}

/// Multiple of lambda0/2 nearest to ratio * x0 that is strictly beyond x0.
/// Exact ties round up.
inline double snap_block_length(const PhysicalParams& p, double ratio) {
  require(ratio > 1.0, Errc::invalid_parameter, "block ratio L/x0 must be > 1");
  const double half = p.half_wavelength();
  const double target = ratio * p.x0;
  const double q = target / half;
  double n = std::floor(q);
  if (q - n >= 0.5 - 1e-9) n += 1.0;
  if (n * half <= p.x0 * (1.0 + 1e-12)) n = std::floor(p.x0 / half) + 1.0;
  if (n * half >= 10.0 * target)
    fail(Errc::infeasible_geometry,
         "no half-wavelength multiple beyond x0 below 10*ratio*x0; omega0 too small");
  return n * half;
}

struct Mode {
  int nu = 0;
  double Omega = 0.0;  // lab-frame frequency
  double g = 0.0;
};

/// Atom coupled to the 2 N_A + 1 retained normal modes of block A.
///
/// Modes are stored by ascending nu; use `index_of` rather than offset
/// arithmetic. Each mode leaks into the flat continuum at rate `gamma`.
struct EffectiveModel {
  PhysicalParams params;
  double L = 0.0;
  int N_A = 0;
  double gamma = 0.0;
  std::vector<Mode> modes;
  Frame frame = Frame::rotating;

  int mode_count() const { return static_cast<int>(modes.size()); }

  int index_of(int nu) const {
    for (int i = 0; i < mode_count(); ++i)
      if (modes[i].nu == nu) return i;
    fail(Errc::invalid_parameter, "mode nu=" + std::to_string(nu) + " is not retained");
  }

  const Mode& mode(int nu) const { return modes[index_of(nu)]; }

  std::vector<int> nus() const {
    std::vector<int> out;
    for (const auto& m : modes) out.push_back(m.nu);
    return out;
  }

  /// Mode frequency as seen by the Hamiltonian in this model's frame.
  double frame_frequency(int nu) const {
    const double w = mode(nu).Omega;
    return frame == Frame::rotating ? w - params.omega0 : w;
  }

  double atom_frequency() const { return frame == Frame::rotating ? 0.0 : params.omega0; }
};

/// Coupling of mode nu for block length L, from the sinusoidal mode shape at the atom.
inline double mode_coupling(const PhysicalParams& p, double L, int nu) {
  const double sign = (nu % 2 == 0) ? 1.0 : -1.0;
  return p.g * sign * std::sqrt(2.0 / L) * std::sin(nu * pi * p.x0 / L + 0.5 * p.phi);
}

inline void check_block_length(const PhysicalParams& p, double L) {
  require(L > p.x0, Errc::geometry, "block length L must exceed x0");
  const double q = L / p.half_wavelength();
  if (std::abs(q - std::round(q)) > 1e-12 * std::max(1.0, q))
    fail(Errc::resonance_condition, "L is not an integer multiple of lambda0/2");
}

inline EffectiveModel build_effective_model(const PhysicalParams& p, double L, int N_A,
                                            Frame frame = Frame::rotating) {
  require(N_A >= 0, Errc::invalid_parameter, "N_A must be >= 0");
  check_block_length(p, L);
  EffectiveModel m;
  m.params = p;
  m.L = L;
  m.N_A = N_A;
  m.gamma = 2.0 * p.v / L;
  m.frame = frame;
  for (int nu = -N_A; nu <= N_A; ++nu)
    m.modes.push_back({nu, p.omega0 + p.v * nu * pi / L, mode_coupling(p, L, nu)});
  return m;
}

// -- key-value serialization -------------------------------------------------

inline void to_json(nlohmann::json& j, const PhysicalParams& p) {
  j = nlohmann::json{{"omega0", p.omega0}, {"v", p.v},         {"x0", p.x0},
                     {"g", p.g},           {"Gamma", p.Gamma}, {"tau", p.tau},
                     {"phi", p.phi},       {"phi_mod_2pi", p.phi_mod_2pi()}};
}

inline void from_json(const nlohmann::json& j, PhysicalParams& p) {
  p = derive_params(j.at("omega0").get<double>(), j.at("v").get<double>(),
                    j.at("x0").get<double>(), j.at("g").get<double>());
}

inline void to_json(nlohmann::json& j, const EffectiveModel& m) {
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& md : m.modes)
    modes.push_back({{"nu", md.nu}, {"Omega_nu", md.Omega}, {"g_nu", md.g}});
  j = nlohmann::json{{"params", m.params}, {"L", m.L},         {"N_A", m.N_A},
                     {"gamma", m.gamma},   {"modes", modes}, {"frame", to_string(m.frame)}};
}

inline void from_json(const nlohmann::json& j, EffectiveModel& m) {
  m = build_effective_model(j.at("params").get<PhysicalParams>(), j.at("L").get<double>(),
                            j.at("N_A").get<int>(),
                            frame_from_string(j.value("frame", std::string("rotating"))));
}

}  // namespace wqed
