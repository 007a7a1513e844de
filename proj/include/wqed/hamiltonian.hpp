#pragma once

// Assembly of the atom + block-A mode Hamiltonian and its dissipators.

#include <functional>
#include <string>
#include <vector>

#include "wqed/model.hpp"
#include "wqed/space.hpp"

namespace wqed {

enum class JumpMode { single_mode, collective };

inline std::string to_string(JumpMode m) {
  return m == JumpMode::collective ? "collective" : "single_mode";
}

/// Coherent atom drive and Markovian channels.
///
/// kappa: atomic decay D[sigma-]; kappa_phi: pure dephasing D[sigma+ sigma-];
/// gamma: block leakage, either gamma D[alpha_0] or gamma D[sum_nu alpha_nu].
struct DriveDissipationSpec {
  double Omega_D = 0.0;
  double kappa = 0.0;
  double kappa_phi = 0.0;
  double gamma = 0.0;
  JumpMode jump_mode = JumpMode::collective;
  Frame frame = Frame::rotating;

  void validate() const {
    require(Omega_D >= 0 && kappa >= 0 && kappa_phi >= 0 && gamma >= 0,
            Errc::invalid_parameter, "drive/dissipation rates must be >= 0");
  }
};

/// Jump operator J with rate r, entering the generator as r D[J].
struct Jump {
  Operator op;
  double rate = 0.0;
  std::string name;
};

/// Term c(t) op + conj(c(t)) op^dag added to the Hamiltonian.
struct DrivenTerm {
  Operator op;
  std::function<cplx(double)> coeff;
  std::string name;
};

/// H(t) = H + sum_k [c_k(t) O_k + h.c.] together with the jump channels.
struct Generator {
  Operator H;
  std::vector<DrivenTerm> drives;
  std::vector<Jump> jumps;

  const SpacePtr& space() const { return H.space(); }
  std::size_t dim() const { return H.dim(); }
};

inline void check_space_matches(const EffectiveModel& model, const SpacePtr& space) {
  const auto labels = space->mode_labels();
  require(labels == model.nus(), Errc::dimension_mismatch,
          "space modes do not match the model truncation");
}

/// Static Hamiltonian: atom + modes + sum_nu g_nu (alpha^dag sigma- + h.c.) and,
/// in the rotating frame, the resonant drive Omega_D/2 sigma_x.
///
/// In the lab frame the drive oscillates at omega0 and is returned by
/// `build_generator` as a driven term instead.
inline Operator build_hamiltonian(const EffectiveModel& model, const DriveDissipationSpec& drive,
                                  const SpacePtr& space) {
  drive.validate();
  require(drive.frame == model.frame, Errc::frame_mismatch,
          "drive spec frame differs from model frame");
  check_space_matches(model, space);
  const Operator sm = atom_lowering(space);
  const Operator sp = sm.adjoint();
  Operator H = Operator::zero(space);
  if (model.atom_frequency() != 0.0) H += model.atom_frequency() * (sp * sm);
  for (const auto& m : model.modes) {
    const Operator a = mode_lowering(space, m.nu);
    const Operator ad = a.adjoint();
    const double w = model.frame_frequency(m.nu);
    if (w != 0.0) H += w * (ad * a);
    if (m.g != 0.0) H += m.g * (ad * sm + sp * a);
  }
  if (drive.Omega_D != 0.0 && drive.frame == Frame::rotating)
    H += (0.5 * drive.Omega_D) * (sm + sp);
  require(H.is_hermitian(), Errc::non_hermitian, "assembled Hamiltonian is not Hermitian");
  return H;
}

inline std::vector<Jump> build_jumps(const EffectiveModel& model, const DriveDissipationSpec& d,
                                     const SpacePtr& space) {
  d.validate();
  std::vector<Jump> jumps;
  const Operator sm = atom_lowering(space);
  if (d.kappa > 0) jumps.push_back({sm, d.kappa, "atom_decay"});
  if (d.kappa_phi > 0) jumps.push_back({sm.adjoint() * sm, d.kappa_phi, "atom_dephasing"});
  if (d.gamma > 0 && model.mode_count() > 0) {
    if (d.jump_mode == JumpMode::single_mode)
      jumps.push_back({mode_lowering(space, 0), d.gamma, "mode0_leak"});
    else
      jumps.push_back({collective_mode(space), d.gamma, "collective_leak"});
  }
  return jumps;
}

inline Generator build_generator(const EffectiveModel& model, const DriveDissipationSpec& d,
                                 const SpacePtr& space) {
  Generator gen{build_hamiltonian(model, d, space), {}, build_jumps(model, d, space)};
  if (d.Omega_D != 0.0 && d.frame == Frame::lab) {
    const double w0 = model.params.omega0;
    const double half = 0.5 * d.Omega_D;
    gen.drives.push_back({atom_lowering(space).adjoint(),
                          [half, w0](double t) { return half * std::exp(-I * (w0 * t)); },
                          "atom_drive"});
  }
  return gen;
}

/// Driven, damped, dephased bare qubit:
/// rho' = -i[Omega_D/2 sigma_x, rho] + kappa D[sigma-] rho + kappa_phi D[sigma+ sigma-] rho.
inline Generator markovian_qubit(double Omega_D, double kappa, double kappa_phi) {
  require(Omega_D >= 0 && kappa >= 0 && kappa_phi >= 0, Errc::invalid_parameter,
          "rates must be >= 0");
  auto s = CompositeSpace::qubit_only();
  const Operator sm = atom_lowering(s);
  Generator gen{(0.5 * Omega_D) * (sm + sm.adjoint()), {}, {}};
  if (kappa > 0) gen.jumps.push_back({sm, kappa, "atom_decay"});
  if (kappa_phi > 0) gen.jumps.push_back({sm.adjoint() * sm, kappa_phi, "atom_dephasing"});
  return gen;
}

}  // namespace wqed
