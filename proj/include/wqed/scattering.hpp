#pragma once

// Coherent Gaussian pulses driving the block modes, and the output field
// reconstructed from the input-output relation.

#include <cmath>
#include <vector>

#include "wqed/hamiltonian.hpp"
#include "wqed/result.hpp"

namespace wqed {

struct PulseSpec {
  double W = 2.5;         // bandwidth
  double t0 = 0.0;        // pulse center
  double n_ph = 0.5;      // mean photon number
  double delta_in = 0.0;  // carrier detuning from omega0

  void validate() const {
    require(W > 0, Errc::invalid_parameter, "pulse bandwidth W must be > 0");
    require(n_ph >= 0, Errc::invalid_parameter, "n_ph must be >= 0");
  }

  /// Envelope intensity is below 1e-5 of its peak before this time.
  double start_time() const { return t0 - 5.0 / W; }
};

inline void to_json(nlohmann::json& j, const PulseSpec& p) {
  j = nlohmann::json{{"W", p.W}, {"t0", p.t0}, {"n_ph", p.n_ph}, {"delta_in", p.delta_in}};
}

/// E_in(t) = sqrt(n_ph) (W^2 / 2 pi)^{1/4} exp(-W^2 (t - t0)^2 / 4) exp(-i delta_in t),
/// normalized so that the integral of |E_in|^2 is n_ph.
inline cplx gaussian_envelope(const PulseSpec& p, double t) {
  const double u = t - p.t0;
  const double amp = std::sqrt(p.n_ph) * std::pow(p.W * p.W / (2.0 * pi), 0.25) *
                     std::exp(-0.25 * p.W * p.W * u * u);
  return amp * std::exp(-I * (p.delta_in * t));
}

/// Input amplitude as seen in the model's frame.
inline cplx frame_envelope(const EffectiveModel& model, const PulseSpec& p, double t) {
  const cplx e = gaussian_envelope(p, t);
  return model.frame == Frame::lab ? e * std::exp(-I * (model.params.omega0 * t)) : e;
}

/// sqrt(gamma) E_in(t) sum_nu alpha_nu^dag + h.c.
inline DrivenTerm build_drive_term(const EffectiveModel& model, const PulseSpec& spec,
                                   const SpacePtr& space, Frame frame = Frame::rotating) {
  spec.validate();
  require(frame == model.frame, Errc::frame_mismatch, "pulse frame differs from model frame");
  check_space_matches(model, space);
  const double sg = std::sqrt(model.gamma);
  return {collective_mode(space).adjoint(),
          [model, spec, sg](double t) { return sg * frame_envelope(model, spec, t); }, "pulse"};
}

/// Block modes driven by the pulse and leaking collectively at rate gamma.
inline Generator scattering_generator(const EffectiveModel& model, const PulseSpec& spec,
                                      const SpacePtr& space) {
  DriveDissipationSpec dd;
  dd.gamma = model.gamma;
  dd.jump_mode = JumpMode::collective;
  dd.frame = model.frame;
  Generator gen{build_hamiltonian(model, dd, space), {}, build_jumps(model, dd, space)};
  if (spec.n_ph > 0) gen.drives.push_back(build_drive_term(model, spec, space, model.frame));
  return gen;
}

/// I_out = <O^dag O>, G2 = <O^dag O^dag O O> with O(t) = E_in(t) - i sqrt(gamma) A,
/// plus the stored excitation and the population at the truncation edge.
inline std::vector<Observable> scattering_observables(const EffectiveModel& model,
                                                      const PulseSpec& spec,
                                                      const SpacePtr& space) {
  check_space_matches(model, space);
  const Operator one = Operator::identity(space);
  const Operator a = (-I * std::sqrt(model.gamma)) * collective_mode(space);
  const Operator ad = a.adjoint();
  const Operator ada = ad * a;
  auto E = [model, spec](double t) { return frame_envelope(model, spec, t); };
  auto Ec = [E](double t) { return std::conj(E(t)); };
  auto E2 = [E](double t) { return cplx(std::norm(E(t))); };

  Observable iout;
  iout.name = "I_out";
  iout.add(one, E2).add(a, Ec).add(ad, E).add(ada);

  Observable g2;
  g2.name = "G2";
  g2.add(one, [E](double t) { return cplx(std::pow(std::norm(E(t)), 2)); })
      .add(a, [E](double t) { return 2.0 * std::norm(E(t)) * std::conj(E(t)); })
      .add(a * a, [E](double t) { return std::conj(E(t) * E(t)); })
      .add(ad, [E](double t) { return 2.0 * std::norm(E(t)) * E(t); })
      .add(ada, [E](double t) { return 4.0 * std::norm(E(t)); })
      .add(ad * (a * a), [E](double t) { return 2.0 * std::conj(E(t)); })
      .add(ad * ad, [E](double t) { return E(t) * E(t); })
      .add((ad * ad) * a, [E](double t) { return 2.0 * E(t); })
      .add((ad * ad) * (a * a));

  return {iout, g2, Observable("sys_excitation", excitation_number(space)),
          Observable("leakage", truncation_boundary(space))};
}

struct FluxBalance {
  double n_ph = 0;
  double output = 0;    // integral of I_out over the window
  double residual = 0;  // excitation left in the system at the end
  double leakage = 0;   // input not delivered inside the window
  double mismatch = 0;  // n_ph - output - residual - leakage
};

inline FluxBalance flux_balance(const EvolutionResult& r, const PulseSpec& spec) {
  FluxBalance f;
  f.n_ph = spec.n_ph;
  f.output = trapezoid(r.t, r.column("I_out"));
  f.residual = r.column("sys_excitation").back();
  std::vector<double> in(r.t.size());
  for (std::size_t i = 0; i < r.t.size(); ++i) in[i] = std::norm(gaussian_envelope(spec, r.t[i]));
  f.leakage = spec.n_ph - trapezoid(r.t, in);
  f.mismatch = f.n_ph - f.output - f.residual - f.leakage;
  return f;
}

inline void to_json(nlohmann::json& j, const FluxBalance& f) {
  j = nlohmann::json{{"n_ph", f.n_ph},         {"integrated_output", f.output},
                     {"residual_excitation", f.residual}, {"undelivered_input", f.leakage},
                     {"mismatch", f.mismatch}};
}

/// Local maxima of a sampled curve above `floor`, as (index) list.
inline std::vector<std::size_t> local_maxima(const std::vector<double>& y, double floor) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < y.size(); ++i)
    if (y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > floor) out.push_back(i);
  return out;
}

}  // namespace wqed
