#pragma once

// Experiment harness: configuration, sweeps and data files for the emission,
// scattering, steady-state, convergence and Purcell studies.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "wqed/chain.hpp"
#include "wqed/dde.hpp"
#include "wqed/master_equation.hpp"
#include "wqed/mcwf.hpp"
#include "wqed/model.hpp"
#include "wqed/scattering.hpp"

#ifndef WQED_VERSION
#define WQED_VERSION "0.1.0"
#endif

namespace wqed {

inline const char* version() { return WQED_VERSION; }

using json = nlohmann::json;

// -- configuration -------------------------------------------------------------------

struct ExperimentConfig {
  std::string experiment;

  // physical
  double Gamma = 1.0;
  double gamma_tau = 2.0;
  double phi = pi / 2;
  double ratio = 2.0;  // L / x0; 1 selects the shortest admissible block
  std::vector<double> phi_list;

  // model
  std::vector<int> N_A;
  int n_max = 1;
  std::optional<int> max_excitations;
  Frame frame = Frame::rotating;
  JumpMode jump_mode = JumpMode::collective;
  int half_wavelengths_per_x0 = 50;

  // drive
  std::vector<double> Omega_D;
  double kappa = 0.0;
  double kappa_phi = 0.0;
  PulseSpec pulse;
  int ellipse_grid = 20;

  // solver
  std::vector<std::string> backends;
  double dt = 0.01;
  double t_max = 6.0;
  std::size_t n_traj = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  int sites_per_delay = 40;
  double leakage_abort = 0.05;

  // output
  std::string directory = "out";

  double tau() const { return gamma_tau / Gamma; }
};

namespace detail {

/// Reads typed values out of a JSON tree, reporting errors by dotted path.
class Reader {
 public:
  Reader(const json& root, std::string path) : j_(root), path_(std::move(path)) {
    if (!j_.is_object()) fail(Errc::config, where("") + "must be an object");
  }

  std::string where(const std::string& key) const {
    const std::string p = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
    return p.empty() ? "" : p + ": ";
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  Reader sub(const std::string& key) const {
    static const json empty = json::object();
    return Reader(has(key) ? j_.at(key) : empty, path_.empty() ? key : path_ + "." + key);
  }

  double number(const std::string& key, double def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(Errc::config, where(key) + "expected a number");
    return v.get<double>();
  }

  long integer(const std::string& key, long def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) fail(Errc::config, where(key) + "expected an integer");
    return v.get<long>();
  }

  std::uint64_t uint64(const std::string& key, std::uint64_t def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      fail(Errc::config, where(key) + "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string string(const std::string& key, const std::string& def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_string()) fail(Errc::config, where(key) + "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) fail(Errc::config, where(key) + "expected a number or list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        fail(Errc::config, where(key + "[" + std::to_string(i) + "]") + "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<int> integers(const std::string& key, std::vector<int> def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (v.is_number_integer()) return {v.get<int>()};
    if (!v.is_array()) fail(Errc::config, where(key) + "expected an integer or list of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer())
        fail(Errc::config, where(key + "[" + std::to_string(i) + "]") + "expected an integer");
      out.push_back(v[i].get<int>());
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (v.is_string()) return {v.get<std::string>()};
    if (!v.is_array()) fail(Errc::config, where(key) + "expected a string or list of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string())
        fail(Errc::config, where(key + "[" + std::to_string(i) + "]") + "expected a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

  void check(bool ok, const std::string& key, const std::string& msg) const {
    if (!ok) fail(Errc::config, where(key) + msg);
  }

  void only(std::initializer_list<const char*> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) fail(Errc::config, where(it.key()) + "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"emission", "scattering", "steady_sweep",
                                              "convergence", "purcell"};
  return names;
}

}  // namespace detail

/// Parses and validates a configuration tree; unspecified fields take the
/// per-experiment defaults.
inline ExperimentConfig parse_config(const json& root) {
  detail::Reader r(root, "");
  r.only({"experiment", "physical", "model", "drive", "solver", "output"});
  ExperimentConfig c;
  c.experiment = r.string("experiment", "");
  std::replace(c.experiment.begin(), c.experiment.end(), '-', '_');
  const auto& names = detail::experiment_names();
  r.check(std::find(names.begin(), names.end(), c.experiment) != names.end(), "experiment",
          "must be one of emission, scattering, steady_sweep, convergence, purcell");
  const std::string& e = c.experiment;

  // per-experiment defaults
  if (e == "emission") {
    c.N_A = {1, 3, 5, 7};
    c.backends = {"dde", "me"};
    c.max_excitations = 1;
  } else if (e == "convergence") {
    c.N_A = {0, 1, 2, 3, 4, 5, 6, 7};
    c.backends = {"me"};
    c.max_excitations = 1;
  } else if (e == "purcell") {
    c.gamma_tau = 0.01;
    c.ratio = 1.0;
    c.N_A = {0};
    c.phi_list = {pi / 2, pi, 3 * pi / 2};
    c.backends = {"dde", "me"};
    c.max_excitations = 1;
  } else if (e == "steady_sweep") {
    c.gamma_tau = 0.25;
    c.phi = pi;
    c.ratio = 1.0;
    c.N_A = {0, 1, 2};
    c.n_max = 3;
    c.max_excitations = 3;
    c.Omega_D = {0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4};
    c.backends = {"me"};
  } else if (e == "scattering") {
    c.gamma_tau = 4.0;
    c.N_A = {2};
    c.n_max = 3;
    c.max_excitations = 4;
    c.pulse.t0 = 2.0;
    c.backends = {"mcwf"};
    c.n_traj = 4000;
    c.dt = 0.02;
    c.t_max = 16.0;
  }

  const auto ph = r.sub("physical");
  ph.only({"Gamma", "gamma_tau", "phi", "phi_over_pi", "ratio", "phi_list", "phi_over_pi_list",
           "half_wavelengths_per_x0"});
  c.Gamma = ph.number("Gamma", c.Gamma);
  ph.check(c.Gamma > 0, "Gamma", "must be > 0");
  c.gamma_tau = ph.number("gamma_tau", c.gamma_tau);
  ph.check(c.gamma_tau > 0, "gamma_tau", "must be > 0");
  ph.check(!(ph.has("phi") && ph.has("phi_over_pi")), "phi", "give either phi or phi_over_pi");
  if (ph.has("phi_over_pi")) c.phi = pi * ph.number("phi_over_pi", 0);
  c.phi = ph.number("phi", c.phi);
  ph.check(c.phi >= 0, ph.has("phi_over_pi") ? "phi_over_pi" : "phi", "must be >= 0");
  c.ratio = ph.number("ratio", c.ratio);
  ph.check(c.ratio >= 1.0, "ratio", "must be >= 1");
  if (ph.has("phi_over_pi_list")) {
    c.phi_list.clear();
    for (double x : ph.numbers("phi_over_pi_list", {})) c.phi_list.push_back(pi * x);
  }
  c.phi_list = ph.numbers("phi_list", c.phi_list);
  c.half_wavelengths_per_x0 =
      static_cast<int>(ph.integer("half_wavelengths_per_x0", c.half_wavelengths_per_x0));
  ph.check(c.half_wavelengths_per_x0 >= 0, "half_wavelengths_per_x0", "must be >= 0");

  const auto md = r.sub("model");
  md.only({"N_A", "n_max", "max_excitations", "frame", "jump_mode"});
  c.N_A = md.integers("N_A", c.N_A);
  md.check(!c.N_A.empty(), "N_A", "must not be empty");
  for (int n : c.N_A) md.check(n >= 0, "N_A", "entries must be >= 0");
  c.n_max = static_cast<int>(md.integer("n_max", c.n_max));
  md.check(c.n_max >= 1, "n_max", "must be >= 1");
  if (md.has("max_excitations")) {
    c.max_excitations = static_cast<int>(md.integer("max_excitations", 0));
    md.check(*c.max_excitations >= 1, "max_excitations", "must be >= 1");
  }
  try {
    c.frame = frame_from_string(md.string("frame", to_string(c.frame)));
  } catch (const Error& err) {
    fail(Errc::config, md.where("frame") + err.what());
  }
  const std::string jm = md.string("jump_mode", to_string(c.jump_mode));
  md.check(jm == "collective" || jm == "single_mode", "jump_mode",
           "must be 'collective' or 'single_mode'");
  c.jump_mode = jm == "collective" ? JumpMode::collective : JumpMode::single_mode;

  const auto dr = r.sub("drive");
  dr.only({"Omega_D", "kappa", "kappa_phi", "pulse", "ellipse_grid"});
  c.Omega_D = dr.numbers("Omega_D", c.Omega_D);
  for (double w : c.Omega_D) dr.check(w >= 0, "Omega_D", "entries must be >= 0");
  c.kappa = dr.number("kappa", c.kappa);
  dr.check(c.kappa >= 0, "kappa", "must be >= 0");
  c.kappa_phi = dr.number("kappa_phi", c.kappa_phi);
  dr.check(c.kappa_phi >= 0, "kappa_phi", "must be >= 0");
  c.ellipse_grid = static_cast<int>(dr.integer("ellipse_grid", c.ellipse_grid));
  dr.check(c.ellipse_grid >= 0, "ellipse_grid", "must be >= 0");
  const auto pu = dr.sub("pulse");
  pu.only({"W", "t0", "n_ph", "delta_in"});
  c.pulse.W = pu.number("W", c.pulse.W);
  pu.check(c.pulse.W > 0, "W", "must be > 0");
  c.pulse.t0 = pu.number("t0", c.pulse.t0);
  c.pulse.n_ph = pu.number("n_ph", c.pulse.n_ph);
  pu.check(c.pulse.n_ph >= 0, "n_ph", "must be >= 0");
  c.pulse.delta_in = pu.number("delta_in", c.pulse.delta_in);

  const auto so = r.sub("solver");
  so.only({"backend", "dt", "t_max", "n_traj", "seed", "threads", "sites_per_delay",
           "leakage_abort"});
  c.backends = so.strings("backend", c.backends);
  so.check(!c.backends.empty(), "backend", "must not be empty");
  for (const auto& b : c.backends)
    so.check(b == "dde" || b == "me" || b == "mcwf" || b == "chain", "backend",
             "unknown backend '" + b + "' (expected dde, me, mcwf or chain)");
  c.dt = so.number("dt", c.dt);
  so.check(c.dt > 0, "dt", "must be > 0");
  c.t_max = so.number("t_max", c.t_max);
  so.check(c.t_max > 0, "t_max", "must be > 0");
  const long nt = so.integer("n_traj", static_cast<long>(c.n_traj));
  so.check(nt >= 1, "n_traj", "must be >= 1");
  c.n_traj = static_cast<std::size_t>(nt);
  c.seed = so.uint64("seed", c.seed);
  const long th = so.integer("threads", c.threads);
  so.check(th >= 1, "threads", "must be >= 1");
  c.threads = static_cast<unsigned>(th);
  c.sites_per_delay = static_cast<int>(so.integer("sites_per_delay", c.sites_per_delay));
  so.check(c.sites_per_delay >= 1, "sites_per_delay", "must be >= 1");
  c.leakage_abort = so.number("leakage_abort", c.leakage_abort);
  so.check(c.leakage_abort > 0, "leakage_abort", "must be > 0");

  const auto out = r.sub("output");
  out.only({"directory", "formats"});
  c.directory = out.string("directory", c.directory);

  // experiment-specific requirements
  if (e == "scattering")
    for (const auto& b : c.backends)
      r.check(b == "me" || b == "mcwf", "solver.backend", "scattering supports me or mcwf");
  if (e == "steady_sweep") {
    for (const auto& b : c.backends)
      r.check(b == "me", "solver.backend", "steady_sweep supports only me");
    r.check(!c.Omega_D.empty(), "drive.Omega_D", "steady_sweep needs at least one value");
  }
  if (e == "convergence")
    for (const auto& b : c.backends)
      r.check(b == "me", "solver.backend", "convergence supports only me");
  if (e == "purcell") {
    r.check(!c.phi_list.empty(), "physical.phi_list", "purcell needs at least one phase");
    for (double p : c.phi_list)
      r.check(std::abs(std::sin(0.5 * p)) > 1e-6, "physical.phi_list",
              "phases must stay away from multiples of 2 pi");
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::config, "cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    fail(Errc::config, "config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j);
}

/// Every field with its resolved value.
inline json resolved_config(const ExperimentConfig& c) {
  json mx = c.max_excitations ? json(*c.max_excitations) : json(nullptr);
  return json{
      {"experiment", c.experiment},
      {"physical",
       {{"Gamma", c.Gamma},
        {"gamma_tau", c.gamma_tau},
        {"phi", c.phi},
        {"ratio", c.ratio},
        {"phi_list", c.phi_list},
        {"half_wavelengths_per_x0", c.half_wavelengths_per_x0}}},
      {"model",
       {{"N_A", c.N_A},
        {"n_max", c.n_max},
        {"max_excitations", mx},
        {"frame", to_string(c.frame)},
        {"jump_mode", to_string(c.jump_mode)}}},
      {"drive",
       {{"Omega_D", c.Omega_D},
        {"kappa", c.kappa},
        {"kappa_phi", c.kappa_phi},
        {"pulse", c.pulse},
        {"ellipse_grid", c.ellipse_grid}}},
      {"solver",
       {{"backend", c.backends},
        {"dt", c.dt},
        {"t_max", c.t_max},
        {"n_traj", c.n_traj},
        {"seed", c.seed},
        {"threads", c.threads},
        {"sites_per_delay", c.sites_per_delay},
        {"leakage_abort", c.leakage_abort}}},
      {"output", {{"directory", c.directory}}}};
}

// -- worker pool ---------------------------------------------------------------------

/// Evaluates fn(0..n-1) on up to `threads` workers; results come back in index order.
template <class T>
std::vector<T> parallel_map(std::size_t n, unsigned threads, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        slots[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned nt = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(n, 1)));
  if (nt <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < nt; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// -- shared building blocks ------------------------------------------------------------

struct Setup {
  PhysicalParams params;
  double L = 0;
};

/// Geometry for (Gamma tau, phi, L / x0).
inline Setup make_setup(double Gamma, double gamma_tau, double phi, double ratio,
                        int half_wavelengths_per_x0 = 50) {
  Setup s;
  s.params = params_from_dimensionless(Gamma, gamma_tau / Gamma, phi, half_wavelengths_per_x0);
  // ratio 1 asks for the shortest admissible block, one half-wavelength past x0
  s.L = snap_block_length(s.params, ratio > 1.0 ? ratio : 1.0 + 1e-9);
  return s;
}

inline Setup make_setup(const ExperimentConfig& c, double phi) {
  return make_setup(c.Gamma, c.gamma_tau, phi, c.ratio, c.half_wavelengths_per_x0);
}

/// Time grid with spacing dt' <= dt chosen so that dt' divides tau.
inline std::vector<double> commensurate_grid(double tau, double dt, double t_max) {
  const double steps_per_tau = std::ceil(tau / dt - 1e-9);
  const double h = tau / steps_per_tau;
  const auto n = static_cast<std::size_t>(std::ceil(t_max / h - 1e-9));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) g[i] = static_cast<double>(i) * h;
  return g;
}

struct EmissionRun {
  EffectiveModel model;
  EvolutionResult result;  // column rho_ee
};

/// Spontaneous emission of the effective model from |e, vacuum>.
inline EmissionRun emission_me(const Setup& s, int N_A, int n_max, std::optional<int> cap,
                               const std::vector<double>& grid, Frame frame = Frame::rotating,
                               JumpMode jm = JumpMode::collective, double kappa = 0.0) {
  EmissionRun run;
  run.model = build_effective_model(s.params, s.L, N_A, frame);
  auto space = CompositeSpace::make(run.model.nus(), n_max, cap);
  DriveDissipationSpec dd;
  dd.kappa = kappa;
  dd.gamma = run.model.gamma;
  dd.jump_mode = jm;
  dd.frame = frame;
  const Generator gen = build_generator(run.model, dd, space);
  const Vector e = excited_vacuum(space);
  const Operator sm = atom_lowering(space);
  run.result = integrate_me(gen, pure_density(e), grid, {Observable("rho_ee", sm.adjoint() * sm)});
  return run;
}

inline double max_abs_difference(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), Errc::dimension_mismatch, "series lengths differ");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct SteadyPoint {
  double Omega_D = 0;
  double rho_ee = 0;
  double abs_rho_eg = 0;
};

/// Steady state of the driven atom coupled to the block modes (no direct atomic decay
/// unless kappa > 0).
inline SteadyPoint steady_point(const Setup& s, int N_A, int n_max, std::optional<int> cap,
                                double Omega_D, JumpMode jm, double kappa = 0.0,
                                double kappa_phi = 0.0) {
  const EffectiveModel model = build_effective_model(s.params, s.L, N_A);
  auto space = CompositeSpace::make(model.nus(), n_max, cap);
  DriveDissipationSpec dd;
  dd.Omega_D = Omega_D;
  dd.kappa = kappa;
  dd.kappa_phi = kappa_phi;
  dd.gamma = model.gamma;
  dd.jump_mode = jm;
  const Generator gen = build_generator(model, dd, space);
  const SteadyState ss = steady_state(gen);
  const Matrix r = atom_reduced(ss.rho, *space);
  return {Omega_D, r(1, 1).real(), std::abs(r(1, 0))};
}

/// Steady state of the bare driven, damped, dephased qubit.
inline SteadyPoint markovian_steady_point(double Omega_D, double kappa, double kappa_phi) {
  const SteadyState ss = steady_state(markovian_qubit(Omega_D, kappa, kappa_phi));
  return {Omega_D, ss.rho(1, 1).real(), std::abs(ss.rho(1, 0))};
}

// -- file output ---------------------------------------------------------------------

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(Errc::config, "cannot write '" + p.string() + "'");
  out << s;
}

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12e", x);
  return buf;
}

inline std::string csv_string(const EvolutionResult& r) {
  std::ostringstream os;
  write_csv(os, r);
  return os.str();
}

struct RunOutcome {
  json summary = json::object();
  std::vector<std::string> files;
  bool truncation_abort = false;
};

// -- experiments -----------------------------------------------------------------------

inline RunOutcome run_emission(const ExperimentConfig& c, const std::filesystem::path& dir) {
  RunOutcome out;
  const Setup s = make_setup(c, c.phi);
  const double tau = c.tau();
  const auto grid = commensurate_grid(tau, c.dt, c.t_max);
  const double h = grid.size() > 1 ? grid[1] : c.dt;
  std::optional<AmplitudeSeries> dde;
  auto need_dde = [&] {
    if (!dde) dde = solve_delay_ode(c.Gamma, tau, c.phi, std::max(grid.back(), tau), h);
  };
  out.summary["L"] = s.L;
  out.summary["L_over_x0"] = s.L / s.params.x0;
  for (const auto& b : c.backends) {
    if (b == "dde") {
      need_dde();
      std::ostringstream os;
      write_csv(os, *dde);
      write_text(dir / "emission_dde.csv", os.str());
      out.files.push_back("emission_dde.csv");
      if (auto p = detect_plateau(*dde, tau)) out.summary["dde_plateau"] = *p;
    } else if (b == "me" || b == "mcwf") {
      need_dde();
      const auto runs = parallel_map<EvolutionResult>(c.N_A.size(), c.threads, [&](std::size_t i) {
        if (b == "me")
          return emission_me(s, c.N_A[i], c.n_max, c.max_excitations, grid, c.frame, c.jump_mode,
                             c.kappa)
              .result;
        const EffectiveModel model = build_effective_model(s.params, s.L, c.N_A[i], c.frame);
        auto space = CompositeSpace::make(model.nus(), c.n_max, c.max_excitations);
        DriveDissipationSpec dd;
        dd.kappa = c.kappa;
        dd.gamma = model.gamma;
        dd.jump_mode = c.jump_mode;
        dd.frame = c.frame;
        const Operator sm = atom_lowering(space);
        McwfOptions opt;
        return mcwf_evolve(build_generator(model, dd, space), excited_vacuum(space), grid, c.n_traj,
                           c.seed, {Observable("rho_ee", sm.adjoint() * sm)}, opt);
      });
      for (std::size_t i = 0; i < runs.size(); ++i) {
        EvolutionResult r = runs[i];
        std::vector<double> exact(r.t.size());
        for (std::size_t k = 0; k < r.t.size(); ++k) exact[k] = std::norm(dde->eps[k]);
        out.summary[b + "_max_error"][std::to_string(c.N_A[i])] =
            max_abs_difference(r.column("rho_ee"), exact);
        r.add_column("rho_ee_dde", exact);
        const std::string name = "emission_" + b + "_NA" + std::to_string(c.N_A[i]) + ".csv";
        write_text(dir / name, csv_string(r));
        out.files.push_back(name);
      }
    } else if (b == "chain") {
      const ChainSpec spec = calibrate_chain(c.Gamma, tau, c.phi, c.sites_per_delay, grid.back());
      const ChainSector basis(spec.N, 1);
      const auto ev = evolve_sector(spec, basis, chain_excited_atom(basis), grid);
      std::ostringstream os;
      write_chain_csv(os, ev.result);
      write_text(dir / "emission_chain.csv", os.str());
      out.files.push_back("emission_chain.csv");
      out.summary["chain"] = {{"spec", spec},
                              {"max_norm_error", ev.max_norm_error},
                              {"max_energy_error", ev.max_energy_error}};
    }
  }
  return out;
}

struct ConvergenceRow {
  int N_A = 0;
  double max_error = 0;
  bool non_monotonic = false;
};

inline std::vector<ConvergenceRow> convergence_rows(const ExperimentConfig& c) {
  const Setup s = make_setup(c, c.phi);
  const double tau = c.tau();
  const auto grid = commensurate_grid(tau, c.dt, c.t_max);
  const auto dde = solve_delay_ode(c.Gamma, tau, c.phi, std::max(grid.back(), tau), grid[1]);
  const auto exact = dde.population();
  std::vector<double> ex(exact.begin(), exact.begin() + static_cast<long>(grid.size()));
  auto errs = parallel_map<double>(c.N_A.size(), c.threads, [&](std::size_t i) {
    const auto run = emission_me(s, c.N_A[i], c.n_max, c.max_excitations, grid, c.frame,
                                 c.jump_mode, c.kappa);
    return max_abs_difference(run.result.column("rho_ee"), ex);
  });
  std::vector<ConvergenceRow> rows;
  for (std::size_t i = 0; i < errs.size(); ++i)
    rows.push_back({c.N_A[i], errs[i], i > 0 && errs[i] > errs[i - 1]});
  return rows;
}

inline RunOutcome run_convergence(const ExperimentConfig& c, const std::filesystem::path& dir) {
  RunOutcome out;
  std::ostringstream os;
  os << "N_A,max_error,non_monotonic\n";
  for (const auto& r : convergence_rows(c)) {
    os << r.N_A << ',' << fmt(r.max_error) << ',' << (r.non_monotonic ? 1 : 0) << '\n';
    out.summary["max_error"][std::to_string(r.N_A)] = r.max_error;
    if (r.non_monotonic) out.summary["non_monotonic_steps"].push_back(r.N_A);
  }
  write_text(dir / "convergence.csv", os.str());
  out.files.push_back("convergence.csv");
  return out;
}

struct PurcellRow {
  double phi = 0;
  double markovian = 0;
  double purcell = 0;  // 4 g0^2 / gamma
  double dde_fit = std::nan("");
  double model_fit = std::nan("");
};

inline std::vector<PurcellRow> purcell_rows(const ExperimentConfig& c) {
  const double tau = c.tau();
  const bool use_dde = std::find(c.backends.begin(), c.backends.end(), "dde") != c.backends.end();
  const bool use_me = std::find(c.backends.begin(), c.backends.end(), "me") != c.backends.end();
  return parallel_map<PurcellRow>(c.phi_list.size(), c.threads, [&](std::size_t i) {
    const double phi = c.phi_list[i];
    PurcellRow row;
    row.phi = phi;
    row.markovian = markovian_rate(c.Gamma, phi);
    const double t_fit = 2.0 / row.markovian;
    const Setup s = make_setup(c, phi);
    const EffectiveModel m0 = build_effective_model(s.params, s.L, 0);
    row.purcell = purcell_rate(m0.mode(0).g, m0.gamma);
    // ~400 samples across the fit window, commensurate with the delay
    const double dt = std::min(tau, t_fit / 400.0);
    const auto grid = commensurate_grid(tau, dt, t_fit);
    if (use_dde) {
      const auto dde = solve_delay_ode(c.Gamma, tau, phi, std::max(grid.back(), tau), grid[1]);
      row.dde_fit = fit_decay_rate(dde.t, dde.population(), t_fit);
    }
    if (use_me) {
      const int N_A = c.N_A.front();
      const auto run = emission_me(s, N_A, c.n_max, c.max_excitations, grid, c.frame, c.jump_mode);
      row.model_fit = fit_decay_rate(run.result.t, run.result.column("rho_ee"), t_fit);
    }
    return row;
  });
}

inline RunOutcome run_purcell(const ExperimentConfig& c, const std::filesystem::path& dir) {
  RunOutcome out;
  std::ostringstream os;
  os << "phi,markovian_rate,purcell_rate,dde_fit_rate,model_fit_rate\n";
  for (const auto& r : purcell_rows(c))
    os << fmt(r.phi) << ',' << fmt(r.markovian) << ',' << fmt(r.purcell) << ',' << fmt(r.dde_fit)
       << ',' << fmt(r.model_fit) << '\n';
  write_text(dir / "purcell.csv", os.str());
  out.files.push_back("purcell.csv");
  return out;
}

inline RunOutcome run_steady_sweep(const ExperimentConfig& c, const std::filesystem::path& dir) {
  RunOutcome out;
  const Setup s = make_setup(c, c.phi);
  out.summary["L_over_x0"] = s.L / s.params.x0;
  const std::size_t nw = c.Omega_D.size();
  const auto points = parallel_map<SteadyPoint>(c.N_A.size() * nw, c.threads, [&](std::size_t k) {
    const int N_A = c.N_A[k / nw];
    return steady_point(s, N_A, c.n_max, c.max_excitations, c.Omega_D[k % nw], c.jump_mode,
                        c.kappa, c.kappa_phi);
  });
  for (std::size_t a = 0; a < c.N_A.size(); ++a) {
    std::ostringstream os;
    os << "Omega_D,rho_ee,abs_rho_eg\n";
    for (std::size_t w = 0; w < nw; ++w) {
      const auto& p = points[a * nw + w];
      os << fmt(p.Omega_D) << ',' << fmt(p.rho_ee) << ',' << fmt(p.abs_rho_eg) << '\n';
    }
    const std::string name = "steady_NA" + std::to_string(c.N_A[a]) + ".csv";
    write_text(dir / name, os.str());
    out.files.push_back(name);
  }
  if (c.ellipse_grid > 0) {
    // Markovian region: dense sweep over drive, decay and dephasing
    const int n = c.ellipse_grid;
    auto axis = [n](double hi, int i) { return hi * static_cast<double>(i + 1) / n; };
    const double w_hi = std::max(4.0 * c.Gamma, c.Omega_D.empty() ? 0.0 :
                                 *std::max_element(c.Omega_D.begin(), c.Omega_D.end()));
    const auto pts = parallel_map<std::array<double, 5>>(
        static_cast<std::size_t>(n) * n * n, c.threads, [&](std::size_t k) {
          const int i = static_cast<int>(k / (n * n)), j = static_cast<int>((k / n) % n),
                    l = static_cast<int>(k % n);
          const double w = axis(w_hi, i), ka = axis(4.0 * c.Gamma, j), kp = axis(4.0 * c.Gamma, l);
          const auto p = markovian_steady_point(w, ka, kp);
          return std::array<double, 5>{w, ka, kp, p.rho_ee, p.abs_rho_eg};
        });
    std::ostringstream os;
    os << "Omega_D,kappa,kappa_phi,rho_ee,abs_rho_eg\n";
    double max_ee = 0;
    for (const auto& p : pts) {
      os << fmt(p[0]) << ',' << fmt(p[1]) << ',' << fmt(p[2]) << ',' << fmt(p[3]) << ','
         << fmt(p[4]) << '\n';
      max_ee = std::max(max_ee, p[3]);
    }
    write_text(dir / "steady_markovian.csv", os.str());
    out.files.push_back("steady_markovian.csv");
    out.summary["markovian_max_rho_ee"] = max_ee;
  }
  return out;
}

struct ScatteringRun {
  EffectiveModel model;
  EvolutionResult result;
  FluxBalance flux;
};

inline ScatteringRun scattering_run(const Setup& s, int N_A, int n_max, std::optional<int> cap,
                                    const PulseSpec& pulse, double t_end, double dt,
                                    const std::string& backend, std::size_t n_traj,
                                    std::uint64_t seed, unsigned threads,
                                    Frame frame = Frame::rotating) {
  ScatteringRun run;
  run.model = build_effective_model(s.params, s.L, N_A, frame);
  auto space = CompositeSpace::make(run.model.nus(), n_max, cap);
  const Generator gen = scattering_generator(run.model, pulse, space);
  const auto obs = scattering_observables(run.model, pulse, space);
  const double t_start = pulse.start_time();
  require(t_end > t_start, Errc::invalid_parameter, "t_max must lie after the pulse start");
  const auto n = static_cast<std::size_t>(std::ceil((t_end - t_start) / dt - 1e-9));
  const auto grid = uniform_grid(t_start, t_end, n);
  const Vector g = ground_vacuum(space);
  if (backend == "me") {
    run.result = integrate_me(gen, pure_density(g), grid, obs);
  } else {
    McwfOptions opt;
    opt.threads = threads;
    run.result = mcwf_evolve(gen, g, grid, n_traj, seed, obs, opt);
  }
  run.flux = flux_balance(run.result, pulse);
  return run;
}

/// The prompt peak is the highest local maximum of I_out before t0 + tau / 2,
/// i.e. before any reflected light can come back; the echo is the highest
/// local maximum between half a delay and one and a half delays after it.
inline json peak_report(const EvolutionResult& r, double t0, double tau) {
  const auto& y = r.column("I_out");
  json rep = json::object();
  if (y.empty()) return rep;
  const double top = *std::max_element(y.begin(), y.end());
  const auto peaks = local_maxima(y, 0.01 * top);
  std::optional<std::size_t> prompt, echo;
  for (auto k : peaks)
    if (r.t[k] < t0 + 0.5 * tau && (!prompt || y[k] > y[*prompt])) prompt = k;
  if (!prompt) return rep;
  rep["prompt_time"] = r.t[*prompt];
  rep["prompt_height"] = y[*prompt];
  for (auto k : peaks) {
    const double dt = r.t[k] - r.t[*prompt];
    if (dt >= 0.5 * tau && dt <= 1.5 * tau && (!echo || y[k] > y[*echo])) echo = k;
  }
  if (echo) {
    rep["echo_time"] = r.t[*echo];
    rep["echo_height"] = y[*echo];
    rep["echo_delay_over_tau"] = (r.t[*echo] - r.t[*prompt]) / tau;
  }
  return rep;
}

inline RunOutcome run_scattering(const ExperimentConfig& c, const std::filesystem::path& dir) {
  RunOutcome out;
  const Setup s = make_setup(c, c.phi);
  out.summary["L_over_x0"] = s.L / s.params.x0;
  for (const auto& b : c.backends)
    for (int N_A : c.N_A) {
      const auto run = scattering_run(s, N_A, c.n_max, c.max_excitations, c.pulse, c.t_max, c.dt,
                                      b, c.n_traj, c.seed, c.threads, c.frame);
      const std::string stem = "scattering_" + b + "_NA" + std::to_string(N_A);
      write_text(dir / (stem + ".csv"), csv_string(run.result));
      out.files.push_back(stem + ".csv");
      json rep = {{"flux_balance", run.flux},
                  {"peaks", peak_report(run.result, c.pulse.t0, c.tau())},
                  {"max_leakage", run.result.max_leakage},
                  {"truncation_warning", run.result.truncation_warning}};
      write_text(dir / (stem + "_report.json"), rep.dump(2) + "\n");
      out.files.push_back(stem + "_report.json");
      out.summary[stem] = rep;
      if (run.result.max_leakage > c.leakage_abort) out.truncation_abort = true;
    }
  return out;
}

/// Runs the configured experiment into `dir` and writes the provenance files.
inline RunOutcome run_experiment(const ExperimentConfig& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const json resolved = resolved_config(c);
  write_text(dir / "config.resolved.json", resolved.dump(2) + "\n");
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome out;
  if (c.experiment == "emission")
    out = run_emission(c, dir);
  else if (c.experiment == "scattering")
    out = run_scattering(c, dir);
  else if (c.experiment == "steady_sweep")
    out = run_steady_sweep(c, dir);
  else if (c.experiment == "convergence")
    out = run_convergence(c, dir);
  else if (c.experiment == "purcell")
    out = run_purcell(c, dir);
  else
    fail(Errc::config, "experiment: unknown '" + c.experiment + "'");
  const double runtime =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json info = {{"version", version()},         {"experiment", c.experiment},
               {"seed", c.seed},               {"runtime_seconds", runtime},
               {"files", out.files},           {"summary", out.summary},
               {"config", resolved},           {"truncation_abort", out.truncation_abort}};
  write_text(dir / "run_info.json", info.dump(2) + "\n");
  return out;
}

}  // namespace wqed
