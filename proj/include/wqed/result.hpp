#pragma once

// Time series of named observables, shared by every engine.

#include <algorithm>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wqed/space.hpp"

namespace wqed {

/// Observable sum_k c_k(t) O_k; the reported value is the real part of its
/// expectation. A term without a coefficient function has weight 1.
struct Observable {
  struct Term {
    Operator op;
    std::function<cplx(double)> coeff;
  };

  std::string name;
  std::vector<Term> terms;

  Observable() = default;
  Observable(std::string n, Operator op) : name(std::move(n)), terms{{std::move(op), {}}} {}

  Observable& add(Operator op, std::function<cplx(double)> coeff = {}) {
    terms.push_back({std::move(op), std::move(coeff)});
    return *this;
  }

  /// Works for a normalized state vector or a density matrix.
  template <class State>
  double value(const State& s, double t) const {
    cplx sum{};
    for (const auto& term : terms) {
      const cplx e = term.op.expectation(s);
      sum += term.coeff ? term.coeff(t) * e : e;
    }
    return sum.real();
  }
};

struct EvolutionResult {
  std::vector<double> t;
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;   // [observable][time]
  std::vector<std::vector<double>> stderrs;  // MCWF only, same layout
  std::vector<double> trace_residual;        // |tr rho - 1| (ME) or 0
  std::vector<double> min_eigenvalue;        // ME positivity diagnostic
  double max_leakage = 0.0;                  // largest population at the truncation boundary
  bool truncation_warning = false;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t index(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    require(it != names.end(), Errc::missing_operator, "no observable named '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  }

  const std::vector<double>& column(const std::string& name) const { return values[index(name)]; }

  const std::vector<double>& stderr_column(const std::string& name) const {
    require(!stderrs.empty(), Errc::missing_operator, "result carries no standard errors");
    return stderrs[index(name)];
  }

  void add_column(const std::string& name, std::vector<double> v) {
    names.push_back(name);
    values.push_back(std::move(v));
    if (!stderrs.empty()) stderrs.emplace_back(t.size(), 0.0);
  }
};

/// CSV: t, one column per observable, then `<name>_stderr` columns when present.
inline void write_csv(std::ostream& os, const EvolutionResult& r) {
  os << "t";
  for (const auto& n : r.names) os << ',' << n;
  if (!r.stderrs.empty())
    for (const auto& n : r.names) os << ',' << n << "_stderr";
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10e", r.t[i]);
    os << buf;
    for (const auto& col : r.values) {
      std::snprintf(buf, sizeof buf, ",%.12e", col[i]);
      os << buf;
    }
    if (!r.stderrs.empty())
      for (const auto& col : r.stderrs) {
        std::snprintf(buf, sizeof buf, ",%.12e", col[i]);
        os << buf;
      }
    os << '\n';
  }
}

/// Trapezoidal integral of a sampled series.
inline double trapezoid(const std::vector<double>& t, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 1; i < t.size() && i < y.size(); ++i)
    s += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

inline std::vector<double> uniform_grid(double t0, double t1, std::size_t n_intervals) {
  require(n_intervals >= 1 && t1 > t0, Errc::invalid_parameter, "bad time grid");
  std::vector<double> g(n_intervals + 1);
  for (std::size_t i = 0; i <= n_intervals; ++i)
    g[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n_intervals);
  return g;
}

}  // namespace wqed
