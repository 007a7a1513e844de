// Command-line front end: one subcommand per experiment.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wqed/experiments.hpp"

namespace {

enum Exit { ok = 0, config_error = 2, numerical_failure = 3, truncation_abort = 4 };

int exit_code(wqed::Errc c) {
  switch (c) {
    case wqed::Errc::config: return config_error;
    case wqed::Errc::truncation: return truncation_abort;
    default: return numerical_failure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-Markovian waveguide QED experiments"};
  app.set_version_flag("--version", std::string(wqed::version()));
  app.require_subcommand(1);

  std::string config_path, out_dir, backend;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;

  const std::pair<const char*, const char*> commands[] = {
      {"emission", "spontaneous emission against the delay-equation oracle"},
      {"scattering", "Gaussian pulse scattering: output intensity and G2"},
      {"steady-sweep", "driven steady states versus drive strength"},
      {"convergence", "emission error versus mode truncation"},
      {"purcell", "short-delay decay rates versus the Markovian formula"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
    sub->add_option("--seed", seed, "random seed (overrides solver.seed)");
    sub->add_option("--backend", backend, "dde, me, mcwf or chain (overrides solver.backend)");
    sub->add_option("--threads", threads, "worker threads (overrides solver.threads)")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : config_error;
  }

  std::string experiment = app.get_subcommands().front()->get_name();
  for (auto& ch : experiment)
    if (ch == '-') ch = '_';

  try {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      try {
        j = nlohmann::json::parse(in, nullptr, true, true);
      } catch (const nlohmann::json::parse_error& e) {
        wqed::fail(wqed::Errc::config, std::string("config is not valid JSON: ") + e.what());
      }
      if (!j.is_object()) wqed::fail(wqed::Errc::config, "config root must be an object");
    }
    if (j.contains("experiment")) {
      std::string given = j["experiment"].is_string() ? j["experiment"].get<std::string>() : "";
      for (auto& ch : given)
        if (ch == '-') ch = '_';
      if (given != experiment)
        wqed::fail(wqed::Errc::config,
                   "experiment: config says '" + given + "' but subcommand is '" + experiment + "'");
    }
    j["experiment"] = experiment;
    if (!backend.empty()) j["solver"]["backend"] = backend;
    if (seed) j["solver"]["seed"] = *seed;
    if (threads) j["solver"]["threads"] = *threads;
    if (!out_dir.empty()) j["output"]["directory"] = out_dir;

    const wqed::ExperimentConfig cfg = wqed::parse_config(j);
    const auto outcome = wqed::run_experiment(cfg, cfg.directory);
    for (const auto& f : outcome.files)
      std::cout << (std::filesystem::path(cfg.directory) / f).string() << '\n';
    if (outcome.truncation_abort) {
      std::cerr << "error: truncation leakage above solver.leakage_abort\n";
      return truncation_abort;
    }
    return ok;
  } catch (const wqed::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return numerical_failure;
  }
}
