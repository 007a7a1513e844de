#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "wqed/experiments.hpp"

using namespace wqed;
namespace fs = std::filesystem;

namespace {

std::string config_error(const json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
    return e.what();
  }
  ADD_FAILURE() << "config accepted: " << j.dump();
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wqed_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WQED_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json small_emission() {
  return json::parse(R"({
    "experiment": "emission",
    "physical": {"gamma_tau": 2.0, "phi_over_pi": 0.5},
    "model": {"N_A": [1, 2]},
    "solver": {"backend": ["dde", "me"], "dt": 0.05, "t_max": 3.0}
  })");
}

}  // namespace

TEST(Config, ExperimentDefaults) {
  const auto em = parse_config({{"experiment", "emission"}});
  EXPECT_EQ(em.N_A, (std::vector<int>{1, 3, 5, 7}));
  EXPECT_EQ(em.max_excitations, 1);
  EXPECT_DOUBLE_EQ(em.ratio, 2.0);
  EXPECT_DOUBLE_EQ(em.pulse.delta_in, 0.0);

  const auto st = parse_config({{"experiment", "steady-sweep"}});
  EXPECT_EQ(st.experiment, "steady_sweep");
  EXPECT_EQ(st.N_A, (std::vector<int>{0, 1, 2}));
  EXPECT_DOUBLE_EQ(st.gamma_tau, 0.25);
  EXPECT_DOUBLE_EQ(st.phi, pi);
  EXPECT_EQ(st.backends, std::vector<std::string>{"me"});

  const auto sc = parse_config({{"experiment", "scattering"}});
  EXPECT_DOUBLE_EQ(sc.gamma_tau, 4.0);
  EXPECT_EQ(sc.n_traj, 4000u);
  EXPECT_DOUBLE_EQ(sc.pulse.W, 2.5);

  const auto pu = parse_config({{"experiment", "purcell"}});
  EXPECT_EQ(pu.phi_list.size(), 3u);
  EXPECT_DOUBLE_EQ(pu.gamma_tau, 0.01);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(config_error({{"experiment", "nope"}}).find("experiment"), std::string::npos);
  EXPECT_NE(config_error({{"experiment", "emission"}, {"physical", {{"gamma_tau", -1}}}})
                .find("physical.gamma_tau"),
            std::string::npos);
  EXPECT_NE(config_error({{"experiment", "emission"}, {"model", {{"foo", 1}}}}).find("model.foo"),
            std::string::npos);
  EXPECT_NE(config_error({{"experiment", "emission"},
                          {"solver", {{"backend", json::array({"me", 3})}}}})
                .find("solver.backend[1]"),
            std::string::npos);
  EXPECT_NE(config_error({{"experiment", "scattering"}, {"drive", {{"pulse", {{"W", 0}}}}}})
                .find("drive.pulse.W"),
            std::string::npos);
  EXPECT_NE(config_error({{"experiment", "steady_sweep"}, {"solver", {{"backend", "dde"}}}})
                .find("solver.backend"),
            std::string::npos);
  EXPECT_NE(config_error({{"experiment", "emission"},
                          {"physical", {{"phi", 1.0}, {"phi_over_pi", 0.5}}}})
                .find("physical.phi"),
            std::string::npos);
}

TEST(Config, ResolvedConfigRoundTrips) {
  const auto c = parse_config(small_emission());
  const json r = resolved_config(c);
  json again = r;
  again["physical"].erase("phi_list");
  again["solver"].erase("threads");
  const auto c2 = parse_config(again);
  EXPECT_EQ(resolved_config(c2)["physical"], r["physical"]);
  EXPECT_EQ(resolved_config(c2)["model"], r["model"]);
  EXPECT_DOUBLE_EQ(c2.phi, pi / 2);
}

TEST(Grid, CommensurateWithDelay) {
  const auto g = commensurate_grid(2.0, 0.03, 5.0);
  const double h = g[1];
  EXPECT_LE(h, 0.03);
  EXPECT_NEAR(2.0 / h, std::round(2.0 / h), 1e-9);
  EXPECT_GE(g.back(), 5.0 - 1e-12);
}

TEST(Setup, RatioOneGivesShortestBlock) {
  const auto s = make_setup(1.0, 0.01, pi / 2, 1.0);
  EXPECT_GT(s.L, s.params.x0);
  EXPECT_LE(s.L - s.params.x0, s.params.half_wavelength() * (1 + 1e-9));
}

TEST(Runs, EmissionIsReproducible) {
  const auto c = parse_config(small_emission());
  const auto a = scratch("emission_a"), b = scratch("emission_b");
  const auto ra = run_experiment(c, a);
  run_experiment(c, b);
  ASSERT_EQ(ra.files.size(), 3u);
  for (const auto& f : ra.files) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_EQ(slurp(a / "config.resolved.json"), slurp(b / "config.resolved.json"));
  const json info = json::parse(slurp(a / "run_info.json"));
  EXPECT_EQ(info.at("version"), version());
  EXPECT_TRUE(info.at("summary").contains("me_max_error"));
  std::istringstream csv(slurp(a / "emission_me_NA1.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "t,rho_ee,rho_ee_dde");
}

TEST(Runs, TrajectoriesIndependentOfThreads) {
  json j = {{"experiment", "scattering"},
            {"model", {{"N_A", 0}, {"n_max", 2}, {"max_excitations", 2}}},
            {"solver", {{"n_traj", 40}, {"t_max", 5.0}, {"dt", 0.05}, {"seed", 9}}}};
  const auto one = parse_config(j);
  j["solver"]["threads"] = 3;
  const auto three = parse_config(j);
  const auto a = scratch("mcwf_a"), b = scratch("mcwf_b");
  run_experiment(one, a);
  run_experiment(three, b);
  EXPECT_EQ(slurp(a / "scattering_mcwf_NA0.csv"), slurp(b / "scattering_mcwf_NA0.csv"));
}

TEST(Runs, PeakReportFindsEcho) {
  EvolutionResult r;
  r.names = {"I_out"};
  r.values.resize(1);
  for (int i = 0; i <= 1000; ++i) {
    const double t = 0.01 * i;
    r.t.push_back(t);
    r.values[0].push_back(0.5 * std::exp(-8 * (t - 2) * (t - 2)) + std::exp(-8 * (t - 6.1) * (t - 6.1)));
  }
  const json rep = peak_report(r, 2.0, 4.0);
  EXPECT_NEAR(rep.at("prompt_time").get<double>(), 2.0, 1e-9);
  EXPECT_NEAR(rep.at("echo_time").get<double>(), 6.1, 1e-9);
  EXPECT_NEAR(rep.at("echo_delay_over_tau").get<double>(), 1.025, 1e-9);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  {
    std::ofstream(dir / "ok.json") << small_emission().dump();
    std::ofstream(dir / "bad.json") << R"({"experiment": "emission", "model": {"N_A": -1}})";
    std::ofstream(dir / "broken.json") << "{ not json";
  }
  const std::string out = (dir / "run").string();
  EXPECT_EQ(run_cli("emission --config " + (dir / "ok.json").string() + " --out " + out), 0);
  const json info = json::parse(slurp(fs::path(out) / "run_info.json"));
  EXPECT_EQ(info.at("version"), version());
  EXPECT_TRUE(fs::exists(fs::path(out) / "config.resolved.json"));
  EXPECT_EQ(run_cli("emission --config " + (dir / "bad.json").string() + " --out " + out), 2);
  EXPECT_EQ(run_cli("emission --config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(run_cli("purcell --config " + (dir / "ok.json").string()), 2);
  EXPECT_EQ(run_cli("emission --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("teleport"), 2);
  EXPECT_EQ(run_cli("--version"), 0);
}

TEST(Cli, TruncationAbort) {
  const auto dir = scratch("cli_abort");
  const json j = {{"experiment", "scattering"},
                  {"model", {{"N_A", 0}, {"n_max", 1}, {"max_excitations", 1}}},
                  {"drive", {{"pulse", {{"n_ph", 2.0}}}}},
                  {"solver", {{"backend", "me"}, {"t_max", 4.0}, {"leakage_abort", 0.01}}}};
  std::ofstream(dir / "c.json") << j.dump();
  EXPECT_EQ(run_cli("scattering --config " + (dir / "c.json").string() + " --out " +
                    (dir / "run").string()),
            4);
}
