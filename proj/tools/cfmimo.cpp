// SPDX-License-Identifier: Apache-2.0
// Command-line front end: single-scheme runs, Monte Carlo sweeps and a quick
// self-check of the solver invariants.

#include "cfmimo/cfmimo.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

using namespace cfmimo;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t drops = 1;
  std::size_t iters = 10;
  std::vector<std::string> schemes;
  std::vector<double> block_slots{4.0};
  std::string csi;
  std::string out;
  std::size_t threads = 0;
};

void add_common(CLI::App* app, CommonOptions& o, bool many_drops) {
  app->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "master seed (overrides the config file)");
  app->add_option("--drops", o.drops, "independent network drops")
      ->default_val(many_drops ? 20 : 1)
      ->check(CLI::PositiveNumber);
  app->add_option("--iters", o.iters, "bi-directional training iterations")->default_val(many_drops ? 30 : 10);
  app->add_option("--schemes", o.schemes, "comma-separated scheme names")->delimiter(',');
  app->add_option("--block-slots", o.block_slots, "comma-separated scheduling block sizes")
      ->delimiter(',')
      ->check(CLI::Range(1.0, 1e9));
  app->add_option("--csi", o.csi, "ideal or trained (overrides the config file)")
      ->check(CLI::IsMember({"ideal", "trained"}));
  app->add_option("--out", o.out, "CSV output path");
  app->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

SimConfig load(const CommonOptions& o) {
  SimConfig cfg = o.config_path.empty() ? SimConfig{} : load_config(o.config_path);
  if (o.seed) cfg.scenario.seed = *o.seed;
  if (o.csi == "ideal") cfg.csi = CsiMode::Ideal;
  if (o.csi == "trained") cfg.csi = CsiMode::Trained;
  return cfg;
}

std::vector<Scheme> parse_schemes(const std::vector<std::string>& names) {
  std::vector<Scheme> out;
  for (const auto& n : names) out.push_back(parse_scheme(n));
  return out;
}

void write_csv(const MonteCarloResult& mc, const std::string& path) {
  if (path.empty()) return;
  emit_csv(flatten(mc), mc.block_sizes, mc.overhead, path);
  std::cerr << "wrote " << path << "\n";
}

int cmd_run(const CommonOptions& o) {
  const SimConfig cfg = load(o);
  const auto schemes = parse_schemes(o.schemes.empty() ? std::vector<std::string>{"joint_opt"} : o.schemes);
  if (schemes.size() != 1) throw ConfigError("run takes exactly one scheme; use sweep for several");
  const auto mc = monte_carlo(cfg, schemes, o.drops, o.iters, o.block_slots, o.threads);
  const auto obj = mc.mean_objective(0);
  std::printf("%-5s %-12s %-12s %-12s\n", "iter", "min_dl", "min_ul", "objective");
  for (std::size_t i = 0; i < obj.size(); ++i) {
    double dl = 0.0, ul = 0.0;
    for (const auto& r : mc.runs[0]) {
      dl += r.series[i].min_dl;
      ul += r.series[i].min_ul;
    }
    const double n = static_cast<double>(mc.drops);
    std::printf("%-5zu %-12.6g %-12.6g %-12.6g\n", i, dl / n, ul / n, obj[i]);
  }
  for (double b : o.block_slots)
    std::printf("best effective rate at block %g: %.6g\n", b, mc.best_mean_effective(0, b));
  write_csv(mc, o.out);
  return 0;
}

int cmd_sweep(const CommonOptions& o) {
  const SimConfig cfg = load(o);
  std::vector<Scheme> schemes(kAllSchemes.begin(), kAllSchemes.end());
  if (!o.schemes.empty()) schemes = parse_schemes(o.schemes);
  const auto mc = monte_carlo(cfg, schemes, o.drops, o.iters, o.block_slots, o.threads);
  std::printf("%-14s %-12s", "scheme", "final_obj");
  for (double b : o.block_slots) std::printf(" eff@%-8g", b);
  std::printf("\n");
  for (std::size_t s = 0; s < schemes.size(); ++s) {
    std::printf("%-14s %-12.6g", std::string(scheme_name(schemes[s])).c_str(), mc.mean_objective(s).back());
    for (double b : o.block_slots) std::printf(" %-12.6g", mc.best_mean_effective(s, b));
    std::printf("\n");
  }
  write_csv(mc, o.out);
  return 0;
}

// Quick invariants on small random instances; the full suite lives in the
// acceptance binary.
std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

int cmd_validate(const CommonOptions& o) {
  const std::uint64_t seed = o.seed.value_or(1);
  int failures = 0;
  const auto report = [&](bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    if (!ok) ++failures;
  };

  {
    Rng rng(seed);
    double worst = -1e300;
    for (int t = 0; t < 2000; ++t) {
      const CVec h = rng.complex_normal(6, 1, 1.0).col(0);
      const CVec x0 = rng.complex_normal(6, 1, 1.0).col(0);
      const CVec x = rng.complex_normal(6, 1, rng.uniform(0.1, 10.0)).col(0);
      const double g0 = rng.uniform(0.1, 5.0), g = rng.uniform(0.01, 10.0);
      worst = std::max({worst, surrogate_p(x, g, x0, g0, h) - exact_p(x, g, h),
                        surrogate_q(x, g, x0, g0, h) - exact_q(x, g, h),
                        surrogate_r(x, g, x0, g0, h) - exact_r(x, g, h),
                        surrogate_t(x, g, x0, g0, h) - exact_t(x, g, h)});
    }
    report(worst <= 1e-9, "surrogates minorize", "max(surrogate - exact) = " + sci(worst));
  }

  SimConfig cfg;
  cfg.scenario.num_bs = 4;
  cfg.scenario.antennas_per_bs = 2;
  cfg.scenario.num_ue = 3;
  cfg.scenario.grid_spacing = 20.0;
  cfg.scenario.seed = seed;
  const auto dseed = drop_seed(seed, 0);
  const auto ch = draw_channels(generate_geometry(cfg.scenario, dseed), cfg.scenario, dseed);
  {
    const auto ideal = run_scheme(Scheme::JointOpt, ch, cfg, 3, dseed);
    SimConfig t = cfg;
    t.csi = CsiMode::Trained;
    t.training.pilot_noise = false;
    const auto trained = run_scheme(Scheme::JointOpt, ch, t, 3, dseed);
    double worst = 0.0;
    for (std::size_t i = 0; i < ideal.series.size(); ++i)
      worst = std::max(worst, std::abs(trained.series[i].objective - ideal.series[i].objective) /
                                  std::max(ideal.series[i].objective, 1e-300));
    report(worst < 1e-8, "noise-free training matches ideal CSI",
           "max relative objective gap = " + sci(worst));
  }
  {
    SimConfig t = cfg;
    t.csi = CsiMode::Trained;
    const std::vector<Scheme> all(kAllSchemes.begin(), kAllSchemes.end());
    const auto mc = monte_carlo(t, all, 2, 4, {4.0}, 1);
    double worst = -1.0;
    for (const auto& per : mc.runs)
      for (const auto& r : per) worst = std::max(worst, r.max_power_excess);
    report(worst <= 1e-9, "power budgets hold", "largest relative excess = " + sci(worst));
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint DL-UL max-min beamforming for cell-free massive MIMO"};
  app.require_subcommand(1);
  CommonOptions run_opts, sweep_opts, validate_opts;
  auto* run = app.add_subcommand("run", "run one scheme and print its mean trajectory");
  add_common(run, run_opts, false);
  auto* sweep = app.add_subcommand("sweep", "Monte Carlo comparison of several schemes");
  add_common(sweep, sweep_opts, true);
  auto* validate = app.add_subcommand("validate", "check solver invariants on small instances");
  validate->add_option("--seed", validate_opts.seed, "seed of the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*sweep) return cmd_sweep(sweep_opts);
    return cmd_validate(validate_opts);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
