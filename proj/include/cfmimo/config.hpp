// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfmimo/common.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

namespace cfmimo {

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

/// Geometry, power and noise of one network. Powers are stored in watts.
struct ScenarioConfig {
  std::size_t num_bs = 25;
  std::size_t antennas_per_bs = 4;
  std::size_t num_ue = 16;
  std::size_t antennas_per_ue = 2;
  std::size_t streams_per_ue = 2;
  double grid_spacing = 100.0;  // m
  double carrier_freq = 28.0;   // GHz
  double rho_bs = dbm_to_watts(30.0);
  double rho_ue = dbm_to_watts(20.0);
  double sigma2_bs = dbm_to_watts(-95.0);
  double sigma2_ue = dbm_to_watts(-95.0);
  double alpha = 0.5;
  double min_bs_ue_distance = 1.0;  // m
  std::uint64_t seed = 1;

  Dims dims() const {
    return {num_bs, antennas_per_bs, num_ue, antennas_per_ue, streams_per_ue};
  }

  void validate() const {
    if (num_bs < 1 || antennas_per_bs < 1 || num_ue < 1 || antennas_per_ue < 1 ||
        streams_per_ue < 1)
      throw ConfigError("all dimensions must be >= 1");
    if (streams_per_ue > antennas_per_ue)
      throw ConfigError("streams_per_ue must not exceed antennas_per_ue");
    if (!(rho_bs > 0) || !(rho_ue > 0) || !(sigma2_bs > 0) || !(sigma2_ue > 0))
      throw ConfigError("powers and noise variances must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(grid_spacing > 0)) throw ConfigError("grid_spacing must be positive");
    if (!(carrier_freq > 0)) throw ConfigError("carrier_freq must be positive");
    if (!(min_bs_ue_distance > 0)) throw ConfigError("min_bs_ue_distance must be positive");
  }
};

/// Which index the UL-dual weight of the interference sum carries in the
/// closed-form beamformers. `Printed` keeps the closed forms exactly as derived
/// from the Lagrangian; `Swapped` exchanges own and summation index on that weight.
enum class MuIndexVariant { Printed, Swapped };

/// Rate-dual update of the inner loop. `Subgradient` is the additive step
/// with clip-and-rescale; `Exponentiated` multiplies each dual by
/// exp(-step * (rate - R) / mean rate) and rescales, so duals never reach zero.
enum class DualUpdate { Exponentiated, Subgradient };

struct SolverConfig {
  double delta0 = 0.05;          // sub-gradient step = delta0 / sqrt(j)
  DualUpdate dual_update = DualUpdate::Exponentiated;
  double eg_delta0 = 0.5;        // exponentiated step = eg_delta0 / sqrt(j)
  /// Carry the rate duals from one BS step into the next; off restarts them
  /// from the uniform point at every bi-directional iteration.
  bool dual_warm_start = false;
  /// Scale each UE's beamformers up to its budget after the UE step (DL
  /// SINRs are invariant to it).
  bool ue_full_power = true;
  std::size_t inner_iters_max = 50;
  double dual_tol = 1e-4;
  double lambda_step = 0.1;      // per-BS dual step, in units of 1 / rho_bs
  MuIndexVariant mu_index_variant = MuIndexVariant::Printed;
  double heuristic_a = 1.0;
  double heuristic_b = 0.0;
  /// Optional per-iteration (a, b) table; the last entry repeats.
  std::vector<std::pair<double, double>> heuristic_schedule;
  double bisect_tol = 1e-8;
  double nu_floor = 1e-18;

  std::pair<double, double> heuristic_weights(std::size_t iteration) const {
    if (heuristic_schedule.empty()) return {heuristic_a, heuristic_b};
    const auto idx = std::min(iteration, heuristic_schedule.size() - 1);
    return heuristic_schedule[idx];
  }
};

enum class PilotMode { Orthogonal, Random };

struct TrainingConfig {
  std::size_t tau = 0;  // 0 selects K*S
  PilotMode pilot_mode = PilotMode::Orthogonal;
  double slots_per_pilot_block = 0.5;
  /// When false the pilot phases are noise free (consistency checks).
  bool pilot_noise = true;
  std::map<std::string, double> pilot_blocks_override;

  std::size_t effective_tau(const Dims& d) const {
    return tau == 0 ? d.num_streams() : tau;
  }
};

enum class CsiMode { Ideal, Trained };

struct SimConfig {
  ScenarioConfig scenario;
  SolverConfig solver;
  TrainingConfig training;
  CsiMode csi = CsiMode::Ideal;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
}

inline std::uint64_t to_uint(const std::string& key, const std::string& value) {
  const double x = to_double(key, value);
  if (x < 0 || std::floor(x) != x)
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + value + "'");
  return static_cast<std::uint64_t>(x);
}

inline bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + value + "'");
}

}  // namespace detail

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = detail::trim(std::string_view(body).substr(0, eq));
    std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out[std::move(key)] = std::move(value);
  }
  return out;
}

/// Applies parsed keys on top of `base`. Unknown keys are rejected.
inline SimConfig apply_key_values(const std::map<std::string, std::string>& kv,
                                  SimConfig base = {}) {
  using detail::to_bool;
  using detail::to_double;
  using detail::to_uint;
  auto& sc = base.scenario;
  auto& so = base.solver;
  auto& tr = base.training;
  for (const auto& [key, value] : kv) {
    if (key == "num_bs") sc.num_bs = to_uint(key, value);
    else if (key == "antennas_per_bs") sc.antennas_per_bs = to_uint(key, value);
    else if (key == "num_ue") sc.num_ue = to_uint(key, value);
    else if (key == "antennas_per_ue") sc.antennas_per_ue = to_uint(key, value);
    else if (key == "streams_per_ue") sc.streams_per_ue = to_uint(key, value);
    else if (key == "grid_spacing") sc.grid_spacing = to_double(key, value);
    else if (key == "carrier_freq") sc.carrier_freq = to_double(key, value);
    else if (key == "rho_bs") sc.rho_bs = dbm_to_watts(to_double(key, value));
    else if (key == "rho_ue") sc.rho_ue = dbm_to_watts(to_double(key, value));
    else if (key == "sigma2_bs") sc.sigma2_bs = dbm_to_watts(to_double(key, value));
    else if (key == "sigma2_ue") sc.sigma2_ue = dbm_to_watts(to_double(key, value));
    else if (key == "alpha") sc.alpha = to_double(key, value);
    else if (key == "min_bs_ue_distance") sc.min_bs_ue_distance = to_double(key, value);
    else if (key == "seed") sc.seed = to_uint(key, value);
    else if (key == "delta0") so.delta0 = to_double(key, value);
    else if (key == "eg_delta0") so.eg_delta0 = to_double(key, value);
    else if (key == "dual_warm_start") so.dual_warm_start = to_bool(key, value);
    else if (key == "ue_full_power") so.ue_full_power = to_bool(key, value);
    else if (key == "dual_update") {
      if (value == "exponentiated") so.dual_update = DualUpdate::Exponentiated;
      else if (value == "subgradient") so.dual_update = DualUpdate::Subgradient;
      else throw ConfigError("dual_update must be 'exponentiated' or 'subgradient'");
    } else if (key == "inner_iters_max") so.inner_iters_max = to_uint(key, value);
    else if (key == "dual_tol") so.dual_tol = to_double(key, value);
    else if (key == "lambda_step") so.lambda_step = to_double(key, value);
    else if (key == "mu_index_variant") {
      if (value == "printed") so.mu_index_variant = MuIndexVariant::Printed;
      else if (value == "swapped") so.mu_index_variant = MuIndexVariant::Swapped;
      else throw ConfigError("mu_index_variant must be 'printed' or 'swapped'");
    } else if (key == "heuristic_a") so.heuristic_a = to_double(key, value);
    else if (key == "heuristic_b") so.heuristic_b = to_double(key, value);
    else if (key == "heuristic_schedule") {
      // "a:b, a:b, ..." one pair per outer iteration
      so.heuristic_schedule.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const std::string pair = detail::trim(item);
        const auto colon = pair.find(':');
        if (colon == std::string::npos)
          throw ConfigError("heuristic_schedule entries must read 'a:b'");
        so.heuristic_schedule.emplace_back(
            to_double(key, detail::trim(std::string_view(pair).substr(0, colon))),
            to_double(key, detail::trim(std::string_view(pair).substr(colon + 1))));
      }
    } else if (key == "bisect_tol") so.bisect_tol = to_double(key, value);
    else if (key == "tau") tr.tau = to_uint(key, value);
    else if (key == "pilot_mode") {
      if (value == "orthogonal") tr.pilot_mode = PilotMode::Orthogonal;
      else if (value == "random") tr.pilot_mode = PilotMode::Random;
      else throw ConfigError("pilot_mode must be 'orthogonal' or 'random'");
    } else if (key == "slots_per_pilot_block") tr.slots_per_pilot_block = to_double(key, value);
    else if (key == "pilot_noise") tr.pilot_noise = to_bool(key, value);
    else if (key.rfind("pilot_blocks_override.", 0) == 0)
      tr.pilot_blocks_override[key.substr(22)] = to_double(key, value);
    else if (key == "csi") {
      if (value == "ideal") base.csi = CsiMode::Ideal;
      else if (value == "trained") base.csi = CsiMode::Trained;
      else throw ConfigError("csi must be 'ideal' or 'trained'");
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  for (const auto& [a, b] : so.heuristic_schedule)
    if (!(a > 0) || b < 0) throw ConfigError("heuristic weights need a > 0 and b >= 0");
  if (!(so.heuristic_a > 0) || so.heuristic_b < 0)
    throw ConfigError("heuristic weights need a > 0 and b >= 0");
  if (!(so.delta0 > 0) || !(so.eg_delta0 > 0) || !(so.lambda_step > 0) || !(so.bisect_tol > 0))
    throw ConfigError("delta0, eg_delta0, lambda_step and bisect_tol must be positive");
  if (so.inner_iters_max < 1) throw ConfigError("inner_iters_max must be at least 1");
  if (!(tr.slots_per_pilot_block > 0)) throw ConfigError("slots_per_pilot_block must be positive");
  sc.validate();
  return base;
}

inline SimConfig load_config(const std::string& path, SimConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return apply_key_values(parse_key_values(in), std::move(base));
}

}  // namespace cfmimo
