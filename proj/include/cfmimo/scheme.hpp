// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfmimo/common.hpp"
#include "cfmimo/metrics.hpp"

#include <array>
#include <optional>
#include <string_view>
#include <utility>

namespace cfmimo {

/// The compared beamforming schemes. Separate* are compositions of a DL-only
/// and a UL-only run, each with its own bi-directional training.
enum class Scheme { JointOpt, JointHeur, SeparateOpt, SeparateHeur, DlOpt, UlOpt, UlHeur };

inline constexpr std::array<Scheme, 7> kAllSchemes = {
    Scheme::JointOpt, Scheme::JointHeur, Scheme::SeparateOpt, Scheme::SeparateHeur,
    Scheme::DlOpt,    Scheme::UlOpt,     Scheme::UlHeur};

enum class UeVariant { Optimal, Heuristic };

inline std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::JointOpt: return "joint_opt";
    case Scheme::JointHeur: return "joint_heur";
    case Scheme::SeparateOpt: return "separate_opt";
    case Scheme::SeparateHeur: return "separate_heur";
    case Scheme::DlOpt: return "dl_opt";
    case Scheme::UlOpt: return "ul_opt";
    case Scheme::UlHeur: return "ul_heur";
  }
  return "unknown";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : kAllSchemes)
    if (scheme_name(s) == name) return s;
  throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

inline bool is_separate(Scheme s) {
  return s == Scheme::SeparateOpt || s == Scheme::SeparateHeur;
}

/// DL-only and UL-only constituents of a separate scheme.
inline std::pair<Scheme, Scheme> separate_parts(Scheme s) {
  switch (s) {
    case Scheme::SeparateOpt: return {Scheme::DlOpt, Scheme::UlOpt};
    case Scheme::SeparateHeur: return {Scheme::DlOpt, Scheme::UlHeur};
    default: throw ConfigError("scheme '" + std::string(scheme_name(s)) + "' is not separate");
  }
}

inline DirectionMask scheme_directions(Scheme s) {
  switch (s) {
    case Scheme::DlOpt: return {true, false};
    case Scheme::UlOpt:
    case Scheme::UlHeur: return {false, true};
    default: return {true, true};
  }
}

/// DL/UL weight the solvers use: the configured alpha for joint schemes, the
/// endpoint for single-direction ones.
inline double scheme_alpha(Scheme s, double configured_alpha) {
  const auto dir = scheme_directions(s);
  if (dir.dl && !dir.ul) return 1.0;
  if (dir.ul && !dir.dl) return 0.0;
  return configured_alpha;
}

inline UeVariant scheme_ue_variant(Scheme s) {
  return (s == Scheme::JointHeur || s == Scheme::UlHeur || s == Scheme::SeparateHeur)
             ? UeVariant::Heuristic
             : UeVariant::Optimal;
}

}  // namespace cfmimo
