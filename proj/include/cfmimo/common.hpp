// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfmimo {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

/// Bad or inconsistent configuration (non-square BS count, S > N, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Linear solve, bisection or SINR evaluation could not produce a finite result.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Network dimensions shared by every module.
struct Dims {
  std::size_t num_bs = 1;
  std::size_t antennas_per_bs = 1;
  std::size_t num_ue = 1;
  std::size_t antennas_per_ue = 1;
  std::size_t streams_per_ue = 1;

  std::size_t bs_antennas() const { return num_bs * antennas_per_bs; }
  std::size_t num_streams() const { return num_ue * streams_per_ue; }
  /// Flat stream index; streams of one UE are contiguous.
  std::size_t stream(std::size_t s, std::size_t k) const {
    return k * streams_per_ue + s;
  }

  friend bool operator==(const Dims&, const Dims&) = default;
};

}  // namespace cfmimo
