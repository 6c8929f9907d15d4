#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace mahavar {

/// Sample-major matrix: one row per sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Deterministic generator for stream `(seed, tag, index)`. Every draw in a
/// batch gets its own generator so results do not depend on evaluation order.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t tag = 0, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace mahavar
