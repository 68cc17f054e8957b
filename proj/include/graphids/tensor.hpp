#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

namespace graphids {

// Row-major so that per-flow rows are contiguous for gather/scatter.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

using Rng = std::mt19937_64;

enum class Mode { Train, Eval };

// Independent, reproducible RNG stream derived from a base seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace graphids
