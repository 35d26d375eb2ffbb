#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace supermask {

/// Named sub-streams derived from one root seed.
enum class RngStream : std::uint64_t {
  Weights = 1,
  MaskScores = 2,
  Shuffle = 3,
  Analysis = 4,
};

/// Value-type random stream. Distribution sampling is done here rather than
/// with <random> distributions so that draws are identical across standard
/// library implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (root seed, purpose, index), e.g. one per layer,
  /// so adding a layer never perturbs the draws of earlier layers.
  static SeededRng derive(std::uint64_t root_seed, RngStream stream, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on the open interval (0, 1).
  double uniform01();
  /// Uniform on the open interval (lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  double normal();
  bool coin() { return (engine_() >> 63) != 0; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, SeededRng& rng);

}  // namespace supermask
