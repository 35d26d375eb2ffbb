#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "supermask/rng.hpp"
#include "supermask/tensor.hpp"

namespace testing {

inline supermask::Tensor random_tensor(const supermask::Shape& shape, std::uint64_t seed, double scale = 1.0) {
  supermask::SeededRng rng(seed);
  supermask::Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

inline std::vector<double> vec(const supermask::Tensor& t) { return {t.values().begin(), t.values().end()}; }

inline double max_abs_diff(const supermask::Tensor& a, const supermask::Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

inline double max_rel_diff(const supermask::Tensor& a, const supermask::Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a[i] - b[i]) / std::max(1.0, std::fabs(b[i])));
  }
  return m;
}

}  // namespace testing
