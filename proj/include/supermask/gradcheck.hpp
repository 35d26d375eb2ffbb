#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "supermask/layers.hpp"

namespace supermask {

struct GradCheckResult {
  std::string description;
  /// Largest per-tensor ‖g_bp − g_fd‖ / max(‖g_bp‖, ‖g_fd‖) over the weighted layers.
  double max_rel_error = 0.0;
  /// Score gradients equal grad_effective ⊙ W bit for bit.
  bool ste_exact = false;
};

/// Central differences of the mean cross-entropy with respect to the
/// effective weights (mask held fixed), compared against backward().
GradCheckResult gradcheck_network(const Network& net, const Tensor& inputs, std::span<const int> labels,
                                  double h = 1e-5);

/// `cases` random small nets: dense stacks of 1 to 3 layers and conv nets
/// with 1 or 2 conv layers, widths at most 8.
std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed, std::size_t cases, double h = 1e-5);

}  // namespace supermask
