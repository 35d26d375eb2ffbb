#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>

#include "supermask/tensor.hpp"

namespace supermask {

enum class MaskMode { Signed, Binary };

/// Real-valued scores M plus the fixed thresholds of the ternary quantizer.
struct MaskState {
  Tensor scores;
  double tau_n = -0.01;
  double tau_p = 0.01;
  MaskMode mode = MaskMode::Signed;

  /// tau_n <= 0 <= tau_p. Equal thresholds (both 0) are allowed: that is the
  /// "prune nothing at init" configuration.
  void validate() const;
};

/// Signed: −1 where M <= tau_n, +1 where M >= tau_p, 0 in between. With
/// tau_n = tau_p = 0 an exact zero score maps to −1.
/// Binary: +1 where M >= tau_p, else 0.
Tensor quantize(const MaskState& state);
/// Writes quantize(state) into `out` (resized if needed).
void quantize_into(const MaskState& state, Tensor& out);

/// Straight-through score gradient: ∂L/∂M = ∂L/∂(W ⊙ g(M)) ⊙ W.
Tensor ste_grad(const Tensor& grad_effective, const Tensor& weights);

/// Symmetric thresholds (−τ, τ) with τ = bound·p0_target, so that scores
/// drawn from Uniform(−bound, bound) are zeroed with probability p0_target.
std::pair<double, double> thresholds_for_target(double init_bound, double p0_target);

struct MaskDistribution {
  std::size_t neg = 0;
  std::size_t zero = 0;
  std::size_t pos = 0;
  std::size_t total() const { return neg + zero + pos; }
  bool operator==(const MaskDistribution&) const = default;
};

/// Exact counts of −1, 0 and +1. Throws on non-ternary input.
MaskDistribution mask_distribution(const Tensor& mask);
/// Fraction of nonzero entries. Throws on non-ternary input.
double remaining_ratio(const Tensor& mask);

MaskMode parse_mask_mode(std::string_view name);
std::string to_string(MaskMode mode);

}  // namespace supermask
