#include "supermask/masking.hpp"

#include <stdexcept>

namespace supermask {

void MaskState::validate() const {
  if (!(tau_n <= 0.0)) throw std::invalid_argument("MaskState: tau_n must be <= 0");
  if (!(tau_p >= 0.0)) throw std::invalid_argument("MaskState: tau_p must be >= 0");
}

void quantize_into(const MaskState& state, Tensor& out) {
  if (out.shape() != state.scores.shape()) out = Tensor(state.scores.shape());
  const std::size_t n = state.scores.size();
  const double* m = state.scores.raw();
  double* g = out.raw();
  const double tn = state.tau_n, tp = state.tau_p;
  if (state.mode == MaskMode::Signed) {
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) g[i] = m[i] <= tn ? -1.0 : (m[i] >= tp ? 1.0 : 0.0);
  } else {
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) g[i] = m[i] >= tp ? 1.0 : 0.0;
  }
}

Tensor quantize(const MaskState& state) {
  state.validate();
  Tensor out(state.scores.shape());
  quantize_into(state, out);
  return out;
}

Tensor ste_grad(const Tensor& grad_effective, const Tensor& weights) {
  require_same_shape(grad_effective, weights, "ste_grad");
  Tensor out(weights.shape());
  const std::size_t n = weights.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = grad_effective[i] * weights[i];
  return out;
}

std::pair<double, double> thresholds_for_target(double init_bound, double p0_target) {
  if (!(init_bound > 0.0)) throw std::invalid_argument("thresholds_for_target: bound must be positive");
  if (!(p0_target >= 0.0 && p0_target < 1.0)) {
    throw std::invalid_argument("thresholds_for_target: target pruning rate must lie in [0, 1)");
  }
  const double tau = init_bound * p0_target;
  return {-tau, tau};
}

MaskDistribution mask_distribution(const Tensor& mask) {
  MaskDistribution d;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double v = mask[i];
    if (v == 0.0) {
      ++d.zero;
    } else if (v == 1.0) {
      ++d.pos;
    } else if (v == -1.0) {
      ++d.neg;
    } else {
      throw std::invalid_argument("mask_distribution: non-ternary value " + std::to_string(v));
    }
  }
  return d;
}

double remaining_ratio(const Tensor& mask) {
  if (mask.empty()) return 0.0;
  const MaskDistribution d = mask_distribution(mask);
  return static_cast<double>(d.neg + d.pos) / static_cast<double>(d.total());
}

MaskMode parse_mask_mode(std::string_view name) {
  if (name == "signed") return MaskMode::Signed;
  if (name == "binary") return MaskMode::Binary;
  throw std::invalid_argument("unknown mask mode '" + std::string(name) + "'");
}

std::string to_string(MaskMode mode) { return mode == MaskMode::Signed ? "signed" : "binary"; }

}  // namespace supermask
