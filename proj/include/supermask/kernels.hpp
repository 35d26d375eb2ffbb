#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "supermask/tensor.hpp"

// Numeric kernels used by the network. All are pure functions. Loops over
// independent output elements are OpenMP-parallel; every output element is
// reduced in a fixed order, so results are identical at any thread count.
// Serial reference versions live in supermask/reference.hpp.
namespace supermask {

/// C = A·B for A[m×k], B[k×n]. Each c_ij accumulates a_ip·b_pj for p = 0..k-1.
Tensor matmul(const Tensor& a, const Tensor& b);
/// C = Aᵀ·B for A[k×m], B[k×n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// C = A·Bᵀ for A[m×k], B[n×k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor hadamard(const Tensor& a, const Tensor& b);

/// x if x > 0, else alpha·(eˣ − 1).
Tensor elu(const Tensor& x, double alpha);
/// 1 if x >= 0, else alpha·eˣ. The value at 0 is pinned to 1.
Tensor elu_grad(const Tensor& x, double alpha);

/// Stride-1 'same' cross-correlation, no bias.
/// input [N×H×W×Cin], kernel [kh×kw×Cin×Cout] (odd kh, kw) -> [N×H×W×Cout].
Tensor conv2d(const Tensor& input, const Tensor& kernel);
/// d(loss)/d(input) given d(loss)/d(output).
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel);
/// d(loss)/d(kernel) given the forward input and d(loss)/d(output).
Tensor conv2d_backward_kernel(const Tensor& input, const Tensor& grad_out, const Shape& kernel_shape);

struct PoolResult {
  Tensor output;
  /// Flat input index of the selected element, one per output element.
  std::vector<std::size_t> argmax;
};

/// 2×2 max pooling with stride 2 over [N×H×W×C]; H and W must be even.
/// Ties go to the first maximal element in row-major window order.
PoolResult maxpool2(const Tensor& input);
Tensor maxpool2_backward(const Tensor& grad_out, std::span<const std::size_t> argmax, const Shape& input_shape);

struct LossResult {
  double loss = 0.0;
  /// (softmax − onehot) / N
  Tensor grad;
};

/// Mean softmax cross-entropy over the batch with log-sum-exp stabilisation.
LossResult softmax_xent(const Tensor& logits, std::span<const int> labels);

/// Row-wise argmax; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace supermask
