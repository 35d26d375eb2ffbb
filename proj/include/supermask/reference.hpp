#pragma once

#include "supermask/kernels.hpp"

// Serial, loop-for-loop versions of the hot kernels. Kept as oracles for the
// tests and as the baseline in the kernel benchmark; never used in training.
namespace supermask::reference {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& input, const Tensor& kernel);
PoolResult maxpool2(const Tensor& input);

}  // namespace supermask::reference
