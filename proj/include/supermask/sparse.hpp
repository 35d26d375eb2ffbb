#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "supermask/tensor.hpp"

namespace supermask {

/// CSR storage of W ⊙ ḡ(M): signs plus either one shared magnitude
/// (signed-constant weights) or one magnitude per stored entry.
struct TernaryCSR {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint32_t> row_ptr;
  std::vector<std::uint32_t> col_idx;
  std::vector<std::int8_t> sign;
  bool shared_magnitude = true;
  double magnitude = 0.0;
  std::vector<double> magnitudes;

  std::size_t nnz() const { return col_idx.size(); }
  double value_at(std::size_t k) const { return sign[k] * (shared_magnitude ? magnitude : magnitudes[k]); }
  void validate() const;
  bool operator==(const TernaryCSR&) const = default;
};

/// Rank-2 weights export as-is; higher ranks flatten to (prod of leading dims, last dim).
TernaryCSR export_layer(const Tensor& weights, const Tensor& mask, std::string name = "");
/// Dense [rows×cols] tensor equal to W ⊙ mask (reshaped).
Tensor reconstruct(const TernaryCSR& layer);

struct ByteSizes {
  std::size_t dense = 0;
  std::size_t csr = 0;
};
/// float32 dense model vs. float32 data + int32 col_idx + int32 row_ptr.
ByteSizes byte_sizes(const TernaryCSR& layer);
/// 1 − Σ csr / Σ dense.
double compression_rate(std::span<const TernaryCSR> layers);

/// y = A·x with a multiplication-free inner loop when the magnitude is shared.
std::vector<double> sparse_matvec(const TernaryCSR& layer, std::span<const double> x);

/// Little-endian "TCSR" container. Magnitudes are stored as float32.
void write_tcsr(const std::filesystem::path& path, std::span<const TernaryCSR> layers);
std::vector<TernaryCSR> read_tcsr(const std::filesystem::path& path);

}  // namespace supermask
