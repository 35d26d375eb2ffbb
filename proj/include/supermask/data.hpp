#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "supermask/tensor.hpp"

namespace supermask {

enum class Split { Train, Test };

struct Dataset {
  Tensor images;  // [N×H×W×C]
  std::vector<int> labels;
  Split split = Split::Train;
  std::size_t num_classes = 10;

  std::size_t size() const { return labels.size(); }
  /// Per-sample shape H×W×C.
  Shape sample_shape() const;
  void validate() const;
};

/// Big-endian IDX pair (0x803 images, 0x801 labels); bytes mapped by /255.
/// `limit` > 0 keeps only the first `limit` samples.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       std::size_t limit = 0);
/// Concatenated CIFAR-10 binary batches: 1 label byte + 3072 planar RGB bytes.
Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& files, std::size_t limit = 0);

/// (x − mean) / max(std, 1/√N) with the population std.
Tensor standardize_per_image(const Tensor& image);
/// Standardizes every image of [N × ...] in place.
void standardize_images(Tensor& images);

/// "mnist" or "cifar10": finds the canonical files under `dir`, `dir/<name>`
/// or `dir/cifar-10-batches-bin`, loads and standardizes.
Dataset load_dataset(std::string_view name, const std::filesystem::path& dir, Split split, std::size_t limit = 0);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

/// Samples idx[0], idx[1], ... in that order.
Batch gather(const Dataset& ds, std::span<const std::size_t> idx);

}  // namespace supermask
