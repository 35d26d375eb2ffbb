#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "supermask/init.hpp"
#include "supermask/masking.hpp"
#include "supermask/rng.hpp"
#include "supermask/tensor.hpp"

namespace supermask {

/// Mean over unordered pairs of the fraction of equal entries. With
/// `absolute`, compares |m| (zero/nonzero agreement only).
double pairwise_mask_equality(std::span<const Tensor> masks, bool absolute);
/// Fraction of entries identical across every mask.
double unanimous_mask_equality(std::span<const Tensor> masks, bool absolute);

struct FilterMap {
  /// Nonzero mask entries attached to each input unit (row of the mask).
  std::vector<std::size_t> counts;
  /// Inputs whose whole row is zero.
  std::size_t fully_masked = 0;
};

/// `mask` is the first dense mask [inputs × units].
FilterMap first_layer_filter_map(const Tensor& mask);
/// P5 PGM of `counts` laid out as height × width, rescaled to 0..255.
void write_pgm(const std::filesystem::path& path, std::span<const std::size_t> counts, std::size_t height,
               std::size_t width);

/// Monte Carlo Var[z_l], l = 1..depth, for stacks of masked linear+ELU layers
/// of equal width. Each trial draws fresh weights from `scheme` (fans set to
/// `width`, p0 set to `p0`), fresh masks with exactly calibrated thresholds
/// and a batch of inputs ELU(z₀), z₀ ~ N(0, 1).
std::vector<double> variance_propagation(std::size_t depth, std::size_t width, double p0, const InitSpec& scheme,
                                         std::size_t trials, SeededRng& rng, std::size_t samples_per_trial = 16);

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  /// NaN for the pre-training row.
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double remaining_ratio = 0.0;
  std::vector<MaskDistribution> layers;
};

/// Header: epoch,lr,train_loss,test_loss,test_acc,remaining_ratio then
/// <layer>_neg,<layer>_zero,<layer>_pos per weighted layer.
std::string metrics_header(std::span<const std::string> layer_names);
std::string metrics_row(const EpochMetrics& m);
void write_metrics_csv(std::ostream& out, std::span<const std::string> layer_names, std::span<const EpochMetrics> rows);

struct MetricsTable {
  std::vector<std::string> layer_names;
  std::vector<EpochMetrics> rows;
};
MetricsTable read_metrics_csv(const std::filesystem::path& path);

/// One row per epoch, as written to metrics.csv.
std::vector<std::string> epoch_summary(const MetricsTable& table);

}  // namespace supermask
