#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "supermask/analysis.hpp"
#include "supermask/config.hpp"
#include "supermask/data.hpp"
#include "supermask/layers.hpp"
#include "supermask/sparse.hpp"

namespace supermask {

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Argmax accuracy and mean cross-entropy over the whole dataset.
EvalResult evaluate(const Network& net, const Dataset& data, std::size_t chunk = 1000);

struct DataPair {
  Dataset train;
  Dataset test;
};
DataPair load_data(const TrainConfig& cfg);

struct RunResult {
  std::filesystem::path dir;
  std::uint64_t seed = 0;
  std::vector<std::string> layer_names;
  std::vector<EpochMetrics> metrics;
  std::uint64_t weights_hash = 0;
  double compression_rate = 0.0;

  const EpochMetrics& final_metrics() const { return metrics.back(); }
};

/// Effective-weight and mask exports of every weighted layer.
std::vector<TernaryCSR> export_effective(const Network& net);
std::vector<TernaryCSR> export_masks(const Network& net);

/// Trains one network. When `out` is non-empty, writes config.resolved,
/// metrics.csv (one row per epoch, row 0 = before training),
/// masks/effective.tcsr, masks/masks.tcsr and finally run.info.
/// Throws on a non-finite loss and when masked training changed any weight.
RunResult train(const Config& cfg, const DataPair& data, const std::filesystem::path& out, std::ostream* log,
                std::optional<Network>* trained = nullptr);

/// Reads run.info; empty map if the run is missing or incomplete.
std::map<std::string, std::string> read_run_info(const std::filesystem::path& dir);
/// Loads a finished run directory.
RunResult load_run(const std::filesystem::path& dir);
/// Config stored in a run directory (config.resolved).
Config load_run_config(const std::filesystem::path& dir);
/// Regenerates the run's frozen weights from its seed, checks them against
/// run.info, and returns an unmasked network carrying W ⊙ mask from
/// masks/masks.tcsr. Bit-exact with the network at the end of training.
Network load_effective_network(const std::filesystem::path& dir);

struct QuantileSummary {
  double mean = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
};
/// Mean plus nearest-rank 5% and 95% quantiles.
QuantileSummary summarize(std::span<const double> values);

struct CampaignResult {
  std::vector<RunResult> runs;
  QuantileSummary accuracy;
  QuantileSummary remaining;
  QuantileSummary compression;
};

/// One run per seed under out/seed_<seed>. Complete runs with a matching
/// config digest are reused. Writes runs.csv and summary.csv; on failure
/// runs.csv still lists the runs that finished.
CampaignResult campaign(const Config& cfg, std::span<const std::uint64_t> seeds, const std::filesystem::path& out,
                        std::ostream* log);

}  // namespace supermask
