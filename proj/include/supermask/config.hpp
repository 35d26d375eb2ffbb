#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "supermask/layers.hpp"
#include "supermask/optim.hpp"

namespace supermask {

/// Flat `key = value` configuration with dotted keys. Only explicitly set
/// keys are stored; everything else resolves to the documented default.
class Config {
 public:
  struct KeyInfo {
    std::string_view key;
    std::string_view fallback;
    std::string_view help;
  };
  static const std::vector<KeyInfo>& keys();

  /// `#` starts a comment; blank lines are ignored.
  static Config parse(std::string_view text, std::string_view origin = "<config>");
  static Config load(const std::filesystem::path& path);
  static Config preset(std::string_view name);
  static std::vector<std::string> preset_names();

  void set(std::string_view key, std::string_view value);
  /// "key=value".
  void apply_override(std::string_view assignment);
  /// Entries of `other` replace entries here.
  void merge(const Config& other);

  bool has(std::string_view key) const;
  std::string get(std::string_view key) const;
  const std::map<std::string, std::string, std::less<>>& explicit_values() const { return values_; }

  /// Every key with its resolved value, sorted, one `key = value` per line.
  std::string resolved_text() const;
  /// FNV-1a of resolved_text() without data.dir.
  std::uint64_t digest() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

enum class TrainMode { Signed, Binary, Baseline };

struct TrainConfig {
  ArchSpec arch;
  NetworkInit init;
  TrainMode mode = TrainMode::Signed;
  SgdConfig sgd;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::size_t eval_batch = 1000;
  std::uint64_t seed = 0;
  std::string dataset = "mnist";
  std::filesystem::path data_dir;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  bool checked = false;

  /// Validates cross-key rules (threshold exclusivity, baseline without mask keys).
  static TrainConfig from(const Config& cfg);
};

std::string digest_hex(std::uint64_t digest);

}  // namespace supermask
