#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "supermask/init.hpp"
#include "supermask/kernels.hpp"
#include "supermask/masking.hpp"

namespace supermask {

enum class Activation { Elu, None };

struct LayerSpec {
  enum class Kind { Dense, Conv, Pool, Flatten };
  Kind kind = Kind::Dense;
  /// Output units (dense) or filters (conv).
  std::size_t units = 0;
  /// Square kernel size for conv layers.
  std::size_t kernel = 3;
};

/// Layer list plus per-sample input shape. Bias-free; every weighted layer
/// except the last uses ELU.
struct ArchSpec {
  std::string name;
  Shape input;
  std::vector<LayerSpec> layers;
};

/// "fcn", "conv2", "conv4", "conv6" or "conv8".
ArchSpec build_architecture(std::string_view name);
/// Comma-separated layer list, e.g. "conv:64,pool,flatten,dense:256,dense:10".
ArchSpec parse_architecture(std::string_view layers, const Shape& input, std::string name = "custom");
std::string describe_layers(const ArchSpec& arch);
Shape parse_shape(std::string_view text);

/// Weight shapes of the weighted layers in order; validates that shapes compose.
std::vector<Shape> weight_shapes(const ArchSpec& arch);
std::size_t parameter_count(const ArchSpec& arch);

/// Frozen weights plus optional mask. Without a mask the layer is an
/// ordinary trainable layer (baseline mode).
struct MaskedDense {
  Tensor weights;  // [fan_in × fan_out]
  std::optional<MaskState> mask;
  Activation activation = Activation::Elu;
};

struct MaskedConv2D {
  Tensor kernel;  // [kh × kw × Cin × Cout]
  std::optional<MaskState> mask;
  Activation activation = Activation::Elu;
};

struct MaxPool {};
struct Flatten {};

using Layer = std::variant<MaskedDense, MaskedConv2D, MaxPool, Flatten>;

enum class MaskInit { XavierUniform, ElusUniform };
MaskInit parse_mask_init(std::string_view name);
std::string to_string(MaskInit m);

struct NetworkInit {
  /// Scheme, distribution, fan mode and ELUS parameters; fans are filled per layer.
  InitSpec weights;
  /// Negative p0 means "expected zero fraction implied by the thresholds".
  double p0 = -1.0;
  bool masked = true;
  MaskMode mode = MaskMode::Signed;
  MaskInit mask_init = MaskInit::XavierUniform;
  /// Scale on He-fan-in variance for MaskInit::ElusUniform.
  double mask_init_scale = 1.7320508075688772;
  /// Fixed thresholds, used unless initial_pruning_rate is set.
  double tau_n = -0.01;
  double tau_p = 0.01;
  std::optional<double> initial_pruning_rate;
};

struct LayerGrad {
  /// ∂L/∂(W ⊙ g(M)), same shape as the weights.
  Tensor effective;
  /// Straight-through score gradient; empty for unmasked layers.
  Tensor scores;
};

struct ForwardCache {
  struct Entry {
    Tensor input;
    Tensor pre_activation;
    Tensor effective;
    Shape input_shape;
    std::vector<std::size_t> argmax;
  };
  std::uint64_t version = 0;
  std::vector<Entry> entries;
  Tensor logits;
};

class Network {
 public:
  Network(ArchSpec arch, std::vector<Layer> layers, double alpha = 1.0);

  /// Deterministic construction: weights and scores of weighted layer i come
  /// from streams derived from (seed, i).
  static Network create(const ArchSpec& arch, const NetworkInit& init, std::uint64_t seed);

  const ArchSpec& arch() const { return arch_; }
  const std::vector<Layer>& layers() const { return layers_; }
  double alpha() const { return alpha_; }

  std::size_t weighted_count() const { return weighted_.size(); }
  std::string weighted_name(std::size_t i) const;
  const Tensor& weights(std::size_t i) const;
  const MaskState* mask(std::size_t i) const;
  bool masked() const;

  /// Mutable access to the trained tensor of weighted layer i: the scores when
  /// masked, the weights otherwise. Invalidates existing forward caches.
  Tensor& trainable(std::size_t i);
  /// Replaces the frozen weights of layer i (used when restoring exports).
  void set_weights(std::size_t i, Tensor w);
  void set_scores(std::size_t i, Tensor scores);

  Tensor effective_weights(std::size_t i) const;
  Tensor quantized_mask(std::size_t i) const;

  ForwardCache forward(const Tensor& batch) const;
  /// Logits only; keeps no activations.
  Tensor predict(const Tensor& batch) const;
  /// Gradients for every weighted layer, in order.
  std::vector<LayerGrad> backward(const ForwardCache& cache, const Tensor& loss_grad) const;

  std::uint64_t version() const { return version_; }
  /// Hash over all frozen weight tensors.
  std::uint64_t weights_hash() const;
  std::size_t parameter_count() const;
  /// Nonzero mask entries over all weighted layers / parameter count.
  double remaining_ratio() const;

 private:
  Tensor run(const Tensor& batch, ForwardCache* cache) const;
  Tensor& weights_ref(std::size_t i);
  std::optional<MaskState>& mask_ref(std::size_t i);

  ArchSpec arch_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> weighted_;  // indices into layers_
  double alpha_;
  std::uint64_t version_ = 0;
};

}  // namespace supermask
