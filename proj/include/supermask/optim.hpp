#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "supermask/tensor.hpp"

namespace supermask {

/// How weight_decay enters the gradient. Coupled: g + wd·p. L2Loss: the
/// gradient of wd·‖p‖² added to the loss, g + 2·wd·p (the Keras
/// kernel_regularizer convention).
enum class DecayForm { Coupled, L2Loss };
DecayForm parse_decay_form(std::string_view name);
std::string to_string(DecayForm f);

struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double decay_rate = 0.96;
  std::size_t decay_step = 10;
  DecayForm decay_form = DecayForm::Coupled;

  void validate() const;
};

/// Staircase schedule: lr · decay_rate^floor(epoch / decay_step).
double lr_at(std::size_t epoch, const SgdConfig& cfg);

/// One momentum step with coupled L2:
///   g = grad + wd·params;  v = μ·v + g;  params -= lr·v.
void sgd_step(Tensor& params, const Tensor& grad, Tensor& velocity, double lr, const SgdConfig& cfg);

/// Per-tensor velocity buffers, zero-initialized.
class Sgd {
 public:
  Sgd(SgdConfig cfg, const std::vector<Shape>& shapes);

  const SgdConfig& config() const { return cfg_; }
  std::size_t size() const { return velocity_.size(); }
  const Tensor& velocity(std::size_t i) const { return velocity_.at(i); }
  void step(std::size_t i, Tensor& params, const Tensor& grad, double lr);

 private:
  SgdConfig cfg_;
  std::vector<Tensor> velocity_;
};

}  // namespace supermask
