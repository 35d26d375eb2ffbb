#include "supermask/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace supermask {

void SgdConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("optim.lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("optim.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("optim.weight_decay must be non-negative");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw std::invalid_argument("optim.decay_rate must lie in (0, 1]");
  if (decay_step == 0) throw std::invalid_argument("optim.decay_step must be positive");
}

DecayForm parse_decay_form(std::string_view name) {
  if (name == "coupled") return DecayForm::Coupled;
  if (name == "l2_loss") return DecayForm::L2Loss;
  throw std::invalid_argument("unknown decay form '" + std::string(name) + "' (coupled or l2_loss)");
}

std::string to_string(DecayForm f) { return f == DecayForm::Coupled ? "coupled" : "l2_loss"; }

double lr_at(std::size_t epoch, const SgdConfig& cfg) {
  cfg.validate();
  return cfg.lr * std::pow(cfg.decay_rate, static_cast<double>(epoch / cfg.decay_step));
}

void sgd_step(Tensor& params, const Tensor& grad, Tensor& velocity, double lr, const SgdConfig& cfg) {
  require_same_shape(params, grad, "sgd_step grad");
  require_same_shape(params, velocity, "sgd_step velocity");
  if (checked_mode()) check_finite(grad, "sgd_step gradient");
  const std::size_t n = params.size();
  double* p = params.raw();
  double* v = velocity.raw();
  const double* g = grad.raw();
  const double mu = cfg.momentum;
  const double wd = cfg.decay_form == DecayForm::L2Loss ? 2.0 * cfg.weight_decay : cfg.weight_decay;
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i] + wd * p[i];
    v[i] = mu * v[i] + gi;
    p[i] -= lr * v[i];
  }
}

Sgd::Sgd(SgdConfig cfg, const std::vector<Shape>& shapes) : cfg_(cfg) {
  cfg_.validate();
  velocity_.reserve(shapes.size());
  for (const Shape& s : shapes) velocity_.emplace_back(s);
}

void Sgd::step(std::size_t i, Tensor& params, const Tensor& grad, double lr) {
  sgd_step(params, grad, velocity_.at(i), lr, cfg_);
}

}  // namespace supermask
