#include "supermask/init.hpp"

#include <cmath>
#include <stdexcept>

namespace supermask {

namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

void InitSpec::validate() const {
  if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("InitSpec: fans must be positive");
  if (!(p0 >= 0.0 && p0 < 1.0)) throw std::invalid_argument("InitSpec: p0 must lie in [0, 1)");
  if (!(alpha > 0.0)) throw std::invalid_argument("InitSpec: alpha must be positive");
  if (he_scale < 0.0) throw std::invalid_argument("InitSpec: he_scale must be non-negative");
}

double elu_forward_constant(double alpha) {
  // Split E[(αeᶻ − α)² 1{z<0}] into Gaussian integrals over the shifted
  // densities N(2,1), N(1,1) and N(0,1), each restricted to z < 0.
  const double a = std::exp(2.0) * std_normal_cdf(-2.0);
  const double b = 2.0 * std::exp(0.5) * std_normal_cdf(-1.0);
  return alpha * alpha * (a - b + 0.5);
}

double elu_backward_constant(double alpha) { return alpha * alpha * std::exp(2.0) * std_normal_cdf(-2.0); }

double target_variance(const InitSpec& spec) {
  spec.validate();
  const double n = static_cast<double>(spec.fan_mode == FanMode::FanOut ? spec.fan_out : spec.fan_in);
  auto elu_rule = [&](double keep) {
    switch (spec.rule) {
      case ElusRule::Combined:
        return 1.5 / (n * keep);
      case ElusRule::Forward:
        return 1.0 / ((0.5 + elu_forward_constant(spec.alpha)) * n * keep);
      case ElusRule::Backward:
        return 1.0 / ((0.5 + elu_backward_constant(spec.alpha)) * n * keep);
    }
    return 0.0;
  };
  switch (spec.scheme) {
    case InitScheme::He:
      return 2.0 / n;
    case InitScheme::Xavier:
      return 2.0 / static_cast<double>(spec.fan_in + spec.fan_out);
    case InitScheme::Elu:
      return elu_rule(1.0);
    case InitScheme::Elus:
      if (spec.he_scale > 0.0) return spec.he_scale * spec.he_scale * 2.0 / n;
      return elu_rule(1.0 - spec.p0);
  }
  throw std::logic_error("target_variance: unknown scheme");
}

Tensor signed_constant(const Shape& shape, double variance, SeededRng& rng) {
  if (!(variance > 0.0)) throw std::invalid_argument("signed_constant: variance must be positive");
  const double magnitude = std::sqrt(variance);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.coin() ? -magnitude : magnitude;
  return t;
}

double uniform_bound(double variance) { return std::sqrt(3.0 * variance); }

Tensor uniform_init(const Shape& shape, double variance, SeededRng& rng) {
  if (!(variance > 0.0)) throw std::invalid_argument("uniform_init: variance must be positive");
  const double a = uniform_bound(variance);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
  return t;
}

Tensor elus_scaled_he(const Shape& shape, std::size_t fan, double scale, SeededRng& rng) {
  if (fan == 0) throw std::invalid_argument("elus_scaled_he: fan must be positive");
  return signed_constant(shape, scale * scale * 2.0 / static_cast<double>(fan), rng);
}

Tensor initialize(const Shape& shape, const InitSpec& spec, SeededRng& rng) {
  const double variance = target_variance(spec);
  return spec.distribution == InitDistribution::SignedConstant ? signed_constant(shape, variance, rng)
                                                                 : uniform_init(shape, variance, rng);
}

Fans fans_of(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 4) return {s[0] * s[1] * s[2], s[0] * s[1] * s[3]};
  throw std::invalid_argument("fans_of: unsupported weight shape " + shape_string(s));
}

InitScheme parse_init_scheme(std::string_view name) {
  if (name == "he") return InitScheme::He;
  if (name == "xavier") return InitScheme::Xavier;
  if (name == "elu") return InitScheme::Elu;
  if (name == "elus") return InitScheme::Elus;
  throw std::invalid_argument("unknown init scheme '" + std::string(name) + "'");
}

InitDistribution parse_init_distribution(std::string_view name) {
  if (name == "signed_constant") return InitDistribution::SignedConstant;
  if (name == "uniform") return InitDistribution::Uniform;
  throw std::invalid_argument("unknown init distribution '" + std::string(name) + "'");
}

FanMode parse_fan_mode(std::string_view name) {
  if (name == "fan_out") return FanMode::FanOut;
  if (name == "fan_in") return FanMode::FanIn;
  throw std::invalid_argument("unknown fan mode '" + std::string(name) + "'");
}

ElusRule parse_elus_rule(std::string_view name) {
  if (name == "combined") return ElusRule::Combined;
  if (name == "forward") return ElusRule::Forward;
  if (name == "backward") return ElusRule::Backward;
  throw std::invalid_argument("unknown ELUS rule '" + std::string(name) + "'");
}

std::string to_string(InitScheme s) {
  switch (s) {
    case InitScheme::He: return "he";
    case InitScheme::Xavier: return "xavier";
    case InitScheme::Elu: return "elu";
    case InitScheme::Elus: return "elus";
  }
  return "?";
}

std::string to_string(InitDistribution d) {
  return d == InitDistribution::SignedConstant ? "signed_constant" : "uniform";
}

std::string to_string(FanMode m) { return m == FanMode::FanOut ? "fan_out" : "fan_in"; }

std::string to_string(ElusRule r) {
  switch (r) {
    case ElusRule::Combined: return "combined";
    case ElusRule::Forward: return "forward";
    case ElusRule::Backward: return "backward";
  }
  return "?";
}

}  // namespace supermask
