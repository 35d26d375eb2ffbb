#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "supermask/rng.hpp"
#include "supermask/tensor.hpp"

namespace supermask {

enum class InitScheme { He, Xavier, Elu, Elus };
enum class InitDistribution { SignedConstant, Uniform };
/// Which fan plays the role of n in the He/ELU/ELUS variance rules.
enum class FanMode { FanOut, FanIn };
/// Constant used by the ELU/ELUS rules: the rounded 1.5, the forward-pass
/// constant 1/(1/2 + k) or the backward-pass constant 1/(1/2 + h).
enum class ElusRule { Combined, Forward, Backward };

struct InitSpec {
  InitScheme scheme = InitScheme::Elus;
  InitDistribution distribution = InitDistribution::SignedConstant;
  std::size_t fan_in = 1;
  std::size_t fan_out = 1;
  /// Initial probability of a zero mask entry (ELUS only).
  double p0 = 0.0;
  double alpha = 1.0;
  FanMode fan_mode = FanMode::FanOut;
  ElusRule rule = ElusRule::Combined;
  /// If > 0 and scheme is ELUS, the variance is he_scale² · 2/n instead of the
  /// ELUS rule (the "He scaled by √3" recipe used for the shipped presets).
  double he_scale = 0.0;

  void validate() const;
};

/// k = E[(α·(eᶻ − 1))² · 1{z<0}] for z ~ N(0,1); ≈ 0.144945 α².
double elu_forward_constant(double alpha);
/// h = E[α² e²ᶻ · 1{z<0}] for z ~ N(0,1); ≈ 0.168102 α².
double elu_backward_constant(double alpha);

double target_variance(const InitSpec& spec);

/// Every entry ±√variance, sign drawn with probability 1/2.
Tensor signed_constant(const Shape& shape, double variance, SeededRng& rng);
/// i.i.d. Uniform(−a, a) with a = √(3·variance).
Tensor uniform_init(const Shape& shape, double variance, SeededRng& rng);
/// Signed constant with variance scale² · 2/fan.
Tensor elus_scaled_he(const Shape& shape, std::size_t fan, double scale, SeededRng& rng);

/// Draws a tensor of `shape` with target_variance(spec) from spec.distribution.
Tensor initialize(const Shape& shape, const InitSpec& spec, SeededRng& rng);

struct Fans {
  std::size_t in;
  std::size_t out;
};
/// Dense [in×out] -> (in, out); conv [kh×kw×Cin×Cout] -> (kh·kw·Cin, kh·kw·Cout).
Fans fans_of(const Shape& weight_shape);

double uniform_bound(double variance);

InitScheme parse_init_scheme(std::string_view name);
InitDistribution parse_init_distribution(std::string_view name);
FanMode parse_fan_mode(std::string_view name);
ElusRule parse_elus_rule(std::string_view name);
std::string to_string(InitScheme s);
std::string to_string(InitDistribution d);
std::string to_string(FanMode m);
std::string to_string(ElusRule r);

}  // namespace supermask
