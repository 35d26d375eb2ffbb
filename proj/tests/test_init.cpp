#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "helpers.hpp"
#include "supermask/init.hpp"

using namespace supermask;

namespace {

// Simpson's rule over z in [-12, 0] for E[f(z) 1{z<0}], z ~ N(0,1).
template <class F>
double negative_half_expectation(F f) {
  const int n = 200000;
  const double a = -12.0, h = -a / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double z = a + i * h;
    const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    s += w * f(z) * std::exp(-0.5 * z * z);
  }
  return s * h / 3.0 / std::sqrt(2.0 * std::numbers::pi);
}

double sample_variance(const Tensor& t) {
  double m = 0, v = 0;
  for (double x : t.values()) m += x;
  m /= static_cast<double>(t.size());
  for (double x : t.values()) v += (x - m) * (x - m);
  return v / static_cast<double>(t.size());
}

}  // namespace

TEST_CASE("ELU variance constants") {
  CHECK(elu_forward_constant(1.0) == doctest::Approx(0.144945).epsilon(1e-5));
  CHECK(elu_backward_constant(1.0) == doctest::Approx(0.168102).epsilon(1e-5));
  const double k = negative_half_expectation([](double z) { return std::pow(std::expm1(z), 2); });
  const double h = negative_half_expectation([](double z) { return std::exp(2 * z); });
  CHECK(elu_forward_constant(1.0) == doctest::Approx(k).epsilon(1e-9));
  CHECK(elu_backward_constant(1.0) == doctest::Approx(h).epsilon(1e-9));
  CHECK(elu_forward_constant(2.0) == doctest::Approx(4 * k).epsilon(1e-9));
  // Forward and backward rules: 1/(1/2 + k) and 1/(1/2 + h).
  CHECK(1.0 / (0.5 + elu_forward_constant(1.0)) == doctest::Approx(1.5505).epsilon(1e-4));
  CHECK(1.0 / (0.5 + elu_backward_constant(1.0)) == doctest::Approx(1.49678).epsilon(1e-5));
}

TEST_CASE("target variance per scheme") {
  InitSpec s;
  s.fan_in = 784;
  s.fan_out = 300;
  s.scheme = InitScheme::Elus;
  s.p0 = 0.5;
  CHECK(target_variance(s) == doctest::Approx(0.01).epsilon(1e-15));
  s.p0 = 0.0;
  CHECK(target_variance(s) == doctest::Approx(1.5 / 300).epsilon(1e-15));
  InitSpec elu = s;
  elu.scheme = InitScheme::Elu;
  CHECK(std::fabs(target_variance(s) - target_variance(elu)) / target_variance(elu) <= 1e-12);
  s.scheme = InitScheme::He;
  s.fan_out = 100;
  CHECK(target_variance(s) == doctest::Approx(0.02).epsilon(1e-15));
  s.fan_mode = FanMode::FanIn;
  CHECK(target_variance(s) == doctest::Approx(2.0 / 784).epsilon(1e-15));
  s.scheme = InitScheme::Xavier;
  CHECK(target_variance(s) == doctest::Approx(2.0 / 884).epsilon(1e-15));
  s.scheme = InitScheme::Elus;
  s.he_scale = std::sqrt(3.0);
  CHECK(target_variance(s) == doctest::Approx(6.0 / 784).epsilon(1e-14));
  s.he_scale = 0;
  s.rule = ElusRule::Forward;
  s.p0 = 0.5;
  CHECK(target_variance(s) == doctest::Approx(1.0 / ((0.5 + 0.144945) * 784 * 0.5)).epsilon(1e-5));
  s.rule = ElusRule::Backward;
  CHECK(target_variance(s) == doctest::Approx(1.0 / ((0.5 + 0.168102) * 784 * 0.5)).epsilon(1e-5));
  s.p0 = 1.0;
  CHECK_THROWS_AS(target_variance(s), std::invalid_argument);
}

TEST_CASE("signed constant draws") {
  SeededRng rng(3);
  const Tensor t = signed_constant({1000, 1000}, 0.01, rng);
  std::set<double> values(t.values().begin(), t.values().end());
  CHECK(values == std::set<double>{-0.1, 0.1});
  double mean = 0;
  for (double v : t.values()) mean += v;
  mean /= 1e6;
  CHECK(std::fabs(mean) < 3 * std::sqrt(0.01 / 1e6));
  SeededRng again(3);
  CHECK(signed_constant({1000, 1000}, 0.01, again) == t);
  CHECK_THROWS_AS(signed_constant({2}, 0.0, rng), std::invalid_argument);
}

TEST_CASE("uniform draws") {
  CHECK(uniform_bound(1.0 / 3.0) == doctest::Approx(1.0).epsilon(1e-15));
  SeededRng rng(4);
  const Tensor t = uniform_init({1000, 1000}, 0.02, rng);
  CHECK(std::fabs(sample_variance(t) / 0.02 - 1) < 0.02);
  const double a = uniform_bound(0.02);
  for (double v : t.values()) {
    CHECK_MESSAGE(std::fabs(v) < a, "outside (-a, a)");
    if (std::fabs(v) >= a) break;
  }
}

TEST_CASE("ELUS as scaled He") {
  SeededRng rng(5);
  const Tensor t = elus_scaled_he({300, 10}, 300, std::sqrt(3.0), rng);
  CHECK(std::fabs(t[0]) == doctest::Approx(std::sqrt(6.0 / 300)).epsilon(1e-15));
  CHECK(std::fabs(t[0]) == doctest::Approx(0.1414).epsilon(1e-3));
  SeededRng a(6), b(6);
  CHECK(elus_scaled_he({50, 50}, 300, 1.0, a) == signed_constant({50, 50}, 2.0 / 300, b));
}

TEST_CASE("empirical variance matches the target for every scheme") {
  for (InitScheme scheme : {InitScheme::He, InitScheme::Xavier, InitScheme::Elu, InitScheme::Elus}) {
    for (InitDistribution dist : {InitDistribution::SignedConstant, InitDistribution::Uniform}) {
      InitSpec s{scheme, dist, 256, 128, 0.3};
      SeededRng rng(static_cast<std::uint64_t>(scheme) * 10 + static_cast<std::uint64_t>(dist));
      const Tensor t = initialize({100000}, s, rng);
      CHECK(std::fabs(sample_variance(t) / target_variance(s) - 1) < 0.03);
    }
  }
}

TEST_CASE("fans and name parsing") {
  CHECK(fans_of({784, 300}).in == 784);
  CHECK(fans_of({3, 3, 16, 32}).in == 144);
  CHECK(fans_of({3, 3, 16, 32}).out == 288);
  CHECK_THROWS_AS(fans_of({3}), std::invalid_argument);
  for (auto s : {"he", "xavier", "elu", "elus"}) CHECK(to_string(parse_init_scheme(s)) == s);
  for (auto s : {"signed_constant", "uniform"}) CHECK(to_string(parse_init_distribution(s)) == s);
  for (auto s : {"fan_in", "fan_out"}) CHECK(to_string(parse_fan_mode(s)) == s);
  for (auto s : {"combined", "forward", "backward"}) CHECK(to_string(parse_elus_rule(s)) == s);
  CHECK_THROWS_AS(parse_init_scheme("lecun"), std::invalid_argument);
}

TEST_CASE("derived rng streams") {
  SeededRng a = SeededRng::derive(7, RngStream::Weights, 0);
  SeededRng b = SeededRng::derive(7, RngStream::Weights, 0);
  SeededRng c = SeededRng::derive(7, RngStream::Weights, 1);
  SeededRng d = SeededRng::derive(7, RngStream::MaskScores, 0);
  const auto x = a.next_u64();
  CHECK(x == b.next_u64());
  CHECK(x != c.next_u64());
  CHECK(x != d.next_u64());
  SeededRng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform01();
    CHECK((u > 0.0 && u < 1.0));
    CHECK(r.below(7) < 7);
  }
}
