#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "supermask/init.hpp"
#include "supermask/masking.hpp"

using namespace supermask;
using testing::random_tensor;

namespace {

MaskState state(std::vector<double> m, double tn = -0.01, double tp = 0.01, MaskMode mode = MaskMode::Signed) {
  const std::size_t n = m.size();
  return MaskState{Tensor({n}, std::move(m)), tn, tp, mode};
}

Tensor random_ternary(const Shape& s, std::uint64_t seed) {
  SeededRng rng(seed);
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(rng.below(3)) - 1.0;
  return t;
}

}  // namespace

TEST_CASE("quantize hand cases") {
  CHECK(testing::vec(quantize(state({0.5, -0.02, 0.005}))) == std::vector<double>{1, -1, 0});
  CHECK(testing::vec(quantize(state({0.01, -0.01}))) == std::vector<double>{1, -1});
  CHECK(testing::vec(quantize(state({-5, 0.02}, -0.01, 0.01, MaskMode::Binary))) == std::vector<double>{0, 1});
  // With both thresholds at zero every score is kept; an exact zero takes the
  // negative branch, which is checked first.
  CHECK(testing::vec(quantize(state({0.0, 1e-300, -1e-300}, 0.0, 0.0))) == std::vector<double>{-1, 1, -1});
  CHECK_THROWS_AS(quantize(state({1}, 0.01, 0.02)), std::invalid_argument);
  CHECK_THROWS_AS(quantize(state({1}, -0.02, -0.01)), std::invalid_argument);
}

TEST_CASE("quantize properties") {
  const Tensor a = random_tensor({4000}, 1, 0.02);
  Tensor b = a;
  SeededRng rng(2);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += std::fabs(rng.normal()) * 0.01;
  const MaskState sa{a, -0.01, 0.01}, sb{b, -0.01, 0.01};
  const Tensor qa = quantize(sa), qb = quantize(sb);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(qa[i] <= qb[i]);

  // Re-quantizing the output scaled past the thresholds is a fixed point.
  Tensor scaled = qa;
  for (double& v : scaled.values()) v *= 0.5;
  MaskState again{scaled, -0.01, 0.01};
  CHECK(quantize(again) == qa);

  for (double c : {1.5, 3.0, 100.0}) {
    Tensor s = a;
    for (double& v : s.values()) v *= c;
    const Tensor qs = quantize(MaskState{s, -0.01, 0.01});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(qs[i]) >= std::fabs(qa[i]));
  }

  const Tensor bin = quantize(MaskState{a, -0.01, 0.01, MaskMode::Binary});
  const Tensor inf = quantize(MaskState{a, -std::numeric_limits<double>::infinity(), 0.01});
  CHECK(bin == inf);

  Tensor into({3});
  quantize_into(sa, into);
  CHECK(into == qa);
}

TEST_CASE("ste_grad") {
  CHECK(ste_grad(Tensor({1, 1}, {2.0}), Tensor({1, 1}, {-0.5}))[0] == -1.0);
  const Tensor g = random_tensor({30, 20}, 3);
  Tensor w = random_tensor({30, 20}, 4);
  w[7] = 0.0;
  const Tensor s = ste_grad(g, w);
  CHECK(s[7] == 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(s[i] == g[i] * w[i]);
  CHECK_THROWS_AS(ste_grad(g, Tensor({20, 30})), std::invalid_argument);
}

TEST_CASE("thresholds_for_target") {
  auto [tn, tp] = thresholds_for_target(0.1, 0.5);
  CHECK(tn == doctest::Approx(-0.05));
  CHECK(tp == doctest::Approx(0.05));
  std::tie(tn, tp) = thresholds_for_target(0.1, 0.0);
  CHECK(tn == 0.0);
  CHECK(tp == 0.0);
  CHECK_THROWS_AS(thresholds_for_target(0.1, 1.0), std::invalid_argument);

  // Xavier-uniform scores of a 784x300 layer with the fixed 0.01 threshold.
  const double var = 2.0 / (784 + 300);
  const double a = uniform_bound(var);
  CHECK(a == doctest::Approx(0.0744).epsilon(1e-3));
  SeededRng rng(5);
  const Tensor scores = uniform_init({1000, 1000}, var, rng);
  const double zero_frac =
      1.0 - remaining_ratio(quantize(MaskState{scores, -0.01, 0.01}));
  CHECK(zero_frac == doctest::Approx(0.01 / a).epsilon(0.01));
  CHECK(zero_frac == doctest::Approx(0.134).epsilon(0.01));

  std::tie(tn, tp) = thresholds_for_target(a, 0.3);
  const double calibrated = 1.0 - remaining_ratio(quantize(MaskState{scores, tn, tp}));
  CHECK(std::fabs(calibrated - 0.3) < 0.003);
}

TEST_CASE("mask statistics") {
  const Tensor m({4}, {1, -1, 0, 0});
  CHECK(remaining_ratio(m) == 0.5);
  CHECK(mask_distribution(m) == MaskDistribution{1, 2, 1});
  CHECK(remaining_ratio(Tensor({5})) == 0.0);
  CHECK(mask_distribution(Tensor({6}, 1.0)) == MaskDistribution{0, 0, 6});
  CHECK_THROWS_AS(remaining_ratio(Tensor({2}, {0.5, 1})), std::invalid_argument);
  CHECK_THROWS_AS(mask_distribution(Tensor({1}, {2.0})), std::invalid_argument);

  const Tensor r = random_ternary({37, 11}, 6);
  MaskDistribution oracle;
  for (double v : r.values()) (v < 0 ? oracle.neg : v > 0 ? oracle.pos : oracle.zero)++;
  CHECK(mask_distribution(r) == oracle);
  CHECK(mask_distribution(r).total() == r.size());
  CHECK(remaining_ratio(r) == doctest::Approx(double(oracle.neg + oracle.pos) / r.size()));
}

TEST_CASE("mask mode names") {
  CHECK(parse_mask_mode("signed") == MaskMode::Signed);
  CHECK(parse_mask_mode("binary") == MaskMode::Binary);
  CHECK(to_string(MaskMode::Binary) == "binary");
  CHECK_THROWS_AS(parse_mask_mode("ternary"), std::invalid_argument);
}
