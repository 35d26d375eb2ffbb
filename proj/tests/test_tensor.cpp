#include <doctest.h>

#include <cmath>
#include <numbers>
#include <omp.h>

#include "helpers.hpp"
#include "supermask/kernels.hpp"
#include "supermask/reference.hpp"

using namespace supermask;
using testing::max_rel_diff;
using testing::random_tensor;

TEST_CASE("tensor construction and reshape") {
  CHECK_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(t.at(1, 2) == 6);
  Tensor r = t.reshaped({3, 2});
  CHECK(r.at(2, 1) == 6);
  CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
  CHECK(tensor_hash(t) == tensor_hash(Tensor({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6})));
  CHECK(tensor_hash(t) != tensor_hash(r));
}

TEST_CASE("checked mode rejects non-finite values") {
  set_checked_mode(true);
  CHECK_THROWS_AS(Tensor({1}, std::vector<double>{NAN}), std::domain_error);
  CHECK_THROWS_AS(elu(Tensor({1}, std::vector<double>{INFINITY}), 1.0), std::domain_error);
  set_checked_mode(false);
  CHECK_NOTHROW(Tensor({1}, std::vector<double>{NAN}));
}

TEST_CASE("matmul hand cases") {
  const Tensor id({2, 2}, {1, 0, 0, 1});
  const Tensor v({2, 1}, {3, 4});
  CHECK(matmul(id, v) == v);
  CHECK(matmul(Tensor({1, 2}, {1, 2}), v)[0] == 11);
  CHECK_THROWS_AS(matmul(id, Tensor({3, 1})), std::invalid_argument);
}

TEST_CASE("matmul variants match the triple-loop oracle") {
  const std::size_t dims[][3] = {{5, 7, 3}, {1, 1, 1}, {17, 33, 65}, {64, 784, 300}, {3, 129, 18}};
  std::uint64_t seed = 1;
  for (const auto& d : dims) {
    const Tensor a = random_tensor({d[0], d[1]}, seed++);
    const Tensor b = random_tensor({d[1], d[2]}, seed++);
    const Tensor oracle = reference::matmul(a, b);
    CHECK(max_rel_diff(matmul(a, b), oracle) < 1e-12);
    CHECK(max_rel_diff(matmul_tn(transpose(a), b), oracle) < 1e-12);
    CHECK(max_rel_diff(matmul_nt(a, transpose(b)), oracle) < 1e-12);
  }
}

TEST_CASE("elu and elu_grad") {
  const Tensor x({4}, {0.0, 2.0, -std::numbers::ln2, 3.0});
  const Tensor y = elu(x, 1.0);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 2.0);
  CHECK(y[2] == doctest::Approx(-0.5).epsilon(1e-15));
  const Tensor g = elu_grad(x, 1.0);
  CHECK(g[0] == 1.0);
  CHECK(g[3] == 1.0);
  CHECK(g[2] == doctest::Approx(0.5).epsilon(1e-15));

  // Central differences away from the kink.
  const Tensor r = random_tensor({2000}, 9, 4.0);
  const Tensor gr = elu_grad(r, 1.0);
  const double h = 1e-6;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (std::fabs(r[i]) < 1e-3 || std::fabs(r[i]) > 10) continue;
    const double up = elu(Tensor({1}, {r[i] + h}), 1.0)[0];
    const double dn = elu(Tensor({1}, {r[i] - h}), 1.0)[0];
    CHECK(std::fabs((up - dn) / (2 * h) - gr[i]) < 1e-6);
  }
  // Strictly increasing and bounded below by -alpha.
  const Tensor big = elu(Tensor({3}, {-30.0, -10.0, -1.0}), 2.0);
  CHECK(big[0] >= -2.0);
  CHECK(big[0] < big[1]);
  CHECK(big[1] < big[2]);
}

TEST_CASE("conv2d impulse response and oracle") {
  Tensor one = conv2d(Tensor({1, 1, 1, 1}, {3.0}), Tensor({1, 1, 1, 1}, {-2.0}));
  CHECK(one[0] == -6.0);

  // A delta at the centre of a 5x5 image reproduces the kernel rotated by
  // 180 degrees (cross-correlation).
  Tensor delta({1, 5, 5, 1});
  delta[2 * 5 + 2] = 1.0;
  const Tensor k = random_tensor({3, 3, 1, 1}, 4);
  const Tensor out = conv2d(delta, k);
  for (std::size_t dy = 0; dy < 3; ++dy) {
    for (std::size_t dx = 0; dx < 3; ++dx) CHECK(out[(1 + dy) * 5 + 1 + dx] == k[(2 - dy) * 3 + (2 - dx)]);
  }

  const Tensor x = random_tensor({2, 5, 5, 3}, 5);
  const Tensor w = random_tensor({3, 3, 3, 4}, 6);
  CHECK(max_rel_diff(conv2d(x, w), reference::conv2d(x, w)) < 1e-10);
  const Tensor x2 = random_tensor({3, 8, 6, 2}, 7);
  const Tensor w2 = random_tensor({5, 5, 2, 3}, 8);
  CHECK(max_rel_diff(conv2d(x2, w2), reference::conv2d(x2, w2)) < 1e-10);
  CHECK_THROWS_AS(conv2d(x, random_tensor({3, 3, 2, 4}, 1)), std::invalid_argument);
}

TEST_CASE("conv2d backward kernels are adjoints of the forward map") {
  const Tensor x = random_tensor({2, 6, 4, 3}, 11);
  const Tensor k = random_tensor({3, 3, 3, 5}, 12);
  const Tensor g = random_tensor({2, 6, 4, 5}, 13);
  auto dot = [](const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  const double lhs = dot(conv2d(x, k), g);
  CHECK(dot(x, conv2d_backward_input(g, k)) == doctest::Approx(lhs).epsilon(1e-12));
  CHECK(dot(k, conv2d_backward_kernel(x, g, k.shape())) == doctest::Approx(lhs).epsilon(1e-12));
}

TEST_CASE("maxpool2 values, ties and oracle") {
  PoolResult p = maxpool2(Tensor({1, 2, 2, 1}, {1, 2, 3, 4}));
  CHECK(p.output[0] == 4);
  CHECK(p.argmax[0] == 3);
  p = maxpool2(Tensor({1, 2, 2, 1}, 7.0));
  CHECK(p.output[0] == 7);
  CHECK(p.argmax[0] == 0);
  CHECK_THROWS_AS(maxpool2(Tensor({1, 3, 2, 1})), std::invalid_argument);

  const Tensor x = random_tensor({2, 4, 4, 3}, 21);
  const PoolResult fast = maxpool2(x);
  const PoolResult slow = reference::maxpool2(x);
  CHECK(fast.output == slow.output);
  CHECK(fast.argmax == slow.argmax);

  const Tensor g = random_tensor(fast.output.shape(), 22);
  const Tensor back = maxpool2_backward(g, fast.argmax, x.shape());
  double s_in = 0, s_out = 0;
  for (double v : back.values()) s_in += v;
  for (double v : g.values()) s_out += v;
  CHECK(s_in == doctest::Approx(s_out).epsilon(1e-12));
}

TEST_CASE("softmax cross-entropy") {
  std::vector<int> labels{3};
  LossResult r = softmax_xent(Tensor({1, 10}, 0.5), labels);
  CHECK(r.loss == doctest::Approx(std::log(10.0)).epsilon(1e-14));

  Tensor sharp({1, 3}, {0.0, 800.0, 0.0});
  std::vector<int> one{1};
  CHECK(softmax_xent(sharp, one).loss < 1e-300 + 1e-12);
  std::vector<int> bad{3};
  CHECK_THROWS_AS(softmax_xent(Tensor({1, 3}), bad), std::invalid_argument);

  const Tensor z = random_tensor({3, 4}, 31);
  const std::vector<int> y{0, 3, 2};
  r = softmax_xent(z, y);
  CHECK(r.loss >= 0);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 4; ++j) s += r.grad.at(i, j);
    CHECK(std::fabs(s) < 1e-12);
  }
  const double h = 1e-6;
  for (std::size_t k = 0; k < z.size(); ++k) {
    Tensor up = z, dn = z;
    up[k] += h;
    dn[k] -= h;
    const double fd = (softmax_xent(up, y).loss - softmax_xent(dn, y).loss) / (2 * h);
    CHECK(std::fabs(fd - r.grad[k]) < 1e-6);
  }
}

TEST_CASE("argmax_rows breaks ties toward the lowest index") {
  const Tensor z({2, 3}, {1, 5, 5, 2, 2, 2});
  CHECK(argmax_rows(z) == std::vector<int>{1, 0});
}

TEST_CASE("kernels are bit-identical across thread counts") {
  const Tensor a = random_tensor({37, 91}, 41);
  const Tensor b = random_tensor({91, 53}, 42);
  const Tensor x = random_tensor({3, 8, 8, 4}, 43);
  const Tensor k = random_tensor({3, 3, 4, 6}, 44);
  const Tensor g = random_tensor({3, 8, 8, 6}, 45);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const Tensor m1 = matmul(a, b), c1 = conv2d(x, k), bi1 = conv2d_backward_input(g, k),
               bk1 = conv2d_backward_kernel(x, g, k.shape()), t1 = matmul_tn(a, random_tensor({37, 5}, 46));
  omp_set_num_threads(4);
  CHECK(matmul(a, b) == m1);
  CHECK(conv2d(x, k) == c1);
  CHECK(conv2d_backward_input(g, k) == bi1);
  CHECK(conv2d_backward_kernel(x, g, k.shape()) == bk1);
  CHECK(matmul_tn(a, random_tensor({37, 5}, 46)) == t1);
  omp_set_num_threads(saved);
}
