#include "supermask/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "supermask/kernels.hpp"
#include "supermask/rng.hpp"

namespace supermask {

namespace {

double norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

std::size_t pick(SeededRng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// True when (net, x) is not a generic point for a finite-difference check:
// a hidden pre-activation is exactly 0 (ELU's second derivative jumps there),
// a pooling window has a tied maximum, or some weighted layer's gradient
// vanishes so that a relative error only measures roundoff.
bool degenerate(const Network& net, const Tensor& x, std::span<const int> labels) {
  const ForwardCache cache = net.forward(x);
  for (std::size_t i = 0; i + 1 < cache.entries.size(); ++i) {
    for (double v : cache.entries[i].pre_activation.values()) {
      if (v == 0.0) return true;
    }
  }
  const auto& layers = net.layers();
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (!std::holds_alternative<MaxPool>(layers[i]) || cache.entries[i - 1].pre_activation.empty()) continue;
    const Tensor in = elu(cache.entries[i - 1].pre_activation, net.alpha());
    const Shape& s = in.shape();
    const std::size_t h = s[1], w = s[2], ch = s[3];
    for (std::size_t n = 0; n < s[0]; ++n) {
      for (std::size_t y = 0; y < h; y += 2) {
        for (std::size_t xx = 0; xx < w; xx += 2) {
          for (std::size_t c = 0; c < ch; ++c) {
            double v[4];
            for (std::size_t k = 0; k < 4; ++k) v[k] = in[((n * h + y + k / 2) * w + xx + k % 2) * ch + c];
            const double m = *std::max_element(v, v + 4);
            if (std::count(v, v + 4, m) > 1) return true;
          }
        }
      }
    }
  }
  const LossResult loss = softmax_xent(cache.logits, labels);
  for (const LayerGrad& g : net.backward(cache, loss.grad)) {
    if (norm(g.effective) < 1e-6) return true;
  }
  return false;
}

}  // namespace

GradCheckResult gradcheck_network(const Network& net, const Tensor& inputs, std::span<const int> labels, double h) {
  GradCheckResult r;
  r.description = net.arch().name + " [" + describe_layers(net.arch()) + "]";
  const ForwardCache cache = net.forward(inputs);
  const LossResult loss = softmax_xent(cache.logits, labels);
  const std::vector<LayerGrad> grads = net.backward(cache, loss.grad);

  r.ste_exact = true;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (net.mask(i)) r.ste_exact = r.ste_exact && grads[i].scores == ste_grad(grads[i].effective, net.weights(i));
  }

  // Plain network carrying the effective weights, so each entry can be perturbed.
  NetworkInit plain;
  plain.masked = false;
  plain.weights.distribution = InitDistribution::Uniform;
  plain.weights.scheme = InitScheme::He;
  plain.weights.alpha = net.alpha();
  Network probe = Network::create(net.arch(), plain, 0);
  for (std::size_t i = 0; i < net.weighted_count(); ++i) probe.set_weights(i, net.effective_weights(i));

  for (std::size_t i = 0; i < net.weighted_count(); ++i) {
    Tensor fd(grads[i].effective.shape());
    for (std::size_t k = 0; k < fd.size(); ++k) {
      Tensor& w = probe.trainable(i);
      const double orig = w[k];
      w[k] = orig + h;
      const double up = softmax_xent(probe.predict(inputs), labels).loss;
      probe.trainable(i)[k] = orig - h;
      const double down = softmax_xent(probe.predict(inputs), labels).loss;
      probe.trainable(i)[k] = orig;
      fd[k] = (up - down) / (2.0 * h);
    }
    Tensor diff = fd;
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] -= grads[i].effective[k];
    const double scale = std::max(norm(fd), norm(grads[i].effective));
    const double rel = scale > 0.0 ? norm(diff) / scale : 0.0;
    r.max_rel_error = std::max(r.max_rel_error, rel);
  }
  return r;
}

std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed, std::size_t cases, double h) {
  std::vector<GradCheckResult> out;
  SeededRng rng = SeededRng::derive(seed, RngStream::Analysis, 0);
  for (std::size_t c = 0; c < cases; ++c) {
    // Redraw until the sampled point is generic (see degenerate()).
    while (true) {
      ArchSpec arch;
      const std::size_t classes = pick(rng, 2, 5);
      if (c % 2 == 0) {
        const std::size_t inputs = pick(rng, 1, 8);
        arch = {"dense", {inputs}, {}};
        const std::size_t hidden = pick(rng, 0, 2);
        for (std::size_t l = 0; l < hidden; ++l) arch.layers.push_back({LayerSpec::Kind::Dense, pick(rng, 1, 8), 0});
        arch.layers.push_back({LayerSpec::Kind::Dense, classes, 0});
      } else {
        const std::size_t side = 2 * pick(rng, 1, 3);
        arch = {"conv", {side, side, pick(rng, 1, 3)}, {}};
        const std::size_t convs = pick(rng, 1, 2);
        for (std::size_t l = 0; l < convs; ++l) arch.layers.push_back({LayerSpec::Kind::Conv, pick(rng, 1, 8), 3});
        if (rng.coin()) arch.layers.push_back({LayerSpec::Kind::Pool, 0, 0});
        arch.layers.push_back({LayerSpec::Kind::Flatten, 0, 0});
        arch.layers.push_back({LayerSpec::Kind::Dense, classes, 0});
      }
      NetworkInit init;
      init.weights.scheme = InitScheme::He;
      init.weights.fan_mode = FanMode::FanIn;
      init.weights.distribution = rng.coin() ? InitDistribution::Uniform : InitDistribution::SignedConstant;
      init.mode = rng.coin() ? MaskMode::Signed : MaskMode::Binary;
      init.initial_pruning_rate = 0.3;
      const Network net = Network::create(arch, init, rng.next_u64());

      const std::size_t batch = pick(rng, 1, 4);
      Shape s{batch};
      s.insert(s.end(), arch.input.begin(), arch.input.end());
      Tensor x(s);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
      std::vector<int> labels(batch);
      for (int& l : labels) l = static_cast<int>(rng.below(classes));
      if (degenerate(net, x, labels)) continue;
      out.push_back(gradcheck_network(net, x, labels, h));
      break;
    }
  }
  return out;
}

}  // namespace supermask
