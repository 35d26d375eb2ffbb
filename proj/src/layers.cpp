#include "supermask/layers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace supermask {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t parse_positive(std::string_view s, std::string_view what) {
  s = trim(s);
  if (s.empty()) throw std::invalid_argument("missing " + std::string(what));
  std::size_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw std::invalid_argument("bad " + std::string(what) + " '" + std::string(s) + "'");
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  if (v == 0) throw std::invalid_argument(std::string(what) + " must be positive");
  return v;
}

LayerSpec dense(std::size_t units) { return {LayerSpec::Kind::Dense, units, 0}; }
LayerSpec conv(std::size_t filters) { return {LayerSpec::Kind::Conv, filters, 3}; }
LayerSpec pool() { return {LayerSpec::Kind::Pool, 0, 0}; }
LayerSpec flatten() { return {LayerSpec::Kind::Flatten, 0, 0}; }

ArchSpec conv_net(std::string name, std::initializer_list<std::size_t> blocks) {
  ArchSpec a{std::move(name), {32, 32, 3}, {}};
  for (std::size_t filters : blocks) {
    a.layers.push_back(conv(filters));
    a.layers.push_back(conv(filters));
    a.layers.push_back(pool());
  }
  a.layers.push_back(flatten());
  a.layers.push_back(dense(256));
  a.layers.push_back(dense(256));
  a.layers.push_back(dense(10));
  return a;
}

double mask_init_variance(const NetworkInit& init, const Shape& w) {
  const Fans f = fans_of(w);
  if (init.mask_init == MaskInit::XavierUniform) return 2.0 / static_cast<double>(f.in + f.out);
  return init.mask_init_scale * init.mask_init_scale * 2.0 / static_cast<double>(f.in);
}

// Probability that a Uniform(−bound, bound) score quantizes to zero.
double implied_p0(const MaskState& m, double bound) {
  double p = m.mode == MaskMode::Signed ? (m.tau_p - m.tau_n) / (2.0 * bound) : (bound + m.tau_p) / (2.0 * bound);
  return std::clamp(p, 0.0, 0.99);
}

}  // namespace

ArchSpec build_architecture(std::string_view name) {
  if (name == "fcn") return {"fcn", {28, 28, 1}, {flatten(), dense(300), dense(100), dense(10)}};
  if (name == "conv2") return conv_net("conv2", {64});
  if (name == "conv4") return conv_net("conv4", {64, 128});
  if (name == "conv6") return conv_net("conv6", {64, 128, 256});
  if (name == "conv8") return conv_net("conv8", {64, 128, 256, 512});
  throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

ArchSpec parse_architecture(std::string_view layers, const Shape& input, std::string name) {
  ArchSpec a{std::move(name), input, {}};
  for (std::string_view item : split(layers, ',')) {
    item = trim(item);
    const auto parts = split(item, ':');
    const std::string_view kind = trim(parts[0]);
    if (kind == "dense" && parts.size() == 2) {
      a.layers.push_back(dense(parse_positive(parts[1], "dense units")));
    } else if (kind == "conv" && (parts.size() == 2 || parts.size() == 3)) {
      LayerSpec l = conv(parse_positive(parts[1], "conv filters"));
      if (parts.size() == 3) l.kernel = parse_positive(parts[2], "conv kernel");
      if (l.kernel % 2 == 0) throw std::invalid_argument("conv kernel must be odd");
      a.layers.push_back(l);
    } else if (kind == "pool" && parts.size() == 1) {
      a.layers.push_back(pool());
    } else if (kind == "flatten" && parts.size() == 1) {
      a.layers.push_back(flatten());
    } else {
      throw std::invalid_argument("bad layer '" + std::string(item) + "'");
    }
  }
  weight_shapes(a);
  return a;
}

std::string describe_layers(const ArchSpec& arch) {
  std::ostringstream os;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    if (i) os << ',';
    const LayerSpec& l = arch.layers[i];
    switch (l.kind) {
      case LayerSpec::Kind::Dense: os << "dense:" << l.units; break;
      case LayerSpec::Kind::Conv:
        os << "conv:" << l.units;
        if (l.kernel != 3) os << ':' << l.kernel;
        break;
      case LayerSpec::Kind::Pool: os << "pool"; break;
      case LayerSpec::Kind::Flatten: os << "flatten"; break;
    }
  }
  return os.str();
}

Shape parse_shape(std::string_view text) {
  Shape s;
  for (std::string_view p : split(text, 'x')) s.push_back(parse_positive(p, "shape dimension"));
  return s;
}

std::vector<Shape> weight_shapes(const ArchSpec& arch) {
  if (arch.input.empty()) throw std::invalid_argument("architecture has no input shape");
  if (arch.layers.empty()) throw std::invalid_argument("architecture has no layers");
  Shape cur = arch.input;
  std::vector<Shape> out;
  for (const LayerSpec& l : arch.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::Dense:
        if (cur.size() != 1) throw std::invalid_argument("dense layer needs a flat input; add 'flatten'");
        out.push_back({cur[0], l.units});
        cur = {l.units};
        break;
      case LayerSpec::Kind::Conv:
        if (cur.size() != 3) throw std::invalid_argument("conv layer needs an H×W×C input");
        out.push_back({l.kernel, l.kernel, cur[2], l.units});
        cur[2] = l.units;
        break;
      case LayerSpec::Kind::Pool:
        if (cur.size() != 3 || cur[0] % 2 || cur[1] % 2) {
          throw std::invalid_argument("pool needs an H×W×C input with even H and W, got " + shape_string(cur));
        }
        cur = {cur[0] / 2, cur[1] / 2, cur[2]};
        break;
      case LayerSpec::Kind::Flatten:
        cur = {shape_product(cur)};
        break;
    }
  }
  if (arch.layers.back().kind != LayerSpec::Kind::Dense) {
    throw std::invalid_argument("architecture must end in a dense layer");
  }
  return out;
}

std::size_t parameter_count(const ArchSpec& arch) {
  std::size_t n = 0;
  for (const Shape& s : weight_shapes(arch)) n += shape_product(s);
  return n;
}

MaskInit parse_mask_init(std::string_view name) {
  if (name == "xavier_uniform") return MaskInit::XavierUniform;
  if (name == "elus_uniform") return MaskInit::ElusUniform;
  throw std::invalid_argument("unknown mask init '" + std::string(name) + "'");
}

std::string to_string(MaskInit m) { return m == MaskInit::XavierUniform ? "xavier_uniform" : "elus_uniform"; }

Network::Network(ArchSpec arch, std::vector<Layer> layers, double alpha)
    : arch_(std::move(arch)), layers_(std::move(layers)), alpha_(alpha) {
  const std::vector<Shape> shapes = weight_shapes(arch_);
  if (layers_.size() != arch_.layers.size()) throw std::invalid_argument("Network: layer count mismatch");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const bool weighted = std::holds_alternative<MaskedDense>(layers_[i]) || std::holds_alternative<MaskedConv2D>(layers_[i]);
    const LayerSpec::Kind k = arch_.layers[i].kind;
    const bool kind_ok = (k == LayerSpec::Kind::Dense && std::holds_alternative<MaskedDense>(layers_[i])) ||
                         (k == LayerSpec::Kind::Conv && std::holds_alternative<MaskedConv2D>(layers_[i])) ||
                         (k == LayerSpec::Kind::Pool && std::holds_alternative<MaxPool>(layers_[i])) ||
                         (k == LayerSpec::Kind::Flatten && std::holds_alternative<Flatten>(layers_[i]));
    if (!kind_ok) throw std::invalid_argument("Network: layer " + std::to_string(i) + " does not match the spec");
    if (weighted) weighted_.push_back(i);
  }
  for (std::size_t w = 0; w < weighted_.size(); ++w) {
    if (weights(w).shape() != shapes[w]) {
      throw std::invalid_argument("Network: weights of " + weighted_name(w) + " have shape " +
                                  shape_string(weights(w).shape()) + ", expected " + shape_string(shapes[w]));
    }
    if (const MaskState* m = mask(w)) {
      m->validate();
      require_same_shape(m->scores, weights(w), "Network scores");
    }
  }
  const bool any = mask(0) != nullptr;
  for (std::size_t w = 1; w < weighted_.size(); ++w) {
    if ((mask(w) != nullptr) != any) throw std::invalid_argument("Network: mixed masked and unmasked layers");
  }
}

Network Network::create(const ArchSpec& arch, const NetworkInit& init, std::uint64_t seed) {
  const std::vector<Shape> shapes = weight_shapes(arch);
  std::vector<Layer> layers;
  std::size_t w = 0;
  const std::size_t last_weighted = shapes.size() - 1;
  for (const LayerSpec& l : arch.layers) {
    if (l.kind == LayerSpec::Kind::Pool) {
      layers.emplace_back(MaxPool{});
      continue;
    }
    if (l.kind == LayerSpec::Kind::Flatten) {
      layers.emplace_back(Flatten{});
      continue;
    }
    const Shape& shape = shapes[w];
    std::optional<MaskState> mask;
    double p0 = 0.0;
    if (init.masked) {
      SeededRng mrng = SeededRng::derive(seed, RngStream::MaskScores, w);
      const double var = mask_init_variance(init, shape);
      const double bound = uniform_bound(var);
      MaskState m{uniform_init(shape, var, mrng), init.tau_n, init.tau_p, init.mode};
      if (init.initial_pruning_rate) std::tie(m.tau_n, m.tau_p) = thresholds_for_target(bound, *init.initial_pruning_rate);
      if (m.mode == MaskMode::Binary) m.tau_n = std::min(m.tau_n, 0.0);
      m.validate();
      p0 = init.p0 >= 0.0 ? init.p0 : implied_p0(m, bound);
      mask = std::move(m);
    } else {
      p0 = std::max(init.p0, 0.0);
    }
    InitSpec spec = init.weights;
    const Fans f = fans_of(shape);
    spec.fan_in = f.in;
    spec.fan_out = f.out;
    spec.p0 = p0;
    SeededRng wrng = SeededRng::derive(seed, RngStream::Weights, w);
    Tensor weights = initialize(shape, spec, wrng);
    const Activation act = w == last_weighted ? Activation::None : Activation::Elu;
    if (l.kind == LayerSpec::Kind::Dense) {
      layers.emplace_back(MaskedDense{std::move(weights), std::move(mask), act});
    } else {
      layers.emplace_back(MaskedConv2D{std::move(weights), std::move(mask), act});
    }
    ++w;
  }
  return Network(arch, std::move(layers), init.weights.alpha);
}

std::string Network::weighted_name(std::size_t i) const {
  if (i >= weighted_.size()) throw std::out_of_range("weighted layer index");
  const bool is_conv = std::holds_alternative<MaskedConv2D>(layers_[weighted_[i]]);
  return (is_conv ? "conv" : "dense") + std::to_string(i);
}

const Tensor& Network::weights(std::size_t i) const { return const_cast<Network*>(this)->weights_ref(i); }

const MaskState* Network::mask(std::size_t i) const {
  const auto& m = const_cast<Network*>(this)->mask_ref(i);
  return m ? &*m : nullptr;
}

bool Network::masked() const { return !weighted_.empty() && mask(0) != nullptr; }

Tensor& Network::weights_ref(std::size_t i) {
  if (i >= weighted_.size()) throw std::out_of_range("weighted layer index");
  Layer& l = layers_[weighted_[i]];
  if (auto* d = std::get_if<MaskedDense>(&l)) return d->weights;
  return std::get<MaskedConv2D>(l).kernel;
}

std::optional<MaskState>& Network::mask_ref(std::size_t i) {
  if (i >= weighted_.size()) throw std::out_of_range("weighted layer index");
  Layer& l = layers_[weighted_[i]];
  if (auto* d = std::get_if<MaskedDense>(&l)) return d->mask;
  return std::get<MaskedConv2D>(l).mask;
}

Tensor& Network::trainable(std::size_t i) {
  ++version_;
  auto& m = mask_ref(i);
  return m ? m->scores : weights_ref(i);
}

void Network::set_weights(std::size_t i, Tensor w) {
  require_same_shape(w, weights_ref(i), "set_weights");
  ++version_;
  weights_ref(i) = std::move(w);
}

void Network::set_scores(std::size_t i, Tensor scores) {
  auto& m = mask_ref(i);
  if (!m) throw std::logic_error("set_scores: layer is not masked");
  require_same_shape(scores, m->scores, "set_scores");
  ++version_;
  m->scores = std::move(scores);
}

Tensor Network::quantized_mask(std::size_t i) const {
  const MaskState* m = mask(i);
  if (!m) return Tensor(weights(i).shape(), 1.0);
  return quantize(*m);
}

Tensor Network::effective_weights(std::size_t i) const {
  const MaskState* m = mask(i);
  if (!m) return weights(i);
  Tensor g = quantize(*m);
  const Tensor& w = weights(i);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] *= w[k];
  return g;
}

Tensor Network::run(const Tensor& batch, ForwardCache* cache) const {
  Shape expect{0};
  expect.insert(expect.end(), arch_.input.begin(), arch_.input.end());
  if (batch.rank() != expect.size() || !std::equal(arch_.input.begin(), arch_.input.end(), batch.shape().begin() + 1)) {
    expect[0] = batch.rank() ? batch.dim(0) : 0;
    throw std::invalid_argument("Network: batch shape " + shape_string(batch.shape()) + ", expected " +
                                shape_string(expect));
  }
  const std::size_t n = batch.dim(0);
  if (cache) {
    cache->version = version_;
    cache->entries.clear();
    cache->entries.reserve(layers_.size());
  }
  Tensor x = batch;
  std::size_t w = 0;
  for (const Layer& layer : layers_) {
    ForwardCache::Entry e;
    e.input_shape = x.shape();
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, MaxPool>) {
            PoolResult r = maxpool2(x);
            e.argmax = std::move(r.argmax);
            x = std::move(r.output);
          } else if constexpr (std::is_same_v<T, Flatten>) {
            const std::size_t per = x.size() / n;
            x = std::move(x).reshaped({n, per});
          } else {
            Tensor eff = effective_weights(w++);
            Tensor z;
            if constexpr (std::is_same_v<T, MaskedDense>) {
              z = matmul(x, eff);
            } else {
              z = conv2d(x, eff);
            }
            Tensor out = l.activation == Activation::Elu ? elu(z, alpha_) : z;
            if (cache) {
              e.input = std::move(x);
              e.pre_activation = std::move(z);
              e.effective = std::move(eff);
            }
            x = std::move(out);
          }
        },
        layer);
    if (cache) cache->entries.push_back(std::move(e));
  }
  check_finite(x, "network output");
  return x;
}

ForwardCache Network::forward(const Tensor& batch) const {
  ForwardCache cache;
  cache.logits = run(batch, &cache);
  return cache;
}

Tensor Network::predict(const Tensor& batch) const { return run(batch, nullptr); }

std::vector<LayerGrad> Network::backward(const ForwardCache& cache, const Tensor& loss_grad) const {
  if (cache.version != version_ || cache.entries.size() != layers_.size()) {
    throw std::logic_error("Network::backward: forward cache is stale");
  }
  require_same_shape(loss_grad, cache.logits, "backward loss gradient");
  std::vector<LayerGrad> grads(weighted_.size());
  const std::size_t first_weighted = weighted_.empty() ? layers_.size() : weighted_.front();
  Tensor g = loss_grad;
  std::size_t w = weighted_.size();
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const ForwardCache::Entry& e = cache.entries[li];
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, MaxPool>) {
            g = maxpool2_backward(g, e.argmax, e.input_shape);
          } else if constexpr (std::is_same_v<T, Flatten>) {
            g = std::move(g).reshaped(e.input_shape);
          } else {
            --w;
            if (l.activation == Activation::Elu) g = hadamard(g, elu_grad(e.pre_activation, alpha_));
            LayerGrad& out = grads[w];
            if constexpr (std::is_same_v<T, MaskedDense>) {
              out.effective = matmul_tn(e.input, g);
              if (li > first_weighted) g = matmul_nt(g, e.effective);
            } else {
              out.effective = conv2d_backward_kernel(e.input, g, e.effective.shape());
              if (li > first_weighted) g = conv2d_backward_input(g, e.effective);
            }
            if (l.mask) out.scores = ste_grad(out.effective, weights(w));
          }
        },
        layers_[li]);
    if (li <= first_weighted) break;
  }
  return grads;
}

std::uint64_t Network::weights_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < weighted_.size(); ++i) {
    h ^= tensor_hash(weights(i));
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weighted_.size(); ++i) n += weights(i).size();
  return n;
}

double Network::remaining_ratio() const {
  std::size_t nonzero = 0, total = 0;
  for (std::size_t i = 0; i < weighted_.size(); ++i) {
    const MaskDistribution d = mask_distribution(quantized_mask(i));
    nonzero += d.neg + d.pos;
    total += d.total();
  }
  return total ? static_cast<double>(nonzero) / static_cast<double>(total) : 0.0;
}

}  // namespace supermask
