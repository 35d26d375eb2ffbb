#include "supermask/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "supermask/kernels.hpp"
#include "supermask/optim.hpp"
#include "supermask/rng.hpp"

namespace supermask {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

EpochMetrics measure(const Network& net, const Dataset& test, std::size_t epoch, double lr, double train_loss,
                     std::size_t chunk) {
  EpochMetrics m;
  m.epoch = epoch;
  m.lr = lr;
  m.train_loss = train_loss;
  const EvalResult ev = evaluate(net, test, chunk);
  m.test_acc = ev.accuracy;
  m.test_loss = ev.loss;
  std::size_t nonzero = 0, total = 0;
  for (std::size_t i = 0; i < net.weighted_count(); ++i) {
    const MaskDistribution d = mask_distribution(net.quantized_mask(i));
    nonzero += d.neg + d.pos;
    total += d.total();
    m.layers.push_back(d);
  }
  m.remaining_ratio = static_cast<double>(nonzero) / static_cast<double>(total);
  return m;
}

std::vector<std::string> layer_names(const Network& net) {
  std::vector<std::string> n;
  for (std::size_t i = 0; i < net.weighted_count(); ++i) n.push_back(net.weighted_name(i));
  return n;
}

}  // namespace

EvalResult evaluate(const Network& net, const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (chunk == 0) throw std::invalid_argument("evaluate: chunk must be positive");
  std::size_t correct = 0;
  double loss_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(start + chunk, data.size());
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = gather(data, idx);
    const Tensor logits = net.predict(b.images);
    const LossResult lr = softmax_xent(logits, b.labels);
    loss_sum += lr.loss * static_cast<double>(idx.size());
    const std::vector<int> pred = argmax_rows(logits);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i];
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, loss_sum / n};
}

DataPair load_data(const TrainConfig& cfg) {
  DataPair d{load_dataset(cfg.dataset, cfg.data_dir, Split::Train, cfg.train_limit),
             load_dataset(cfg.dataset, cfg.data_dir, Split::Test, cfg.test_limit)};
  const Shape& in = cfg.arch.input;
  if (d.train.sample_shape() != in) {
    throw std::invalid_argument("dataset samples are " + shape_string(d.train.sample_shape()) +
                                " but the architecture expects " + shape_string(in));
  }
  return d;
}

std::vector<TernaryCSR> export_effective(const Network& net) {
  std::vector<TernaryCSR> out;
  for (std::size_t i = 0; i < net.weighted_count(); ++i) {
    out.push_back(export_layer(net.weights(i), net.quantized_mask(i), net.weighted_name(i)));
  }
  return out;
}

std::vector<TernaryCSR> export_masks(const Network& net) {
  std::vector<TernaryCSR> out;
  for (std::size_t i = 0; i < net.weighted_count(); ++i) {
    const Tensor mask = net.quantized_mask(i);
    out.push_back(export_layer(Tensor(mask.shape(), 1.0), mask, net.weighted_name(i)));
  }
  return out;
}

RunResult train(const Config& cfg, const DataPair& data, const fs::path& out, std::ostream* log,
                std::optional<Network>* trained) {
  const TrainConfig tc = TrainConfig::from(cfg);
  set_checked_mode(tc.checked);
  if (data.train.sample_shape() != tc.arch.input || data.test.sample_shape() != tc.arch.input) {
    throw std::invalid_argument("train: dataset does not match the architecture input");
  }
  const bool write = !out.empty();
  if (write) {
    fs::create_directories(out / "masks");
    fs::remove(out / "run.info");
    write_text(out / "config.resolved", cfg.resolved_text());
  }

  Network net = Network::create(tc.arch, tc.init, tc.seed);
  const std::uint64_t initial_hash = net.weights_hash();
  std::vector<Shape> shapes;
  for (std::size_t i = 0; i < net.weighted_count(); ++i) shapes.push_back(net.weights(i).shape());
  Sgd opt(tc.sgd, shapes);

  RunResult run;
  run.dir = out;
  run.seed = tc.seed;
  run.layer_names = layer_names(net);

  std::ofstream metrics;
  if (write) {
    metrics.open(out / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write metrics.csv");
    metrics << metrics_header(run.layer_names) << '\n';
  }
  auto record = [&](EpochMetrics m) {
    if (write) metrics << metrics_row(m) << '\n' << std::flush;
    if (log) {
      *log << "epoch " << m.epoch << "  lr " << fmt(m.lr) << "  train_loss " << fmt(m.train_loss) << "  test_acc "
           << fmt(m.test_acc) << "  remaining " << fmt(m.remaining_ratio) << std::endl;
    }
    run.metrics.push_back(std::move(m));
  };

  record(measure(net, data.test, 0, lr_at(0, tc.sgd), std::numeric_limits<double>::quiet_NaN(), tc.eval_batch));

  const std::size_t n = data.train.size();
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch - 1, tc.sgd);
    SeededRng shuffle = SeededRng::derive(tc.seed, RngStream::Shuffle, epoch - 1);
    const std::vector<std::size_t> order = shuffled_indices(n, shuffle);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += tc.batch_size) {
      const std::size_t end = std::min(start + tc.batch_size, n);
      const Batch b = gather(data.train, std::span(order).subspan(start, end - start));
      const ForwardCache cache = net.forward(b.images);
      const LossResult loss = softmax_xent(cache.logits, b.labels);
      if (!std::isfinite(loss.loss)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                                 std::to_string(start) + " (lr " + fmt(lr) + ")");
      }
      loss_sum += loss.loss * static_cast<double>(end - start);
      const std::vector<LayerGrad> grads = net.backward(cache, loss.grad);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        const Tensor& g = net.masked() ? grads[i].scores : grads[i].effective;
        opt.step(i, net.trainable(i), g, lr);
      }
    }
    record(measure(net, data.test, epoch, lr_at(epoch, tc.sgd), loss_sum / static_cast<double>(n), tc.eval_batch));
    if (log) {
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      *log << "  (" << fmt(dt.count()) << " s)" << std::endl;
    }
  }

  run.weights_hash = net.weights_hash();
  if (net.masked() && run.weights_hash != initial_hash) {
    throw std::logic_error("frozen-weight audit failed: weights changed during masked training");
  }
  const std::vector<TernaryCSR> effective = export_effective(net);
  run.compression_rate = compression_rate(effective);
  if (write) {
    metrics.close();
    write_tcsr(out / "masks" / "effective.tcsr", effective);
    write_tcsr(out / "masks" / "masks.tcsr", export_masks(net));
    const EpochMetrics& f = run.final_metrics();
    std::string info;
    info += "seed = " + std::to_string(tc.seed) + "\n";
    info += "config_digest = " + digest_hex(cfg.digest()) + "\n";
    info += "weights_hash = " + digest_hex(run.weights_hash) + "\n";
    info += "epochs = " + std::to_string(tc.epochs) + "\n";
    info += "final_test_acc = " + fmt(f.test_acc) + "\n";
    info += "final_test_loss = " + fmt(f.test_loss) + "\n";
    info += "final_remaining_ratio = " + fmt(f.remaining_ratio) + "\n";
    info += "compression_rate = " + fmt(run.compression_rate) + "\n";
    info += "status = complete\n";
    write_text(out / "run.info", info);
  }
  if (trained) *trained = std::move(net);
  return run;
}

std::map<std::string, std::string> read_run_info(const fs::path& dir) {
  std::map<std::string, std::string> kv;
  std::ifstream in(dir / "run.info");
  if (!in) return kv;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  if (kv["status"] != "complete") kv.clear();
  return kv;
}

RunResult load_run(const fs::path& dir) {
  const auto info = read_run_info(dir);
  if (info.empty()) throw std::runtime_error(dir.string() + ": run is missing or incomplete");
  RunResult r;
  r.dir = dir;
  r.seed = std::stoull(info.at("seed"));
  r.weights_hash = std::stoull(info.at("weights_hash"), nullptr, 16);
  r.compression_rate = std::stod(info.at("compression_rate"));
  MetricsTable t = read_metrics_csv(dir / "metrics.csv");
  r.layer_names = std::move(t.layer_names);
  r.metrics = std::move(t.rows);
  if (r.metrics.empty()) throw std::runtime_error(dir.string() + ": empty metrics");
  return r;
}

Config load_run_config(const fs::path& dir) { return Config::load(dir / "config.resolved"); }

Network load_effective_network(const fs::path& dir) {
  const auto info = read_run_info(dir);
  if (info.empty()) throw std::runtime_error(dir.string() + ": run is missing or incomplete");
  const TrainConfig tc = TrainConfig::from(load_run_config(dir));
  const Network original = Network::create(tc.arch, tc.init, tc.seed);
  if (digest_hex(original.weights_hash()) != info.at("weights_hash")) {
    throw std::runtime_error(dir.string() + ": regenerated weights do not match the recorded hash");
  }
  const std::vector<TernaryCSR> masks = read_tcsr(dir / "masks" / "masks.tcsr");
  if (masks.size() != original.weighted_count()) throw std::runtime_error(dir.string() + ": mask count mismatch");
  NetworkInit plain = tc.init;
  plain.masked = false;
  Network net = Network::create(tc.arch, plain, tc.seed);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const Tensor& w = original.weights(i);
    Tensor eff = reconstruct(masks[i]).reshaped(w.shape());
    for (std::size_t k = 0; k < eff.size(); ++k) eff[k] *= w[k];
    net.set_weights(i, std::move(eff));
  }
  return net;
}

QuantileSummary summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  auto rank = [&](double p) {
    const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
    return v[std::clamp<std::size_t>(k, 1, v.size()) - 1];
  };
  double sum = 0.0;
  for (double x : values) sum += x;
  return {sum / static_cast<double>(v.size()), rank(0.05), rank(0.95)};
}

CampaignResult campaign(const Config& cfg, std::span<const std::uint64_t> seeds, const fs::path& out,
                        std::ostream* log) {
  if (seeds.empty()) throw std::invalid_argument("campaign: no seeds");
  fs::create_directories(out);
  CampaignResult res;
  std::optional<DataPair> data;
  auto write_runs = [&] {
    std::string csv = "seed,final_test_acc,final_test_loss,final_remaining_ratio,compression_rate,weights_hash\n";
    for (const RunResult& r : res.runs) {
      const EpochMetrics& f = r.final_metrics();
      csv += std::to_string(r.seed) + "," + fmt(f.test_acc) + "," + fmt(f.test_loss) + "," + fmt(f.remaining_ratio) +
             "," + fmt(r.compression_rate) + "," + digest_hex(r.weights_hash) + "\n";
    }
    write_text(out / "runs.csv", csv);
  };
  for (std::uint64_t seed : seeds) {
    Config c = cfg;
    c.set("train.seed", std::to_string(seed));
    const fs::path dir = out / ("seed_" + std::to_string(seed));
    const auto info = read_run_info(dir);
    if (!info.empty() && info.at("config_digest") == digest_hex(c.digest())) {
      if (log) *log << "seed " << seed << ": reusing " << dir.string() << std::endl;
      res.runs.push_back(load_run(dir));
      continue;
    }
    try {
      if (!data) data = load_data(TrainConfig::from(c));
      if (log) *log << "seed " << seed << ": training into " << dir.string() << std::endl;
      res.runs.push_back(train(c, *data, dir, log));
    } catch (...) {
      write_runs();
      throw;
    }
  }
  write_runs();

  std::vector<double> acc, rem, comp;
  for (const RunResult& r : res.runs) {
    acc.push_back(r.final_metrics().test_acc);
    rem.push_back(r.final_metrics().remaining_ratio);
    comp.push_back(r.compression_rate);
  }
  res.accuracy = summarize(acc);
  res.remaining = summarize(rem);
  res.compression = summarize(comp);
  std::string summary = "metric,mean,q05,q95,runs\n";
  auto row = [&](const char* name, const QuantileSummary& q) {
    summary += std::string(name) + "," + fmt(q.mean) + "," + fmt(q.q05) + "," + fmt(q.q95) + "," +
               std::to_string(res.runs.size()) + "\n";
  };
  row("test_acc", res.accuracy);
  row("remaining_ratio", res.remaining);
  row("compression_rate", res.compression);
  write_text(out / "summary.csv", summary);
  return res;
}

}  // namespace supermask
