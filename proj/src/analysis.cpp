#include "supermask/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "supermask/kernels.hpp"

namespace supermask {

namespace {

void check_masks(std::span<const Tensor> masks) {
  if (masks.size() < 2) throw std::invalid_argument("mask equality needs at least two masks");
  for (const Tensor& m : masks) require_same_shape(m, masks[0], "mask equality");
}

double key(double v, bool absolute) { return absolute ? std::fabs(v) : v; }

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

}  // namespace

double pairwise_mask_equality(std::span<const Tensor> masks, bool absolute) {
  check_masks(masks);
  const std::size_t n = masks[0].size();
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < masks.size(); ++a) {
    for (std::size_t b = a + 1; b < masks.size(); ++b) {
      std::size_t eq = 0;
      for (std::size_t i = 0; i < n; ++i) eq += key(masks[a][i], absolute) == key(masks[b][i], absolute);
      sum += static_cast<double>(eq) / static_cast<double>(n);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

double unanimous_mask_equality(std::span<const Tensor> masks, bool absolute) {
  check_masks(masks);
  const std::size_t n = masks[0].size();
  std::size_t eq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double k0 = key(masks[0][i], absolute);
    bool all = true;
    for (std::size_t a = 1; a < masks.size() && all; ++a) all = key(masks[a][i], absolute) == k0;
    eq += all;
  }
  return static_cast<double>(eq) / static_cast<double>(n);
}

FilterMap first_layer_filter_map(const Tensor& mask) {
  if (mask.rank() != 2) throw std::invalid_argument("first_layer_filter_map: mask must be 2-D");
  FilterMap fm;
  const std::size_t rows = mask.dim(0), cols = mask.dim(1);
  fm.counts.assign(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) fm.counts[r] += mask.at(r, c) != 0.0;
    fm.fully_masked += fm.counts[r] == 0;
  }
  return fm;
}

void write_pgm(const std::filesystem::path& path, std::span<const std::size_t> counts, std::size_t height,
               std::size_t width) {
  if (counts.size() != height * width) throw std::invalid_argument("write_pgm: size mismatch");
  const std::size_t hi = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (std::size_t c : counts) {
    const auto px = static_cast<unsigned char>(hi ? (c * 255 + hi / 2) / hi : 0);
    out.put(static_cast<char>(px));
  }
}

std::vector<double> variance_propagation(std::size_t depth, std::size_t width, double p0, const InitSpec& scheme,
                                         std::size_t trials, SeededRng& rng, std::size_t samples_per_trial) {
  if (depth == 0 || width == 0 || trials == 0 || samples_per_trial == 0) {
    throw std::invalid_argument("variance_propagation: depth, width, trials and samples must be positive");
  }
  InitSpec spec = scheme;
  spec.fan_in = width;
  spec.fan_out = width;
  spec.p0 = p0;
  std::vector<double> sum(depth, 0.0), sum_sq(depth, 0.0);
  const Shape wshape{width, width};
  for (std::size_t t = 0; t < trials; ++t) {
    Tensor z0({samples_per_trial, width});
    for (std::size_t i = 0; i < z0.size(); ++i) z0[i] = rng.normal();
    Tensor o = elu(z0, spec.alpha);
    for (std::size_t l = 0; l < depth; ++l) {
      const Tensor w = initialize(wshape, spec, rng);
      MaskState m{uniform_init(wshape, 1.0 / 3.0, rng), 0.0, 0.0, MaskMode::Signed};
      std::tie(m.tau_n, m.tau_p) = thresholds_for_target(1.0, p0);
      const Tensor eff = hadamard(w, quantize(m));
      const Tensor z = matmul(o, eff);
      for (std::size_t i = 0; i < z.size(); ++i) {
        sum[l] += z[i];
        sum_sq[l] += z[i] * z[i];
      }
      o = elu(z, spec.alpha);
    }
  }
  const double n = static_cast<double>(trials * samples_per_trial * width);
  std::vector<double> var(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    const double mean = sum[l] / n;
    var[l] = sum_sq[l] / n - mean * mean;
  }
  return var;
}

std::string metrics_header(std::span<const std::string> layer_names) {
  std::string h = "epoch,lr,train_loss,test_loss,test_acc,remaining_ratio";
  for (const std::string& n : layer_names) h += "," + n + "_neg," + n + "_zero," + n + "_pos";
  return h;
}

std::string metrics_row(const EpochMetrics& m) {
  std::string r = std::to_string(m.epoch) + "," + fmt(m.lr) + "," + fmt(m.train_loss) + "," + fmt(m.test_loss) +
                  "," + fmt(m.test_acc) + "," + fmt(m.remaining_ratio);
  for (const MaskDistribution& d : m.layers) {
    r += "," + std::to_string(d.neg) + "," + std::to_string(d.zero) + "," + std::to_string(d.pos);
  }
  return r;
}

void write_metrics_csv(std::ostream& out, std::span<const std::string> layer_names,
                       std::span<const EpochMetrics> rows) {
  out << metrics_header(layer_names) << '\n';
  for (const EpochMetrics& m : rows) {
    if (m.layers.size() != layer_names.size()) throw std::invalid_argument("metrics row has wrong layer count");
    out << metrics_row(m) << '\n';
  }
}

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty metrics file");
  const auto head = split_csv(line);
  constexpr std::size_t kFixed = 6;
  if (head.size() < kFixed || (head.size() - kFixed) % 3 != 0 || head[0] != "epoch") {
    throw std::runtime_error(path.string() + ": unexpected metrics header");
  }
  MetricsTable t;
  for (std::size_t i = kFixed; i < head.size(); i += 3) t.layer_names.push_back(head[i].substr(0, head[i].size() - 4));
  if (metrics_header(t.layer_names) != line) throw std::runtime_error(path.string() + ": unexpected metrics header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != head.size()) throw std::runtime_error(path.string() + ": ragged metrics row");
    EpochMetrics m;
    m.epoch = std::stoul(cells[0]);
    m.lr = parse_double(cells[1]);
    m.train_loss = parse_double(cells[2]);
    m.test_loss = parse_double(cells[3]);
    m.test_acc = parse_double(cells[4]);
    m.remaining_ratio = parse_double(cells[5]);
    for (std::size_t i = kFixed; i < cells.size(); i += 3) {
      m.layers.push_back({std::stoul(cells[i]), std::stoul(cells[i + 1]), std::stoul(cells[i + 2])});
    }
    if (m.epoch != t.rows.size()) throw std::runtime_error(path.string() + ": epochs are not consecutive from 0");
    t.rows.push_back(std::move(m));
  }
  return t;
}

std::vector<std::string> epoch_summary(const MetricsTable& table) {
  std::vector<std::string> out;
  out.push_back(metrics_header(table.layer_names));
  for (const EpochMetrics& m : table.rows) out.push_back(metrics_row(m));
  return out;
}

}  // namespace supermask
