#include "supermask/sparse.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace supermask {

namespace {

constexpr char kMagic[4] = {'T', 'C', 'S', 'R'};
constexpr std::uint16_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "TCSR I/O assumes a little-endian host");

class Writer {
 public:
  template <class T>
  void put(T v) {
    const char* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  template <class T>
  void put_all(const std::vector<T>& v) {
    for (const T& x : v) put(x);
  }
  void bytes(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <class T>
  std::vector<T> get_all(std::size_t n) {
    if (n > (buf_.size() - pos_) / sizeof(T)) throw std::runtime_error("TCSR: truncated file");
    std::vector<T> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw std::runtime_error("TCSR: truncated file");
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void TernaryCSR::validate() const {
  if (row_ptr.size() != std::size_t{rows} + 1) throw std::invalid_argument("TernaryCSR: row_ptr length");
  if (row_ptr.front() != 0 || row_ptr.back() != nnz()) throw std::invalid_argument("TernaryCSR: row_ptr ends");
  if (sign.size() != nnz()) throw std::invalid_argument("TernaryCSR: sign length");
  if (!shared_magnitude && magnitudes.size() != nnz()) throw std::invalid_argument("TernaryCSR: magnitude length");
  for (std::uint32_t r = 0; r < rows; ++r) {
    if (row_ptr[r] > row_ptr[r + 1]) throw std::invalid_argument("TernaryCSR: row_ptr decreasing");
    for (std::uint32_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      if (col_idx[k] >= cols) throw std::invalid_argument("TernaryCSR: column out of range");
      if (k > row_ptr[r] && col_idx[k] <= col_idx[k - 1]) throw std::invalid_argument("TernaryCSR: unsorted row");
    }
  }
  for (std::int8_t s : sign) {
    if (s != 1 && s != -1) throw std::invalid_argument("TernaryCSR: sign must be ±1");
  }
}

TernaryCSR export_layer(const Tensor& weights, const Tensor& mask, std::string name) {
  require_same_shape(weights, mask, "export_layer");
  if (weights.rank() < 2) throw std::invalid_argument("export_layer: weights must have rank >= 2");
  const std::size_t cols = weights.shape().back();
  const std::size_t rows = weights.size() / cols;
  if (rows > std::numeric_limits<std::uint32_t>::max() || cols > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("export_layer: layer too large");
  }
  TernaryCSR c;
  c.name = std::move(name);
  c.rows = static_cast<std::uint32_t>(rows);
  c.cols = static_cast<std::uint32_t>(cols);
  c.row_ptr.assign(rows + 1, 0);
  std::vector<double> mags;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t i = r * cols + j;
      const double m = mask[i];
      if (m != 0.0 && m != 1.0 && m != -1.0) throw std::invalid_argument("export_layer: mask is not ternary");
      const double v = weights[i] * m;
      if (v == 0.0) continue;
      c.col_idx.push_back(static_cast<std::uint32_t>(j));
      c.sign.push_back(v > 0.0 ? 1 : -1);
      mags.push_back(std::fabs(v));
    }
    c.row_ptr[r + 1] = static_cast<std::uint32_t>(c.col_idx.size());
  }
  c.shared_magnitude = true;
  for (double m : mags) {
    if (m != mags.front()) {
      c.shared_magnitude = false;
      break;
    }
  }
  if (c.shared_magnitude) {
    c.magnitude = mags.empty() ? 0.0 : mags.front();
  } else {
    c.magnitudes = std::move(mags);
  }
  return c;
}

Tensor reconstruct(const TernaryCSR& layer) {
  layer.validate();
  Tensor out({layer.rows, layer.cols});
  for (std::uint32_t r = 0; r < layer.rows; ++r) {
    for (std::uint32_t k = layer.row_ptr[r]; k < layer.row_ptr[r + 1]; ++k) {
      out[std::size_t{r} * layer.cols + layer.col_idx[k]] = layer.value_at(k);
    }
  }
  return out;
}

ByteSizes byte_sizes(const TernaryCSR& layer) {
  return {std::size_t{layer.rows} * layer.cols * 4, layer.nnz() * 8 + (std::size_t{layer.rows} + 1) * 4};
}

double compression_rate(std::span<const TernaryCSR> layers) {
  std::size_t dense = 0, csr = 0;
  for (const TernaryCSR& l : layers) {
    const ByteSizes b = byte_sizes(l);
    dense += b.dense;
    csr += b.csr;
  }
  if (dense == 0) throw std::invalid_argument("compression_rate: no layers");
  return 1.0 - static_cast<double>(csr) / static_cast<double>(dense);
}

std::vector<double> sparse_matvec(const TernaryCSR& layer, std::span<const double> x) {
  if (x.size() != layer.cols) throw std::invalid_argument("sparse_matvec: length mismatch");
  std::vector<double> y(layer.rows, 0.0);
  for (std::uint32_t r = 0; r < layer.rows; ++r) {
    double acc = 0.0;
    if (layer.shared_magnitude) {
      for (std::uint32_t k = layer.row_ptr[r]; k < layer.row_ptr[r + 1]; ++k) {
        acc += layer.sign[k] > 0 ? x[layer.col_idx[k]] : -x[layer.col_idx[k]];
      }
      y[r] = layer.magnitude * acc;
    } else {
      for (std::uint32_t k = layer.row_ptr[r]; k < layer.row_ptr[r + 1]; ++k) {
        acc += layer.value_at(k) * x[layer.col_idx[k]];
      }
      y[r] = acc;
    }
  }
  return y;
}

void write_tcsr(const std::filesystem::path& path, std::span<const TernaryCSR> layers) {
  Writer w;
  w.bytes(kMagic, 4);
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(layers.size()));
  for (const TernaryCSR& l : layers) {
    l.validate();
    w.put(static_cast<std::uint32_t>(l.name.size()));
    w.bytes(l.name.data(), l.name.size());
    w.put(l.rows);
    w.put(l.cols);
    w.put(static_cast<std::uint64_t>(l.nnz()));
    w.put(static_cast<std::uint8_t>(l.shared_magnitude ? 0 : 1));
    if (l.shared_magnitude) {
      w.put(static_cast<float>(l.magnitude));
    } else {
      for (double m : l.magnitudes) w.put(static_cast<float>(m));
    }
    w.put_all(l.row_ptr);
    w.put_all(l.col_idx);
    w.put_all(l.sign);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<TernaryCSR> read_tcsr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  if (r.str(4) != std::string(kMagic, 4)) throw std::runtime_error(path.string() + ": not a TCSR file");
  if (const auto v = r.get<std::uint16_t>(); v != kVersion) {
    throw std::runtime_error(path.string() + ": unsupported TCSR version " + std::to_string(v));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<TernaryCSR> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    TernaryCSR l;
    l.name = r.str(r.get<std::uint32_t>());
    l.rows = r.get<std::uint32_t>();
    l.cols = r.get<std::uint32_t>();
    const auto nnz = r.get<std::uint64_t>();
    const auto flag = r.get<std::uint8_t>();
    if (flag > 1) throw std::runtime_error("TCSR: bad magnitude flag");
    l.shared_magnitude = flag == 0;
    if (l.shared_magnitude) {
      l.magnitude = r.get<float>();
    } else {
      for (float f : r.get_all<float>(nnz)) l.magnitudes.push_back(f);
    }
    l.row_ptr = r.get_all<std::uint32_t>(std::size_t{l.rows} + 1);
    l.col_idx = r.get_all<std::uint32_t>(nnz);
    l.sign = r.get_all<std::int8_t>(nnz);
    l.validate();
    layers.push_back(std::move(l));
  }
  if (!r.done()) throw std::runtime_error(path.string() + ": trailing bytes");
  return layers;
}

}  // namespace supermask
