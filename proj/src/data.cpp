#include "supermask/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace supermask {

namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

fs::path find_file(const fs::path& dir, std::string_view sub, std::initializer_list<std::string_view> names) {
  const fs::path roots[] = {dir, dir / sub, dir / "cifar-10-batches-bin"};
  for (const fs::path& r : roots) {
    for (std::string_view n : names) {
      fs::path p = r / n;
      if (fs::is_regular_file(p)) return p;
    }
  }
  throw std::runtime_error("dataset file '" + std::string(*names.begin()) + "' not found under " + dir.string());
}

}  // namespace

Shape Dataset::sample_shape() const {
  if (images.rank() < 2) return {};
  return Shape(images.shape().begin() + 1, images.shape().end());
}

void Dataset::validate() const {
  if (images.rank() < 2 || images.dim(0) != labels.size()) {
    throw std::invalid_argument("Dataset: image count does not match label count");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw std::invalid_argument("Dataset: label out of range");
  }
}

Dataset load_mnist_idx(const fs::path& images, const fs::path& labels, std::size_t limit) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  if (ib.size() < 16 || be32(ib, 0) != 0x00000803) throw std::runtime_error(images.string() + ": bad IDX image magic");
  if (lb.size() < 8 || be32(lb, 0) != 0x00000801) throw std::runtime_error(labels.string() + ": bad IDX label magic");
  const std::size_t n = be32(ib, 4), h = be32(ib, 8), w = be32(ib, 12);
  const std::size_t nl = be32(lb, 4);
  if (n != nl) throw std::runtime_error("MNIST: image count " + std::to_string(n) + " != label count " + std::to_string(nl));
  if (ib.size() != 16 + n * h * w) throw std::runtime_error(images.string() + ": truncated or oversized IDX file");
  if (lb.size() != 8 + n) throw std::runtime_error(labels.string() + ": truncated or oversized IDX file");
  const std::size_t keep = limit ? std::min(limit, n) : n;
  Dataset ds;
  ds.images = Tensor({keep, h, w, 1});
  for (std::size_t i = 0; i < keep * h * w; ++i) ds.images[i] = static_cast<double>(ib[16 + i]) / 255.0;
  ds.labels.resize(keep);
  for (std::size_t i = 0; i < keep; ++i) ds.labels[i] = lb[8 + i];
  ds.validate();
  return ds;
}

Dataset load_cifar10_bin(const std::vector<fs::path>& files, std::size_t limit) {
  constexpr std::size_t kRecord = 3073, kPlane = 1024;
  std::vector<std::vector<unsigned char>> blobs;
  std::size_t total = 0;
  for (const fs::path& f : files) {
    blobs.push_back(read_file(f));
    if (blobs.back().size() % kRecord != 0) {
      throw std::runtime_error(f.string() + ": size is not a multiple of 3073 bytes");
    }
    total += blobs.back().size() / kRecord;
  }
  const std::size_t keep = limit ? std::min(limit, total) : total;
  if (keep == 0) throw std::runtime_error("CIFAR-10: no records");
  Dataset ds;
  ds.images = Tensor({keep, 32, 32, 3});
  ds.labels.resize(keep);
  std::size_t i = 0;
  for (const auto& b : blobs) {
    for (std::size_t r = 0; r < b.size() / kRecord && i < keep; ++r, ++i) {
      const unsigned char* rec = b.data() + r * kRecord;
      if (rec[0] > 9) throw std::runtime_error("CIFAR-10: label byte " + std::to_string(rec[0]) + " out of range");
      ds.labels[i] = rec[0];
      double* dst = ds.images.raw() + i * 3 * kPlane;
      for (std::size_t p = 0; p < kPlane; ++p) {
        for (std::size_t c = 0; c < 3; ++c) dst[p * 3 + c] = static_cast<double>(rec[1 + c * kPlane + p]) / 255.0;
      }
    }
  }
  ds.validate();
  return ds;
}

namespace {

void standardize_span(double* x, std::size_t n) {
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  // One correction pass so a constant image standardizes to exact zeros.
  double resid = 0.0;
  for (std::size_t i = 0; i < n; ++i) resid += x[i] - mean;
  mean += resid / static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= static_cast<double>(n);
  const double denom = std::max(std::sqrt(var), 1.0 / std::sqrt(static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) x[i] = (x[i] - mean) / denom;
}

}  // namespace

Tensor standardize_per_image(const Tensor& image) {
  if (image.empty()) throw std::invalid_argument("standardize_per_image: empty image");
  Tensor out = image;
  standardize_span(out.raw(), out.size());
  return out;
}

void standardize_images(Tensor& images) {
  if (images.rank() < 2) throw std::invalid_argument("standardize_images: need [N × ...]");
  const std::size_t n = images.dim(0), per = images.size() / n;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) standardize_span(images.raw() + i * per, per);
}

Dataset load_dataset(std::string_view name, const fs::path& dir, Split split, std::size_t limit) {
  Dataset ds;
  const bool train = split == Split::Train;
  if (name == "mnist") {
    const fs::path img = find_file(dir, "mnist", {train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte",
                                                  train ? "train-images.idx3-ubyte" : "t10k-images.idx3-ubyte"});
    const fs::path lab = find_file(dir, "mnist", {train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte",
                                                  train ? "train-labels.idx1-ubyte" : "t10k-labels.idx1-ubyte"});
    ds = load_mnist_idx(img, lab, limit);
  } else if (name == "cifar10") {
    std::vector<fs::path> files;
    if (train) {
      for (int b = 1; b <= 5; ++b) {
        const std::string f = "data_batch_" + std::to_string(b) + ".bin";
        files.push_back(find_file(dir, "cifar10", {f}));
      }
    } else {
      files.push_back(find_file(dir, "cifar10", {"test_batch.bin"}));
    }
    ds = load_cifar10_bin(files, limit);
  } else {
    throw std::invalid_argument("unknown dataset '" + std::string(name) + "'");
  }
  ds.split = split;
  standardize_images(ds.images);
  return ds;
}

Batch gather(const Dataset& ds, std::span<const std::size_t> idx) {
  Shape s = ds.images.shape();
  const std::size_t per = ds.images.size() / s[0];
  s[0] = idx.size();
  Batch b{Tensor(s), std::vector<int>(idx.size())};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= ds.size()) throw std::out_of_range("gather: sample index out of range");
    std::memcpy(b.images.raw() + i * per, ds.images.raw() + idx[i] * per, per * sizeof(double));
    b.labels[i] = ds.labels[idx[i]];
  }
  return b;
}

}  // namespace supermask
