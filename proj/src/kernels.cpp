#include "supermask/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace supermask {

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;
// Rows of the im2col buffer materialised per chunk in the conv kernels.
constexpr std::size_t kConvChunkRows = 4096;

// C[m×n] = A·B with A(i,p) = a[i*a_row + p*a_col] and B row-major [k×n].
// Register-tiled; each c_ij sums p = 0..k-1 in order regardless of tiling.
void gemm(const double* a, std::size_t a_row, std::size_t a_col, const double* b, double* c, std::size_t m,
          std::size_t n, std::size_t k) {
  const std::size_t row_tiles = (m + kTileRows - 1) / kTileRows;
  const std::size_t col_tiles = (n + kTileCols - 1) / kTileCols;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t jt = 0; jt < col_tiles; ++jt) {
    for (std::size_t it = 0; it < row_tiles; ++it) {
      const std::size_t i0 = it * kTileRows;
      const std::size_t j0 = jt * kTileCols;
      const std::size_t mr = std::min(kTileRows, m - i0);
      const std::size_t nr = std::min(kTileCols, n - j0);
      if (mr == kTileRows && nr == kTileCols) {
        double acc[kTileRows][kTileCols] = {};
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = b + p * n + j0;
          for (std::size_t r = 0; r < kTileRows; ++r) {
            const double av = a[(i0 + r) * a_row + p * a_col];
#pragma omp simd
            for (std::size_t q = 0; q < kTileCols; ++q) acc[r][q] += av * brow[q];
          }
        }
        for (std::size_t r = 0; r < kTileRows; ++r) {
          std::copy_n(acc[r], kTileCols, c + (i0 + r) * n + j0);
        }
      } else {
        double acc[kTileRows][kTileCols] = {};
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = b + p * n + j0;
          for (std::size_t r = 0; r < mr; ++r) {
            const double av = a[(i0 + r) * a_row + p * a_col];
            for (std::size_t q = 0; q < nr; ++q) acc[r][q] += av * brow[q];
          }
        }
        for (std::size_t r = 0; r < mr; ++r) std::copy_n(acc[r], nr, c + (i0 + r) * n + j0);
      }
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_string(t.shape()));
  }
}

void post_check(const Tensor& t, const char* what) {
  if (checked_mode()) check_finite(t, what);
}

struct ConvGeometry {
  std::size_t n, h, w, cin, kh, kw, cout;
  std::size_t patch() const { return kh * kw * cin; }
};

ConvGeometry conv_geometry(const Shape& input, const Shape& kernel) {
  if (input.size() != 4 || kernel.size() != 4) {
    throw std::invalid_argument("conv2d: expected NHWC input and [kh×kw×Cin×Cout] kernel");
  }
  if (input[3] != kernel[2]) {
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_string(input) + " kernel " +
                                shape_string(kernel));
  }
  if (kernel[0] % 2 == 0 || kernel[1] % 2 == 0) throw std::invalid_argument("conv2d: kernel sizes must be odd");
  return {input[0], input[1], input[2], input[3], kernel[0], kernel[1], kernel[3]};
}

std::size_t images_per_chunk(const ConvGeometry& g) { return std::max<std::size_t>(1, kConvChunkRows / (g.h * g.w)); }

// cols[(img,y,x), (ky,kx,ci)] for images [n0, n0+count).
void im2col(const double* input, const ConvGeometry& g, std::size_t n0, std::size_t count, std::vector<double>& cols) {
  const std::size_t patch = g.patch();
  const long ph = static_cast<long>(g.kh / 2);
  const long pw = static_cast<long>(g.kw / 2);
  cols.assign(count * g.h * g.w * patch, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t img = 0; img < count; ++img) {
    for (std::size_t y = 0; y < g.h; ++y) {
      const double* src = input + (n0 + img) * g.h * g.w * g.cin;
      for (std::size_t x = 0; x < g.w; ++x) {
        double* row = cols.data() + ((img * g.h + y) * g.w + x) * patch;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(y + ky) - ph;
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const long ix = static_cast<long>(x + kx) - pw;
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            std::copy_n(src + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin, g.cin,
                        row + (ky * g.kw + kx) * g.cin);
          }
        }
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: inner dimensions disagree " + shape_string(a.shape()) + " · " +
                                shape_string(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  gemm(a.raw(), a.dim(1), 1, b.raw(), c.raw(), a.dim(0), b.dim(1), a.dim(1));
  post_check(c, "matmul");
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  if (a.dim(0) != b.dim(0)) {
    throw std::invalid_argument("matmul_tn: inner dimensions disagree " + shape_string(a.shape()) + "ᵀ · " +
                                shape_string(b.shape()));
  }
  Tensor c({a.dim(1), b.dim(1)});
  gemm(a.raw(), 1, a.dim(1), b.raw(), c.raw(), a.dim(1), b.dim(1), a.dim(0));
  post_check(c, "matmul_tn");
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw std::invalid_argument("matmul_nt: inner dimensions disagree " + shape_string(a.shape()) + " · " +
                                shape_string(b.shape()) + "ᵀ");
  }
  const Tensor bt = transpose(b);
  Tensor c({a.dim(0), b.dim(0)});
  gemm(a.raw(), a.dim(1), 1, bt.raw(), c.raw(), a.dim(0), b.dim(0), a.dim(1));
  post_check(c, "matmul_nt");
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  Tensor t({cols, rows});
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) t[c * rows + r] = a[r * cols + c];
  }
  return t;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  const std::size_t n = a.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
  post_check(out, "hadamard");
  return out;
}

Tensor elu(const Tensor& x, double alpha) {
  if (!(alpha > 0)) throw std::invalid_argument("elu: alpha must be positive");
  Tensor out(x.shape());
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    out[i] = v > 0 ? v : alpha * std::expm1(v);
  }
  post_check(out, "elu");
  return out;
}

Tensor elu_grad(const Tensor& x, double alpha) {
  if (!(alpha > 0)) throw std::invalid_argument("elu_grad: alpha must be positive");
  Tensor out(x.shape());
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    out[i] = v >= 0 ? 1.0 : alpha * std::exp(v);
  }
  post_check(out, "elu_grad");
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
  const ConvGeometry g = conv_geometry(input.shape(), kernel.shape());
  Tensor out({g.n, g.h, g.w, g.cout});
  const std::size_t per_chunk = images_per_chunk(g);
  const std::size_t rows_per_image = g.h * g.w;
  std::vector<double> cols;
  for (std::size_t n0 = 0; n0 < g.n; n0 += per_chunk) {
    const std::size_t count = std::min(per_chunk, g.n - n0);
    im2col(input.raw(), g, n0, count, cols);
    gemm(cols.data(), g.patch(), 1, kernel.raw(), out.raw() + n0 * rows_per_image * g.cout, count * rows_per_image,
         g.cout, g.patch());
  }
  post_check(out, "conv2d");
  return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel) {
  if (grad_out.rank() != 4) throw std::invalid_argument("conv2d_backward_input: expected NHWC gradient");
  if (kernel.rank() != 4 || grad_out.dim(3) != kernel.dim(3)) {
    throw std::invalid_argument("conv2d_backward_input: output channels disagree with kernel");
  }
  const Shape in_shape{grad_out.dim(0), grad_out.dim(1), grad_out.dim(2), kernel.dim(2)};
  const ConvGeometry g = conv_geometry(in_shape, kernel.shape());
  const std::size_t patch = g.patch();
  const long ph = static_cast<long>(g.kh / 2);
  const long pw = static_cast<long>(g.kw / 2);

  // kernel viewed as [patch × Cout]; dcols = dZ · kernelᵀ
  const Tensor kernel_t = transpose(kernel.reshaped({patch, g.cout}));
  Tensor grad_in(in_shape);
  const std::size_t per_chunk = images_per_chunk(g);
  const std::size_t rows_per_image = g.h * g.w;
  std::vector<double> dcols;
  for (std::size_t n0 = 0; n0 < g.n; n0 += per_chunk) {
    const std::size_t count = std::min(per_chunk, g.n - n0);
    dcols.assign(count * rows_per_image * patch, 0.0);
    gemm(grad_out.raw() + n0 * rows_per_image * g.cout, g.cout, 1, kernel_t.raw(), dcols.data(),
         count * rows_per_image, patch, g.cout);
#pragma omp parallel for schedule(static)
    for (std::size_t img = 0; img < count; ++img) {
      double* dst = grad_in.raw() + (n0 + img) * g.h * g.w * g.cin;
      for (std::size_t y = 0; y < g.h; ++y) {
        for (std::size_t x = 0; x < g.w; ++x) {
          const double* row = dcols.data() + ((img * g.h + y) * g.w + x) * patch;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const long iy = static_cast<long>(y + ky) - ph;
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const long ix = static_cast<long>(x + kx) - pw;
              if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
              double* px = dst + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
              const double* src = row + (ky * g.kw + kx) * g.cin;
              for (std::size_t ci = 0; ci < g.cin; ++ci) px[ci] += src[ci];
            }
          }
        }
      }
    }
  }
  post_check(grad_in, "conv2d_backward_input");
  return grad_in;
}

Tensor conv2d_backward_kernel(const Tensor& input, const Tensor& grad_out, const Shape& kernel_shape) {
  const ConvGeometry g = conv_geometry(input.shape(), kernel_shape);
  if (grad_out.shape() != Shape{g.n, g.h, g.w, g.cout}) {
    throw std::invalid_argument("conv2d_backward_kernel: gradient shape " + shape_string(grad_out.shape()) +
                                " does not match the forward output");
  }
  const std::size_t patch = g.patch();
  Tensor grad_k({patch, g.cout});
  std::vector<double> partial(patch * g.cout);
  const std::size_t per_chunk = images_per_chunk(g);
  const std::size_t rows_per_image = g.h * g.w;
  std::vector<double> cols;
  for (std::size_t n0 = 0; n0 < g.n; n0 += per_chunk) {
    const std::size_t count = std::min(per_chunk, g.n - n0);
    im2col(input.raw(), g, n0, count, cols);
    gemm(cols.data(), 1, patch, grad_out.raw() + n0 * rows_per_image * g.cout, partial.data(), patch, g.cout,
         count * rows_per_image);
    for (std::size_t i = 0; i < partial.size(); ++i) grad_k[i] += partial[i];
  }
  post_check(grad_k, "conv2d_backward_kernel");
  return std::move(grad_k).reshaped(kernel_shape);
}

PoolResult maxpool2(const Tensor& input) {
  if (input.rank() != 4) throw std::invalid_argument("maxpool2: expected NHWC input");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw std::invalid_argument("maxpool2: spatial dimensions must be even, got " + shape_string(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult result{Tensor({n, oh, ow, c}), std::vector<std::size_t>(n * oh * ow * c)};
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((img * h + 2 * y) * w + 2 * x) * c + ch;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = ((img * h + 2 * y + dy) * w + 2 * x + dx) * c + ch;
              if (input[idx] > input[best]) best = idx;
            }
          }
          const std::size_t out = ((img * oh + y) * ow + x) * c + ch;
          result.output[out] = input[best];
          result.argmax[out] = best;
        }
      }
    }
  }
  return result;
}

Tensor maxpool2_backward(const Tensor& grad_out, std::span<const std::size_t> argmax, const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) throw std::invalid_argument("maxpool2_backward: index map size mismatch");
  Tensor grad_in(input_shape);
  // Windows do not overlap, so every input element receives at most one term.
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[argmax[i]] += grad_out[i];
  return grad_in;
}

LossResult softmax_xent(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_xent");
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != n) throw std::invalid_argument("softmax_xent: label count does not match batch size");
  LossResult result{0.0, Tensor(logits.shape())};
  std::vector<double> row_loss(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::invalid_argument("softmax_xent: label " + std::to_string(labels[i]) + " out of range");
    }
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.raw() + i * classes;
    double* g = result.grad.raw() + i * classes;
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += std::exp(z[j] - zmax);
    const double log_sum = std::log(sum) + zmax;
    row_loss[i] = log_sum - z[labels[i]];
    for (std::size_t j = 0; j < classes; ++j) g[j] = std::exp(z[j] - log_sum) * inv_n;
    g[labels[i]] -= inv_n;
  }
  for (double l : row_loss) result.loss += l;
  result.loss *= inv_n;
  post_check(result.grad, "softmax_xent");
  return result;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "argmax_rows");
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.raw() + i * classes;
    out[i] = static_cast<int>(std::max_element(z, z + classes) - z);
  }
  return out;
}

}  // namespace supermask
