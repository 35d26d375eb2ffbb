#include "supermask/reference.hpp"

#include <stdexcept>

namespace supermask::reference {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("reference::matmul: shape mismatch");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
  return c;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
  if (input.rank() != 4 || kernel.rank() != 4 || input.dim(3) != kernel.dim(2)) {
    throw std::invalid_argument("reference::conv2d: shape mismatch");
  }
  const long n = static_cast<long>(input.dim(0)), h = static_cast<long>(input.dim(1)),
             w = static_cast<long>(input.dim(2)), cin = static_cast<long>(input.dim(3));
  const long kh = static_cast<long>(kernel.dim(0)), kw = static_cast<long>(kernel.dim(1)),
             cout = static_cast<long>(kernel.dim(3));
  Tensor out({input.dim(0), input.dim(1), input.dim(2), kernel.dim(3)});
  for (long b = 0; b < n; ++b) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        for (long co = 0; co < cout; ++co) {
          double sum = 0.0;
          for (long ky = 0; ky < kh; ++ky) {
            for (long kx = 0; kx < kw; ++kx) {
              const long iy = y + ky - kh / 2;
              const long ix = x + kx - kw / 2;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              for (long ci = 0; ci < cin; ++ci) {
                sum += input[static_cast<std::size_t>(((b * h + iy) * w + ix) * cin + ci)] *
                       kernel[static_cast<std::size_t>(((ky * kw + kx) * cin + ci) * cout + co)];
              }
            }
          }
          out[static_cast<std::size_t>(((b * h + y) * w + x) * cout + co)] = sum;
        }
      }
    }
  }
  return out;
}

PoolResult maxpool2(const Tensor& input) {
  if (input.rank() != 4 || input.dim(1) % 2 || input.dim(2) % 2) {
    throw std::invalid_argument("reference::maxpool2: bad shape");
  }
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  PoolResult r{Tensor({n, h / 2, w / 2, c}), {}};
  r.argmax.reserve(r.output.size());
  std::size_t out = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < h; y += 2) {
      for (std::size_t x = 0; x < w; x += 2) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = 0;
          bool have = false;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = ((b * h + y + dy) * w + x + dx) * c + ch;
              if (!have || input[idx] > input[best]) {
                best = idx;
                have = true;
              }
            }
          }
          r.output[out++] = input[best];
          r.argmax.push_back(best);
        }
      }
    }
  }
  return r;
}

}  // namespace supermask::reference
