#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace supermask {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);

/// When enabled, tensor construction and every kernel output are scanned for
/// NaN/Inf and std::domain_error is thrown on the first non-finite element.
void set_checked_mode(bool enabled);
bool checked_mode();

/// Dense row-major float64 array. The single numeric carrier for
/// activations, weights, mask scores and gradients.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2D accessors; callers guarantee rank() == 2.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Same buffer, new shape. Throws std::invalid_argument on size mismatch.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double value);
  bool all_finite() const;

  /// Bitwise equality of shape and contents.
  bool operator==(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// FNV-1a over the shape and the raw bytes of the values.
std::uint64_t tensor_hash(const Tensor& t, std::uint64_t seed = 0xcbf29ce484222325ULL);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
void check_finite(const Tensor& t, const char* what);

}  // namespace supermask
