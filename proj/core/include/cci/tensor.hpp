#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cci {

/// NCHW extents of a rank-4 tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  [[nodiscard]] std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  [[nodiscard]] std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Seedable generator shared by weight init, fixtures and the harness.
using Rng = std::mt19937_64;

/// Rank-4 NCHW array of 32-bit floats with value semantics.
///
/// A default-constructed tensor is the empty placeholder (all extents zero);
/// any explicitly constructed tensor must have every extent >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(Shape shape) { return Tensor(shape, 0.0f); }
  static Tensor full(Shape shape, float value) { return Tensor(shape, value); }
  static Tensor uniform(Shape shape, float lo, float hi, Rng& rng);
  static Tensor normal(Shape shape, Rng& rng, float mean = 0.0f, float stddev = 1.0f);
  /// Per-channel vector stored as 1 x c x 1 x 1.
  static Tensor vector(std::initializer_list<float> values);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int n() const { return shape_.n; }
  [[nodiscard]] int c() const { return shape_.c; }
  [[nodiscard]] int h() const { return shape_.h; }
  [[nodiscard]] int w() const { return shape_.w; }
  [[nodiscard]] std::size_t numel() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] std::span<float> data() { return data_; }
  [[nodiscard]] std::span<const float> data() const { return data_; }
  [[nodiscard]] const std::vector<float>& values() const { return data_; }

  [[nodiscard]] std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  float& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  [[nodiscard]] float at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the h*w plane of (n, c).
  float* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  [[nodiscard]] const float* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  [[nodiscard]] Tensor reshaped(Shape shape) const;
  void fill(float value);
  /// this += other (shapes must match). Used for gradient accumulation.
  void add_(const Tensor& other);
  void scale_(float factor);

  [[nodiscard]] bool all_finite() const;

 private:
  Shape shape_{};
  std::vector<float> data_;
};

/// Throws ConfigError unless a and b have the same shape.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Element-wise maximum absolute difference (shapes must match).
[[nodiscard]] float max_abs_diff(const Tensor& a, const Tensor& b);

/// True when every element is bit-identical.
[[nodiscard]] bool bit_equal(const Tensor& a, const Tensor& b);

#ifndef NDEBUG
void debug_check_finite(const Tensor& t, const char* op);
#define CCI_CHECK_FINITE(t, op) ::cci::debug_check_finite((t), (op))
#else
#define CCI_CHECK_FINITE(t, op) ((void)0)
#endif

}  // namespace cci
