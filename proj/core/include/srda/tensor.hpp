#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace srda {

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

const char* dtype_name(DType dtype);

// Dense NCHW extent.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

namespace detail {
struct TensorImpl;
struct Access;
}  // namespace detail

// Handle to a dense 4-D array with optional gradient tracking. Copies share
// storage; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, DType dtype = DType::kFloat32);
  static Tensor full(const Shape& shape, double value,
                     DType dtype = DType::kFloat32);
  static Tensor from_data(const Shape& shape, std::vector<float> values);
  static Tensor from_data(const Shape& shape, std::vector<double> values);
  static Tensor scalar(double value, DType dtype = DType::kFloat32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  DType dtype() const;
  std::int64_t numel() const { return shape().numel(); }

  // Typed views; throw if T does not match dtype().
  template <typename T>
  std::span<const T> data() const;
  template <typename T>
  std::span<T> mutable_data();

  double at(std::int64_t n, std::int64_t c, std::int64_t h,
            std::int64_t w) const;
  // Value of a one-element tensor.
  double item() const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  // Gradient as a detached tensor; throws if absent.
  Tensor grad() const;
  void clear_grad();

  // Reverse-mode sweep from a one-element tensor. The recorded graph is
  // released afterwards; leaf gradients accumulate across calls.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;
  Tensor to(DType dtype) const;

  // True when both handles refer to the same storage.
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;

  friend struct detail::Access;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Per-pixel integer class map, shape (N, H, W).
struct LabelMap {
  std::int64_t n = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::uint8_t> values;

  LabelMap() = default;
  LabelMap(std::int64_t n_, std::int64_t h_, std::int64_t w_,
           std::uint8_t fill = 0)
      : n(n_), h(h_), w(w_), values(static_cast<std::size_t>(n_ * h_ * w_), fill) {}

  std::uint8_t& at(std::int64_t i, std::int64_t y, std::int64_t x) {
    return values[static_cast<std::size_t>((i * h + y) * w + x)];
  }
  std::uint8_t at(std::int64_t i, std::int64_t y, std::int64_t x) const {
    return values[static_cast<std::size_t>((i * h + y) * w + x)];
  }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

inline constexpr std::uint8_t kIgnoreLabel = 255;

}  // namespace srda
