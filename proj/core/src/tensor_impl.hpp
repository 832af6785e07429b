#pragma once

// Internal representation shared by the op implementations.

#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "srda/error.hpp"
#include "srda/tensor.hpp"

namespace srda::detail {

// Storage aligned to the widest vector unit so that vectorised kernels take the
// same code path, and sum in the same order, wherever a buffer lands.
template <typename T>
using Storage = std::vector<T, Eigen::aligned_allocator<T>>;
using Buffer = std::variant<Storage<float>, Storage<double>>;

struct TensorImpl;

// One recorded operation: the inputs that need gradients and the closure that
// pushes the output gradient into them.
struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  DType dtype = DType::kFloat32;
  Buffer data;
  std::optional<Buffer> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  template <typename T>
  Storage<T>& values() {
    return std::get<Storage<T>>(data);
  }
  template <typename T>
  const Storage<T>& values() const {
    return std::get<Storage<T>>(data);
  }
  // Gradient buffer, zero-initialised on first use.
  template <typename T>
  Storage<T>& grad_values() {
    if (!grad) grad = Buffer(Storage<T>(static_cast<std::size_t>(shape.numel()), T(0)));
    return std::get<Storage<T>>(*grad);
  }
};

struct Access {
  static const std::shared_ptr<TensorImpl>& impl(const Tensor& t) { return t.impl_; }
  static Tensor wrap(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }
};

inline TensorImpl& impl_of(const Tensor& t) {
  if (!t.defined()) throw Error("operation on an undefined tensor");
  return *Access::impl(t);
}

template <typename F>
decltype(auto) visit_dtype(DType dtype, F&& f) {
  if (dtype == DType::kFloat64) return f(double{});
  return f(float{});
}

Tensor make_tensor(const Shape& shape, DType dtype);

// True when an op over these inputs should record a node.
bool needs_grad(std::initializer_list<const Tensor*> inputs);

// Marks out as produced by an op over inputs and installs the backward closure.
void attach(Tensor& out, std::initializer_list<const Tensor*> inputs,
            std::function<void(TensorImpl& out)> backward);
void attach(Tensor& out, const std::vector<Tensor>& inputs,
            std::function<void(TensorImpl& out)> backward);

template <typename T>
const Storage<T>& out_grad(TensorImpl& out) {
  return std::get<Storage<T>>(*out.grad);
}

// Gradient destination for an input, or nullptr when it does not need one.
template <typename T>
T* grad_target(const std::shared_ptr<TensorImpl>& in) {
  if (!in || !in->requires_grad) return nullptr;
  return in->grad_values<T>().data();
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op);
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace srda::detail
