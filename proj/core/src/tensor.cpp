#include "srda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tensor_impl.hpp"

namespace srda {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

const char* dtype_name(DType dtype) {
  return dtype == DType::kFloat64 ? "f64" : "f32";
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

namespace detail {

Tensor make_tensor(const Shape& shape, DType dtype) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("negative extent in shape " + shape.str());
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->dtype = dtype;
  const auto count = static_cast<std::size_t>(shape.numel());
  if (dtype == DType::kFloat64) {
    impl->data = detail::Storage<double>(count, 0.0);
  } else {
    impl->data = detail::Storage<float>(count, 0.0f);
  }
  return Access::wrap(std::move(impl));
}

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

namespace {
void attach_impl(Tensor& out, std::vector<std::shared_ptr<TensorImpl>> inputs,
                 std::function<void(TensorImpl& out)> backward) {
  auto node = std::make_shared<Node>();
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  TensorImpl& o = impl_of(out);
  o.requires_grad = true;
  o.node = std::move(node);
}
}  // namespace

void attach(Tensor& out, std::initializer_list<const Tensor*> inputs,
            std::function<void(TensorImpl& out)> backward) {
  std::vector<std::shared_ptr<TensorImpl>> ins;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) ins.push_back(Access::impl(*t));
  }
  attach_impl(out, std::move(ins), std::move(backward));
}

void attach(Tensor& out, const std::vector<Tensor>& inputs,
            std::function<void(TensorImpl& out)> backward) {
  std::vector<std::shared_ptr<TensorImpl>> ins;
  for (const Tensor& t : inputs) {
    if (t.defined() && t.requires_grad()) ins.push_back(Access::impl(t));
  }
  attach_impl(out, std::move(ins), std::move(backward));
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw Error(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) +
                " vs " + dtype_name(b.dtype()) + ")");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& x = a.shape();
  const Shape& y = b.shape();
  const char* axis = nullptr;
  if (x.n != y.n) axis = "N";
  else if (x.c != y.c) axis = "C";
  else if (x.h != y.h) axis = "H";
  else if (x.w != y.w) axis = "W";
  if (axis) {
    throw DimensionError(std::string(op) + ": shape mismatch on axis " + axis +
                         " (" + x.str() + " vs " + y.str() + ")");
  }
}

}  // namespace detail

using detail::Access;
using detail::impl_of;

Tensor Tensor::zeros(const Shape& shape, DType dtype) {
  return detail::make_tensor(shape, dtype);
}

Tensor Tensor::full(const Shape& shape, double value, DType dtype) {
  Tensor t = detail::make_tensor(shape, dtype);
  detail::visit_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto& v = impl_of(t).values<T>();
    std::fill(v.begin(), v.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::from_data(const Shape& shape, std::vector<float> values) {
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw DimensionError("from_data: " + std::to_string(values.size()) +
                         " values for shape " + shape.str());
  }
  Tensor t = detail::make_tensor(Shape{}, DType::kFloat32);
  impl_of(t).shape = shape;
  impl_of(t).data = detail::Storage<float>(values.begin(), values.end());
  return t;
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> values) {
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw DimensionError("from_data: " + std::to_string(values.size()) +
                         " values for shape " + shape.str());
  }
  Tensor t = detail::make_tensor(Shape{}, DType::kFloat64);
  impl_of(t).shape = shape;
  impl_of(t).data = detail::Storage<double>(values.begin(), values.end());
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) {
  return full(Shape{1, 1, 1, 1}, value, dtype);
}

const Shape& Tensor::shape() const { return impl_of(*this).shape; }
DType Tensor::dtype() const { return impl_of(*this).dtype; }

template <typename T>
std::span<const T> Tensor::data() const {
  const auto* v = std::get_if<detail::Storage<T>>(&impl_of(*this).data);
  if (!v) throw Error("data(): requested element type does not match tensor dtype");
  return {v->data(), v->size()};
}

template <typename T>
std::span<T> Tensor::mutable_data() {
  auto* v = std::get_if<detail::Storage<T>>(&impl_of(*this).data);
  if (!v) throw Error("mutable_data(): requested element type does not match tensor dtype");
  return {v->data(), v->size()};
}

template std::span<const float> Tensor::data<float>() const;
template std::span<const double> Tensor::data<double>() const;
template std::span<float> Tensor::mutable_data<float>();
template std::span<double> Tensor::mutable_data<double>();

double Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h,
                  std::int64_t w) const {
  const Shape& s = shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 || w >= s.w) {
    throw DimensionError("at(): index out of range for shape " + s.str());
  }
  const auto idx = static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w);
  return detail::visit_dtype(dtype(), [&](auto tag) -> double {
    using T = decltype(tag);
    return static_cast<double>(impl_of(*this).values<T>()[idx]);
  });
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item(): tensor has " + std::to_string(numel()) + " elements");
  return at(0, 0, 0, 0);
}

std::vector<double> Tensor::to_vector() const {
  return detail::visit_dtype(dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto& v = impl_of(*this).values<T>();
    return std::vector<double>(v.begin(), v.end());
  });
}

bool Tensor::requires_grad() const { return impl_of(*this).requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  auto& impl = impl_of(*this);
  if (impl.node && !value) throw Error("set_requires_grad(false) on a non-leaf tensor; use detach()");
  impl.requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return impl_of(*this).grad.has_value(); }

Tensor Tensor::grad() const {
  const auto& impl = impl_of(*this);
  if (!impl.grad) throw Error("grad(): tensor has no gradient");
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = impl.shape;
  out->dtype = impl.dtype;
  out->data = *impl.grad;
  return Access::wrap(std::move(out));
}

void Tensor::clear_grad() { impl_of(*this).grad.reset(); }

void Tensor::backward() const {
  auto& root = impl_of(*this);
  if (root.shape.numel() != 1) {
    throw DimensionError("backward(): root must have one element, shape is " + root.shape.str());
  }
  if (!root.requires_grad) throw Error("backward(): root does not require grad");

  // Post-order DFS gives a topological order of the recorded graph.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  // Owns every reached intermediate until the sweep ends; releasing a node
  // may otherwise free inputs still waiting in `order`.
  std::vector<std::shared_ptr<detail::TensorImpl>> alive;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node_impl, next] = stack.back();
    if (node_impl->node && next < node_impl->node->inputs.size()) {
      const auto& child = node_impl->node->inputs[next++];
      if (visited.insert(child.get()).second) {
        alive.push_back(child);
        stack.emplace_back(child.get(), 0);
      }
    } else {
      order.push_back(node_impl);
      stack.pop_back();
    }
  }

  detail::visit_dtype(root.dtype, [&](auto tag) {
    using T = decltype(tag);
    root.grad_values<T>()[0] += T(1);
  });

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = *it;
    if (!t->node) continue;
    if (t->grad) t->node->backward(*t);
    t->node.reset();
  }
}

Tensor Tensor::detach() const {
  const auto& impl = impl_of(*this);
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = impl.shape;
  out->dtype = impl.dtype;
  out->data = impl.data;
  return Access::wrap(std::move(out));
}

Tensor Tensor::clone() const {
  Tensor out = detach();
  const auto& impl = impl_of(*this);
  impl_of(out).requires_grad = impl.requires_grad && !impl.node;
  if (impl.grad) impl_of(out).grad = impl.grad;
  return out;
}

Tensor Tensor::to(DType target) const {
  const auto& impl = impl_of(*this);
  if (impl.dtype == target) return clone();
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = impl.shape;
  out->dtype = target;
  out->requires_grad = impl.requires_grad && !impl.node;
  detail::visit_dtype(impl.dtype, [&](auto src_tag) {
    using S = decltype(src_tag);
    const auto& src = impl.values<S>();
    detail::visit_dtype(target, [&](auto dst_tag) {
      using D = decltype(dst_tag);
      out->data = detail::Storage<D>(src.begin(), src.end());
    });
  });
  return Access::wrap(std::move(out));
}

}  // namespace srda
