#include "srda/param_store.hpp"

#include <cmath>

#include "srda/error.hpp"
#include "srda/random.hpp"

namespace srda {

void ParamStore::add(const std::string& name, Tensor tensor) {
  if (!tensor.defined()) throw Error("ParamStore::add: undefined tensor for '" + name + "'");
  tensor.set_requires_grad(true);
  if (!tensors_.emplace(name, std::move(tensor)).second) {
    throw Error("ParamStore::add: duplicate parameter '" + name + "'");
  }
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("ParamStore: no parameter named '" + name + "'");
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("ParamStore: no parameter named '" + name + "'");
  return it->second;
}

std::int64_t ParamStore::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& [name, t] : tensors_) total += t.numel();
  return total;
}

void ParamStore::set_requires_grad(bool value) {
  for (auto& [name, t] : tensors_) t.set_requires_grad(value);
}

void ParamStore::clear_grads() {
  for (auto& [name, t] : tensors_) t.clear_grad();
}

void ParamStore::merge(const ParamStore& other) {
  for (const auto& [name, t] : other.tensors_) {
    if (!tensors_.emplace(name, t).second) {
      throw Error("ParamStore::merge: duplicate parameter '" + name + "'");
    }
  }
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, t] : tensors_) {
    Tensor c = t.detach();
    c.set_requires_grad(t.requires_grad());
    out.tensors_.emplace(name, std::move(c));
  }
  return out;
}

ParamStore ParamStore::to(DType dtype) const {
  ParamStore out;
  for (const auto& [name, t] : tensors_) {
    Tensor c = t.detach().to(dtype);
    c.set_requires_grad(t.requires_grad());
    out.tensors_.emplace(name, std::move(c));
  }
  return out;
}

FreezeGuard::FreezeGuard(ParamStore& store) : store_(store) {
  for (auto& [name, t] : store_) {
    previous_[name] = t.requires_grad();
    t.set_requires_grad(false);
  }
}

FreezeGuard::~FreezeGuard() {
  for (auto& [name, t] : store_) {
    auto it = previous_.find(name);
    if (it != previous_.end()) t.set_requires_grad(it->second);
  }
}

Tensor he_uniform(const Shape& shape, std::int64_t fan_in, std::uint64_t seed, DType dtype) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Rng rng(seed);
  std::vector<double> values(static_cast<std::size_t>(shape.numel()));
  for (double& v : values) v = rng.uniform(-bound, bound);
  Tensor t = Tensor::from_data(shape, std::move(values));
  return dtype == DType::kFloat64 ? t : t.to(dtype);
}

}  // namespace srda
