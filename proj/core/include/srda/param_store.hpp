#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "srda/tensor.hpp"

namespace srda {

// Named trainable tensors, iterated in lexicographic name order.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor>;

  // Registers a parameter and marks it as requiring gradients. Throws on a
  // duplicate name.
  void add(const std::string& name, Tensor tensor);

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }
  std::int64_t parameter_count() const;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  void set_requires_grad(bool value);
  void clear_grads();

  // Union over shared handles; names must not collide.
  void merge(const ParamStore& other);

  // Deep copies.
  ParamStore clone() const;
  ParamStore to(DType dtype) const;

 private:
  Map tensors_;
};

// Turns gradient tracking off for a store and restores it on destruction.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamStore& store);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamStore& store_;
  std::map<std::string, bool> previous_;
};

// He-uniform weights with fan_in inputs, drawn from a seeded stream.
Tensor he_uniform(const Shape& shape, std::int64_t fan_in, std::uint64_t seed,
                  DType dtype = DType::kFloat32);

}  // namespace srda
