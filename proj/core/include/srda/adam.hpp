#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "srda/param_store.hpp"
#include "srda/tensor.hpp"

namespace srda {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment buffers per parameter name plus the step counter.
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;

  AdamState() = default;
  explicit AdamState(const AdamOptions& opts) : options(opts) {}
};

// One bias-corrected Adam update over every parameter in params, then clears
// their gradients. Throws ValidationError naming a parameter without a
// gradient.
void adam_step(ParamStore& params, AdamState& state);

}  // namespace srda
