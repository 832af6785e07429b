#pragma once

#include <cstdint>
#include <functional>

#include "srda/param_store.hpp"
#include "srda/tensor.hpp"

namespace srda {

struct GradCheckOptions {
  double step = 1e-3;
  // Coordinates sampled across all parameters; every coordinate is checked
  // when the total is smaller.
  int coordinates = 20;
  std::uint64_t seed = 0;
};

// Compares reverse-mode gradients of a scalar function with central
// differences at the given point, which must hold 64-bit tensors. Returns the
// largest |analytic - numeric| / (|analytic| + |numeric| + 1e-8) over the
// sampled coordinates. Throws NumericalError if f is not finite.
double grad_check(const std::function<Tensor(const ParamStore&)>& f, ParamStore& point,
                  const GradCheckOptions& options = {});

}  // namespace srda
