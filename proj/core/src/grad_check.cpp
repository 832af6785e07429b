#include "srda/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "srda/error.hpp"
#include "srda/random.hpp"

namespace srda {

namespace {

double evaluate(const std::function<Tensor(const ParamStore&)>& f, const ParamStore& point) {
  NoGradGuard no_grad;
  const double v = f(point).item();
  if (!std::isfinite(v)) throw NumericalError("grad_check: function value is not finite");
  return v;
}

}  // namespace

double grad_check(const std::function<Tensor(const ParamStore&)>& f, ParamStore& point,
                  const GradCheckOptions& options) {
  for (const auto& [name, t] : point) {
    if (t.dtype() != DType::kFloat64) {
      throw ValidationError("grad_check: parameter '" + name + "' is not 64-bit");
    }
  }
  point.clear_grads();
  Tensor y = f(point);
  if (!std::isfinite(y.item())) throw NumericalError("grad_check: function value is not finite");
  y.backward();

  struct Coord {
    std::string name;
    std::size_t index;
  };
  std::vector<Coord> all;
  for (const auto& [name, t] : point) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(t.numel()); ++i) all.push_back({name, i});
  }
  if (all.empty()) return 0.0;
  std::vector<Coord> chosen;
  if (static_cast<std::int64_t>(all.size()) <= options.coordinates) {
    chosen = all;
  } else {
    Rng rng(options.seed);
    // Partial Fisher-Yates.
    for (int k = 0; k < options.coordinates; ++k) {
      const auto remaining = static_cast<std::int64_t>(all.size()) - k;
      const auto j = static_cast<std::size_t>(k + rng.index(remaining));
      std::swap(all[static_cast<std::size_t>(k)], all[j]);
      chosen.push_back(all[static_cast<std::size_t>(k)]);
    }
  }

  double worst = 0.0;
  for (const Coord& c : chosen) {
    Tensor& t = point.at(c.name);
    const double analytic = t.has_grad() ? t.grad().data<double>()[c.index] : 0.0;
    auto values = t.mutable_data<double>();
    const double original = values[c.index];
    values[c.index] = original + options.step;
    const double plus = evaluate(f, point);
    values[c.index] = original - options.step;
    const double minus = evaluate(f, point);
    values[c.index] = original;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double err = std::fabs(analytic - numeric) / (std::fabs(analytic) + std::fabs(numeric) + 1e-8);
    worst = std::max(worst, err);
  }
  point.clear_grads();
  return worst;
}

}  // namespace srda
