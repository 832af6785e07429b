#include "srda/adam.hpp"

#include <cmath>

#include "srda/error.hpp"
#include "tensor_impl.hpp"

namespace srda {

void adam_step(ParamStore& params, AdamState& state) {
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) throw ValidationError("adam_step: parameter '" + name + "' has no gradient");
  }
  state.step += 1;
  const AdamOptions& o = state.options;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);

  for (auto& [name, p] : params) {
    auto [mit, m_new] = state.first_moment.try_emplace(name);
    auto [vit, v_new] = state.second_moment.try_emplace(name);
    if (m_new) mit->second = Tensor::zeros(p.shape(), p.dtype());
    if (v_new) vit->second = Tensor::zeros(p.shape(), p.dtype());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != p.shape() || v.shape() != p.shape()) {
      throw DimensionError("adam_step: moment shape mismatch for '" + name + "'");
    }
    detail::visit_dtype(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto& pimpl = detail::impl_of(p);
      const detail::Storage<T>& g = std::get<detail::Storage<T>>(*pimpl.grad);
      auto pv = p.mutable_data<T>();
      auto mv = m.mutable_data<T>();
      auto vv = v.mutable_data<T>();
      const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
      const T step_size = static_cast<T>(o.lr / bc1);
      const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
      const T eps = static_cast<T>(o.eps);
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const T gi = g[i];
        const T mi = b1 * mv[i] + (T(1) - b1) * gi;
        const T vi = b2 * vv[i] + (T(1) - b2) * gi * gi;
        mv[i] = mi;
        vv[i] = vi;
        pv[i] -= step_size * mi / (std::sqrt(vi) * inv_sqrt_bc2 + eps);
      }
    });
    p.clear_grad();
  }
}

}  // namespace srda
