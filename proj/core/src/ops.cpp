#include "srda/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tensor_impl.hpp"

namespace srda {

using detail::Access;
using detail::grad_target;
using detail::impl_of;
using detail::out_grad;
using detail::TensorImpl;
using detail::visit_dtype;

namespace {

// out = f(a) elementwise, backward grad_in += g * df(a, out).
template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd bwd) {
  Tensor out = detail::make_tensor(x.shape(), x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto& xv = impl_of(x).values<T>();
    auto& ov = impl_of(out).values<T>();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = static_cast<T>(fwd(xv[i]));
  });
  if (detail::needs_grad({&x})) {
    auto xi = Access::impl(x);
    detail::attach(out, {&x}, [xi, bwd](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const auto& g = out_grad<T>(o);
        const auto& xv = xi->values<T>();
        const auto& ov = o.values<T>();
        T* gx = grad_target<T>(xi);
        for (std::size_t i = 0; i < g.size(); ++i) {
          gx[i] += static_cast<T>(g[i] * bwd(xv[i], ov[i]));
        }
      });
    });
  }
  return out;
}

void require_binary(const Tensor& a, const Tensor& b, const char* op) {
  detail::require_same_dtype(a, b, op);
  detail::require_same_shape(a, b, op);
}

// Sum of a buffer accumulated in double, sequentially.
template <typename T>
double accumulate(const detail::Storage<T>& v) {
  double s = 0.0;
  for (T e : v) s += static_cast<double>(e);
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_binary(a, b, "add");
  Tensor out = detail::make_tensor(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto& av = impl_of(a).values<T>();
    const auto& bv = impl_of(b).values<T>();
    auto& ov = impl_of(out).values<T>();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
  });
  if (detail::needs_grad({&a, &b})) {
    auto ai = Access::impl(a), bi = Access::impl(b);
    detail::attach(out, {&a, &b}, [ai, bi](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const auto& g = out_grad<T>(o);
        if (T* ga = grad_target<T>(ai)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (T* gb = grad_target<T>(bi)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      });
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_binary(a, b, "sub");
  Tensor out = detail::make_tensor(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto& av = impl_of(a).values<T>();
    const auto& bv = impl_of(b).values<T>();
    auto& ov = impl_of(out).values<T>();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] - bv[i];
  });
  if (detail::needs_grad({&a, &b})) {
    auto ai = Access::impl(a), bi = Access::impl(b);
    detail::attach(out, {&a, &b}, [ai, bi](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const auto& g = out_grad<T>(o);
        if (T* ga = grad_target<T>(ai)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (T* gb = grad_target<T>(bi)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      });
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_binary(a, b, "mul");
  Tensor out = detail::make_tensor(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto& av = impl_of(a).values<T>();
    const auto& bv = impl_of(b).values<T>();
    auto& ov = impl_of(out).values<T>();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
  });
  if (detail::needs_grad({&a, &b})) {
    auto ai = Access::impl(a), bi = Access::impl(b);
    detail::attach(out, {&a, &b}, [ai, bi](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const auto& g = out_grad<T>(o);
        const auto& av = ai->values<T>();
        const auto& bv = bi->values<T>();
        if (T* ga = grad_target<T>(ai)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        if (T* gb = grad_target<T>(bi)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      });
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(x, [value](double v) { return v + value; },
               [](double, double) { return 1.0; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  return unary(x, [](double v) { return std::fabs(v); },
               [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary(x, [floor](double v) { return v < floor ? floor : v; },
               [floor](double v, double) { return v < floor ? 0.0 : 1.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      x,
      [slope](auto v) {
        using T = decltype(v);
        return v > T(0) ? v : static_cast<T>(slope) * v;
      },
      [slope](auto v, auto) {
        using T = decltype(v);
        return v > T(0) ? T(1) : static_cast<T>(slope);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double s) { return s * (1.0 - s); });
}

Tensor instance_norm(const Tensor& x, double eps) {
  const Shape s = x.shape();
  if (s.h * s.w < 2) {
    throw DimensionError("instance_norm: needs at least 2 pixels per plane, shape " + s.str());
  }
  const std::int64_t planes = s.n * s.c;
  const std::int64_t hw = s.plane();
  Tensor out = detail::make_tensor(s, x.dtype());
  std::vector<double> inv_std(static_cast<std::size_t>(planes));
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = impl_of(x).values<T>().data();
    T* ov = impl_of(out).values<T>().data();
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* xp = xv + p * hw;
      double m = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) m += xp[i];
      m /= static_cast<double>(hw);
      double var = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) {
        const double d = xp[i] - m;
        var += d * d;
      }
      var /= static_cast<double>(hw);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(p)] = is;
      for (std::int64_t i = 0; i < hw; ++i) ov[p * hw + i] = static_cast<T>((xp[i] - m) * is);
    }
  });
  if (detail::needs_grad({&x})) {
    auto xi = Access::impl(x);
    detail::attach(out, {&x}, [xi, inv_std, planes, hw](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = out_grad<T>(o).data();
        const T* y = o.values<T>().data();
        T* gx = grad_target<T>(xi);
        for (std::int64_t p = 0; p < planes; ++p) {
          double mg = 0.0, mgy = 0.0;
          for (std::int64_t i = 0; i < hw; ++i) {
            mg += g[p * hw + i];
            mgy += static_cast<double>(g[p * hw + i]) * y[p * hw + i];
          }
          mg /= static_cast<double>(hw);
          mgy /= static_cast<double>(hw);
          const double is = inv_std[static_cast<std::size_t>(p)];
          for (std::int64_t i = 0; i < hw; ++i) {
            const std::int64_t k = p * hw + i;
            gx[k] += static_cast<T>(is * (g[k] - mg - y[k] * mgy));
          }
        }
      });
    });
  }
  return out;
}

Tensor log_softmax_channel(const Tensor& x) {
  const Shape s = x.shape();
  if (s.c < 2) throw DimensionError("log_softmax_channel: needs C >= 2 on axis C, shape " + s.str());
  const std::int64_t hw = s.plane();
  Tensor out = detail::make_tensor(s, x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = impl_of(x).values<T>().data();
    T* ov = impl_of(out).values<T>().data();
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* xs = xv + n * s.c * hw;
      T* os = ov + n * s.c * hw;
      for (std::int64_t p = 0; p < hw; ++p) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::int64_t c = 0; c < s.c; ++c) m = std::max(m, static_cast<double>(xs[c * hw + p]));
        double z = 0.0;
        for (std::int64_t c = 0; c < s.c; ++c) z += std::exp(xs[c * hw + p] - m);
        const double lse = m + std::log(z);
        for (std::int64_t c = 0; c < s.c; ++c) os[c * hw + p] = static_cast<T>(xs[c * hw + p] - lse);
      }
    }
  });
  if (detail::needs_grad({&x})) {
    auto xi = Access::impl(x);
    detail::attach(out, {&x}, [xi, s, hw](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = out_grad<T>(o).data();
        const T* y = o.values<T>().data();
        T* gx = grad_target<T>(xi);
        for (std::int64_t n = 0; n < s.n; ++n) {
          const std::int64_t base = n * s.c * hw;
          for (std::int64_t p = 0; p < hw; ++p) {
            double gs = 0.0;
            for (std::int64_t c = 0; c < s.c; ++c) gs += g[base + c * hw + p];
            for (std::int64_t c = 0; c < s.c; ++c) {
              const std::int64_t k = base + c * hw + p;
              gx[k] += static_cast<T>(g[k] - std::exp(static_cast<double>(y[k])) * gs);
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor softmax_channel(const Tensor& x) {
  const Shape s = x.shape();
  if (s.c < 2) throw DimensionError("softmax_channel: needs C >= 2 on axis C, shape " + s.str());
  const std::int64_t hw = s.plane();
  Tensor out = detail::make_tensor(s, x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = impl_of(x).values<T>().data();
    T* ov = impl_of(out).values<T>().data();
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* xs = xv + n * s.c * hw;
      T* os = ov + n * s.c * hw;
      for (std::int64_t p = 0; p < hw; ++p) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::int64_t c = 0; c < s.c; ++c) m = std::max(m, static_cast<double>(xs[c * hw + p]));
        double z = 0.0;
        for (std::int64_t c = 0; c < s.c; ++c) z += std::exp(xs[c * hw + p] - m);
        for (std::int64_t c = 0; c < s.c; ++c) {
          os[c * hw + p] = static_cast<T>(std::exp(xs[c * hw + p] - m) / z);
        }
      }
    }
  });
  if (detail::needs_grad({&x})) {
    auto xi = Access::impl(x);
    detail::attach(out, {&x}, [xi, s, hw](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = out_grad<T>(o).data();
        const T* y = o.values<T>().data();
        T* gx = grad_target<T>(xi);
        for (std::int64_t n = 0; n < s.n; ++n) {
          const std::int64_t base = n * s.c * hw;
          for (std::int64_t p = 0; p < hw; ++p) {
            double dot = 0.0;
            for (std::int64_t c = 0; c < s.c; ++c) {
              dot += static_cast<double>(g[base + c * hw + p]) * y[base + c * hw + p];
            }
            for (std::int64_t c = 0; c < s.c; ++c) {
              const std::int64_t k = base + c * hw + p;
              gx[k] += static_cast<T>(y[k] * (g[k] - dot));
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = detail::make_tensor(Shape{1, 1, 1, 1}, x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    impl_of(out).values<T>()[0] = static_cast<T>(accumulate(impl_of(x).values<T>()));
  });
  if (detail::needs_grad({&x})) {
    auto xi = Access::impl(x);
    detail::attach(out, {&x}, [xi](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T g = out_grad<T>(o)[0];
        T* gx = grad_target<T>(xi);
        const auto count = static_cast<std::size_t>(xi->shape.numel());
        for (std::size_t i = 0; i < count; ++i) gx[i] += g;
      });
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  require_binary(a, b, "mse_loss");
  if (a.numel() == 0) throw DimensionError("mse_loss: empty tensor");
  const auto count = static_cast<double>(a.numel());
  Tensor out = detail::make_tensor(Shape{1, 1, 1, 1}, a.dtype());
  visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto& av = impl_of(a).values<T>();
    const auto& bv = impl_of(b).values<T>();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = static_cast<double>(av[i]) - bv[i];
      s += d * d;
    }
    impl_of(out).values<T>()[0] = static_cast<T>(s / count);
  });
  if (detail::needs_grad({&a, &b})) {
    auto ai = Access::impl(a), bi = Access::impl(b);
    detail::attach(out, {&a, &b}, [ai, bi, count](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const double g = out_grad<T>(o)[0];
        const auto& av = ai->values<T>();
        const auto& bv = bi->values<T>();
        T* ga = grad_target<T>(ai);
        T* gb = grad_target<T>(bi);
        const double k = 2.0 * g / count;
        for (std::size_t i = 0; i < av.size(); ++i) {
          const double d = k * (static_cast<double>(av[i]) - bv[i]);
          if (ga) ga[i] += static_cast<T>(d);
          if (gb) gb[i] -= static_cast<T>(d);
        }
      });
    });
  }
  return out;
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  require_binary(a, b, "l1_loss");
  if (a.numel() == 0) throw DimensionError("l1_loss: empty tensor");
  const auto count = static_cast<double>(a.numel());
  Tensor out = detail::make_tensor(Shape{1, 1, 1, 1}, a.dtype());
  visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto& av = impl_of(a).values<T>();
    const auto& bv = impl_of(b).values<T>();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += std::fabs(static_cast<double>(av[i]) - bv[i]);
    impl_of(out).values<T>()[0] = static_cast<T>(s / count);
  });
  if (detail::needs_grad({&a, &b})) {
    auto ai = Access::impl(a), bi = Access::impl(b);
    detail::attach(out, {&a, &b}, [ai, bi, count](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const double g = out_grad<T>(o)[0] / count;
        const auto& av = ai->values<T>();
        const auto& bv = bi->values<T>();
        T* ga = grad_target<T>(ai);
        T* gb = grad_target<T>(bi);
        for (std::size_t i = 0; i < av.size(); ++i) {
          const double d = static_cast<double>(av[i]) - bv[i];
          const double sgn = d > 0 ? g : (d < 0 ? -g : 0.0);
          if (ga) ga[i] += static_cast<T>(sgn);
          if (gb) gb[i] -= static_cast<T>(sgn);
        }
      });
    });
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape first = parts.front().shape();
  std::int64_t channels = 0;
  for (const Tensor& p : parts) {
    detail::require_same_dtype(parts.front(), p, "concat_channels");
    const Shape& s = p.shape();
    if (s.n != first.n) throw DimensionError("concat_channels: mismatch on axis N");
    if (s.h != first.h) throw DimensionError("concat_channels: mismatch on axis H");
    if (s.w != first.w) throw DimensionError("concat_channels: mismatch on axis W");
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  const std::int64_t hw = first.plane();
  Tensor out = detail::make_tensor(os, parts.front().dtype());
  visit_dtype(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* ov = impl_of(out).values<T>().data();
    std::int64_t offset = 0;
    for (const Tensor& p : parts) {
      const T* pv = impl_of(p).values<T>().data();
      const std::int64_t pc = p.shape().c;
      for (std::int64_t n = 0; n < os.n; ++n) {
        std::copy_n(pv + n * pc * hw, pc * hw, ov + (n * os.c + offset) * hw);
      }
      offset += pc;
    }
  });
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (any && grad_enabled()) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const Tensor& p : parts) impls.push_back(Access::impl(p));
    detail::attach(out, parts, [impls, os, hw](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = out_grad<T>(o).data();
        std::int64_t offset = 0;
        for (const auto& pi : impls) {
          const std::int64_t pc = pi->shape.c;
          if (T* gp = grad_target<T>(pi)) {
            for (std::int64_t n = 0; n < os.n; ++n) {
              const T* src = g + (n * os.c + offset) * hw;
              T* dst = gp + n * pc * hw;
              for (std::int64_t i = 0; i < pc * hw; ++i) dst[i] += src[i];
            }
          }
          offset += pc;
        }
      });
    });
  }
  return out;
}

Tensor concat_batch(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_batch: no inputs");
  const Shape first = parts.front().shape();
  std::int64_t total = 0;
  for (const Tensor& p : parts) {
    detail::require_same_dtype(parts.front(), p, "concat_batch");
    const Shape& s = p.shape();
    if (s.c != first.c) throw DimensionError("concat_batch: mismatch on axis C");
    if (s.h != first.h) throw DimensionError("concat_batch: mismatch on axis H");
    if (s.w != first.w) throw DimensionError("concat_batch: mismatch on axis W");
    total += s.n;
  }
  const Shape os{total, first.c, first.h, first.w};
  const std::int64_t sample = first.c * first.plane();
  Tensor out = detail::make_tensor(os, parts.front().dtype());
  visit_dtype(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* ov = impl_of(out).values<T>().data();
    std::int64_t offset = 0;
    for (const Tensor& p : parts) {
      const auto& pv = impl_of(p).values<T>();
      std::copy(pv.begin(), pv.end(), ov + offset * sample);
      offset += p.shape().n;
    }
  });
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (any && grad_enabled()) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const Tensor& p : parts) impls.push_back(Access::impl(p));
    detail::attach(out, parts, [impls, sample](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = out_grad<T>(o).data();
        std::int64_t offset = 0;
        for (const auto& pi : impls) {
          const std::int64_t count = pi->shape.n * sample;
          if (T* gp = grad_target<T>(pi)) {
            for (std::int64_t i = 0; i < count; ++i) gp[i] += g[offset * sample + i];
          }
          offset += pi->shape.n;
        }
      });
    });
  }
  return out;
}

Tensor slice_batch(const Tensor& x, std::int64_t begin, std::int64_t end) {
  const Shape s = x.shape();
  if (begin < 0 || end > s.n || begin >= end) {
    throw DimensionError("slice_batch: invalid range on axis N for shape " + s.str());
  }
  const Shape os{end - begin, s.c, s.h, s.w};
  const std::int64_t sample = s.c * s.plane();
  Tensor out = detail::make_tensor(os, x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = impl_of(x).values<T>().data();
    std::copy_n(xv + begin * sample, os.n * sample, impl_of(out).values<T>().data());
  });
  if (detail::needs_grad({&x})) {
    auto xi = Access::impl(x);
    detail::attach(out, {&x}, [xi, begin, sample](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const auto& g = out_grad<T>(o);
        T* gx = grad_target<T>(xi) + begin * sample;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      });
    });
  }
  return out;
}

Tensor pad2d(const Tensor& x, std::int64_t top, std::int64_t bottom,
             std::int64_t left, std::int64_t right) {
  if (top < 0 || bottom < 0 || left < 0 || right < 0) {
    throw DimensionError("pad2d: negative padding");
  }
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h + top + bottom, s.w + left + right};
  Tensor out = detail::make_tensor(os, x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = impl_of(x).values<T>().data();
    T* ov = impl_of(out).values<T>().data();
    for (std::int64_t p = 0; p < s.n * s.c; ++p) {
      for (std::int64_t y = 0; y < s.h; ++y) {
        std::copy_n(xv + (p * s.h + y) * s.w, s.w, ov + (p * os.h + y + top) * os.w + left);
      }
    }
  });
  if (detail::needs_grad({&x})) {
    auto xi = Access::impl(x);
    detail::attach(out, {&x}, [xi, s, os, top, left](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = out_grad<T>(o).data();
        T* gx = grad_target<T>(xi);
        for (std::int64_t p = 0; p < s.n * s.c; ++p) {
          for (std::int64_t y = 0; y < s.h; ++y) {
            const T* src = g + (p * os.h + y + top) * os.w + left;
            T* dst = gx + (p * s.h + y) * s.w;
            for (std::int64_t x0 = 0; x0 < s.w; ++x0) dst[x0] += src[x0];
          }
        }
      });
    });
  }
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  detail::require_same_dtype(x, bias, "add_channel_bias");
  const Shape s = x.shape();
  if (bias.shape() != Shape{1, s.c, 1, 1}) {
    throw DimensionError("add_channel_bias: bias shape " + bias.shape().str() +
                         " does not match axis C of " + s.str());
  }
  const std::int64_t hw = s.plane();
  Tensor out = detail::make_tensor(s, x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = impl_of(x).values<T>().data();
    const T* bv = impl_of(bias).values<T>().data();
    T* ov = impl_of(out).values<T>().data();
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c)
        for (std::int64_t i = 0; i < hw; ++i) {
          const std::int64_t k = (n * s.c + c) * hw + i;
          ov[k] = xv[k] + bv[c];
        }
  });
  if (detail::needs_grad({&x, &bias})) {
    auto xi = Access::impl(x), bi = Access::impl(bias);
    detail::attach(out, {&x, &bias}, [xi, bi, s, hw](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = out_grad<T>(o).data();
        if (T* gx = grad_target<T>(xi)) {
          for (std::int64_t i = 0; i < s.numel(); ++i) gx[i] += g[i];
        }
        if (T* gb = grad_target<T>(bi)) {
          for (std::int64_t c = 0; c < s.c; ++c) {
            double acc = 0.0;
            for (std::int64_t n = 0; n < s.n; ++n)
              for (std::int64_t i = 0; i < hw; ++i) acc += g[(n * s.c + c) * hw + i];
            gb[c] += static_cast<T>(acc);
          }
        }
      });
    });
  }
  return out;
}

LabelMap argmax_channel(const Tensor& x) {
  const Shape s = x.shape();
  if (s.c > 255) throw DimensionError("argmax_channel: at most 255 channels on axis C");
  LabelMap out(s.n, s.h, s.w);
  const std::int64_t hw = s.plane();
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = impl_of(x).values<T>().data();
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t p = 0; p < hw; ++p) {
        std::int64_t best = 0;
        T best_v = xv[n * s.c * hw + p];
        for (std::int64_t c = 1; c < s.c; ++c) {
          const T v = xv[(n * s.c + c) * hw + p];
          if (v > best_v) {
            best_v = v;
            best = c;
          }
        }
        out.values[static_cast<std::size_t>(n * hw + p)] = static_cast<std::uint8_t>(best);
      }
  });
  return out;
}

Tensor cross_entropy_2d(const Tensor& logits, const LabelMap& labels, int ignore_index) {
  const Shape s = logits.shape();
  if (labels.n != s.n) throw DimensionError("cross_entropy_2d: label/logit mismatch on axis N");
  if (labels.h != s.h) throw DimensionError("cross_entropy_2d: label/logit mismatch on axis H");
  if (labels.w != s.w) throw DimensionError("cross_entropy_2d: label/logit mismatch on axis W");
  std::int64_t valid = 0;
  for (std::uint8_t v : labels.values) {
    if (static_cast<int>(v) == ignore_index) continue;
    if (v >= s.c) {
      throw ValidationError("cross_entropy_2d: label " + std::to_string(v) +
                            " outside [0, " + std::to_string(s.c - 1) + "]");
    }
    ++valid;
  }
  if (valid == 0) throw ValidationError("cross_entropy_2d: every pixel is ignored");

  const std::int64_t hw = s.plane();
  Tensor out = detail::make_tensor(Shape{1, 1, 1, 1}, logits.dtype());
  visit_dtype(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = impl_of(logits).values<T>().data();
    double total = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t p = 0; p < hw; ++p) {
        const int label = labels.values[static_cast<std::size_t>(n * hw + p)];
        if (label == ignore_index) continue;
        const T* px = xv + n * s.c * hw + p;
        double m = -std::numeric_limits<double>::infinity();
        for (std::int64_t c = 0; c < s.c; ++c) m = std::max(m, static_cast<double>(px[c * hw]));
        double z = 0.0;
        for (std::int64_t c = 0; c < s.c; ++c) z += std::exp(px[c * hw] - m);
        total += (m + std::log(z)) - px[label * hw];
      }
    impl_of(out).values<T>()[0] = static_cast<T>(total / static_cast<double>(valid));
  });
  if (detail::needs_grad({&logits})) {
    auto xi = Access::impl(logits);
    detail::attach(out, {&logits}, [xi, labels, s, hw, valid, ignore_index](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const double g = out_grad<T>(o)[0] / static_cast<double>(valid);
        const T* xv = xi->values<T>().data();
        T* gx = grad_target<T>(xi);
        for (std::int64_t n = 0; n < s.n; ++n)
          for (std::int64_t p = 0; p < hw; ++p) {
            const int label = labels.values[static_cast<std::size_t>(n * hw + p)];
            if (label == ignore_index) continue;
            const std::int64_t base = n * s.c * hw + p;
            double m = -std::numeric_limits<double>::infinity();
            for (std::int64_t c = 0; c < s.c; ++c) m = std::max(m, static_cast<double>(xv[base + c * hw]));
            double z = 0.0;
            for (std::int64_t c = 0; c < s.c; ++c) z += std::exp(xv[base + c * hw] - m);
            for (std::int64_t c = 0; c < s.c; ++c) {
              const double prob = std::exp(xv[base + c * hw] - m) / z;
              gx[base + c * hw] += static_cast<T>(g * (prob - (c == label ? 1.0 : 0.0)));
            }
          }
      });
    });
  }
  return out;
}

}  // namespace srda
