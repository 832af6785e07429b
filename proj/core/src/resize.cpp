#include <algorithm>
#include <cmath>
#include <string>

#include "srda/ops.hpp"
#include "tensor_impl.hpp"

namespace srda {

using detail::Access;
using detail::grad_target;
using detail::impl_of;
using detail::out_grad;
using detail::TensorImpl;
using detail::visit_dtype;

namespace {

// Interpolation taps for one output coordinate. The first tap is the anchor:
//   out = x[anchor] + sum_{j >= 1} w_j * (x[j] - x[anchor]),
// which reproduces constant inputs exactly. weights[0] holds the anchor's
// effective weight 1 - sum_{j >= 1} w_j for the adjoint.
struct Taps {
  std::vector<std::int64_t> index;
  std::vector<double> weight;
};

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

std::vector<Taps> axis_taps(std::int64_t in, std::int64_t out, ResizeMode mode) {
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  auto clamp = [in](std::int64_t i) { return std::clamp<std::int64_t>(i, 0, in - 1); };
  for (std::int64_t o = 0; o < out; ++o) {
    Taps& t = taps[static_cast<std::size_t>(o)];
    switch (mode) {
      case ResizeMode::kNearest: {
        const auto src = static_cast<std::int64_t>(std::floor((static_cast<double>(o) + 0.5) * scale));
        t.index = {clamp(src)};
        t.weight = {1.0};
        break;
      }
      case ResizeMode::kBilinear: {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        const auto i0 = static_cast<std::int64_t>(std::floor(src));
        const double l = src - static_cast<double>(i0);
        t.index = {clamp(i0), clamp(i0 + 1)};
        t.weight = {1.0 - l, l};
        break;
      }
      case ResizeMode::kBicubic: {
        const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        const auto i0 = static_cast<std::int64_t>(std::floor(src));
        const double f = src - static_cast<double>(i0);
        // Anchor at the nearest of the two central taps.
        const std::int64_t order[4] = {f < 0.5 ? 0 : 1, f < 0.5 ? 1 : 0, -1, 2};
        double rest = 0.0;
        for (int k = 0; k < 4; ++k) {
          const std::int64_t d = order[k];
          const double w = cubic_weight(f - static_cast<double>(d));
          t.index.push_back(clamp(i0 + d));
          t.weight.push_back(w);
          if (k > 0) rest += w;
        }
        t.weight[0] = 1.0 - rest;
        break;
      }
    }
  }
  return taps;
}

// Resample along the fastest axis: src rows of length in_len -> dst rows of
// length taps.size(); rows_count rows, element stride 1.
template <typename T>
void resample_rows(const T* src, std::int64_t rows, std::int64_t in_len,
                   const std::vector<Taps>& taps, T* dst) {
  const auto out_len = static_cast<std::int64_t>(taps.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* s = src + r * in_len;
    T* d = dst + r * out_len;
    for (std::int64_t o = 0; o < out_len; ++o) {
      const Taps& t = taps[static_cast<std::size_t>(o)];
      const T anchor = s[t.index[0]];
      T acc = anchor;
      for (std::size_t j = 1; j < t.index.size(); ++j) {
        acc += static_cast<T>(t.weight[j]) * (s[t.index[j]] - anchor);
      }
      d[o] = acc;
    }
  }
}

// Resample along H for planes of width w.
template <typename T>
void resample_cols(const T* src, std::int64_t planes, std::int64_t in_h, std::int64_t w,
                   const std::vector<Taps>& taps, T* dst) {
  const auto out_h = static_cast<std::int64_t>(taps.size());
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* s = src + p * in_h * w;
    T* d = dst + p * out_h * w;
    for (std::int64_t o = 0; o < out_h; ++o) {
      const Taps& t = taps[static_cast<std::size_t>(o)];
      const T* a = s + t.index[0] * w;
      T* drow = d + o * w;
      std::copy_n(a, w, drow);
      for (std::size_t j = 1; j < t.index.size(); ++j) {
        const T wt = static_cast<T>(t.weight[j]);
        const T* b = s + t.index[j] * w;
        for (std::int64_t x = 0; x < w; ++x) drow[x] += wt * (b[x] - a[x]);
      }
    }
  }
}

// Adjoints with the effective weights.
template <typename T>
void resample_rows_adjoint(const T* g, std::int64_t rows, std::int64_t in_len,
                           const std::vector<Taps>& taps, T* gsrc) {
  const auto out_len = static_cast<std::int64_t>(taps.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* gr = g + r * out_len;
    T* s = gsrc + r * in_len;
    for (std::int64_t o = 0; o < out_len; ++o) {
      const Taps& t = taps[static_cast<std::size_t>(o)];
      for (std::size_t j = 0; j < t.index.size(); ++j) s[t.index[j]] += static_cast<T>(t.weight[j]) * gr[o];
    }
  }
}

template <typename T>
void resample_cols_adjoint(const T* g, std::int64_t planes, std::int64_t in_h, std::int64_t w,
                           const std::vector<Taps>& taps, T* gsrc) {
  const auto out_h = static_cast<std::int64_t>(taps.size());
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* gp = g + p * out_h * w;
    T* s = gsrc + p * in_h * w;
    for (std::int64_t o = 0; o < out_h; ++o) {
      const Taps& t = taps[static_cast<std::size_t>(o)];
      for (std::size_t j = 0; j < t.index.size(); ++j) {
        const T wt = static_cast<T>(t.weight[j]);
        T* dst = s + t.index[j] * w;
        const T* src = gp + o * w;
        for (std::int64_t x = 0; x < w; ++x) dst[x] += wt * src[x];
      }
    }
  }
}

}  // namespace

Tensor resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w, ResizeMode mode) {
  const Shape s = x.shape();
  if (out_h < 1 || out_w < 1) {
    throw DimensionError("resize: output extent must be >= 1, got " + std::to_string(out_h) +
                         "x" + std::to_string(out_w));
  }
  if (s.h < 1 || s.w < 1) throw DimensionError("resize: empty input " + s.str());
  if (out_h == s.h && out_w == s.w) {
    // Identity resampling; keep the graph connected through a cheap op.
    return scale(x, 1.0);
  }
  const auto taps_w = axis_taps(s.w, out_w, mode);
  const auto taps_h = axis_taps(s.h, out_h, mode);
  const std::int64_t planes = s.n * s.c;
  Tensor out = detail::make_tensor(Shape{s.n, s.c, out_h, out_w}, x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> tmp(static_cast<std::size_t>(planes * s.h * out_w));
    resample_rows(impl_of(x).values<T>().data(), planes * s.h, s.w, taps_w, tmp.data());
    resample_cols(tmp.data(), planes, s.h, out_w, taps_h, impl_of(out).values<T>().data());
  });
  if (detail::needs_grad({&x})) {
    auto xi = Access::impl(x);
    detail::attach(out, {&x}, [xi, s, planes, out_w, taps_w, taps_h](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        std::vector<T> tmp(static_cast<std::size_t>(planes * s.h * out_w), T(0));
        resample_cols_adjoint(out_grad<T>(o).data(), planes, s.h, out_w, taps_h, tmp.data());
        resample_rows_adjoint(tmp.data(), planes * s.h, s.w, taps_w, grad_target<T>(xi));
      });
    });
  }
  return out;
}

LabelMap resize_labels(const LabelMap& labels, std::int64_t out_h, std::int64_t out_w) {
  if (out_h < 1 || out_w < 1) throw DimensionError("resize_labels: output extent must be >= 1");
  const auto taps_w = axis_taps(labels.w, out_w, ResizeMode::kNearest);
  const auto taps_h = axis_taps(labels.h, out_h, ResizeMode::kNearest);
  LabelMap out(labels.n, out_h, out_w);
  for (std::int64_t n = 0; n < labels.n; ++n)
    for (std::int64_t y = 0; y < out_h; ++y)
      for (std::int64_t x = 0; x < out_w; ++x) {
        out.at(n, y, x) = labels.at(n, taps_h[static_cast<std::size_t>(y)].index[0],
                                    taps_w[static_cast<std::size_t>(x)].index[0]);
      }
  return out;
}

}  // namespace srda
