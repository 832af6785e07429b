#include <Eigen/Core>
#include <algorithm>
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

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Sliding-window geometry relating an image plane to a grid of kernel
// positions.
struct Geometry {
  std::int64_t channels;
  std::int64_t in_h, in_w;
  std::int64_t k_h, k_w;
  std::int64_t out_h, out_w;
  std::int64_t stride, padding, dilation;

  std::int64_t rows() const { return channels * k_h * k_w; }
  std::int64_t positions() const { return out_h * out_w; }
};

// Range of output columns [lo, hi) whose input column ow*stride + offset is
// inside [0, in_w).
inline void valid_range(std::int64_t offset, const Geometry& g, std::int64_t& lo, std::int64_t& hi) {
  lo = offset >= 0 ? 0 : (-offset + g.stride - 1) / g.stride;
  hi = offset >= g.in_w ? 0 : (g.in_w - 1 - offset) / g.stride + 1;
  hi = std::min(hi, g.out_w);
  lo = std::min(lo, hi);
}

// cols[(c*kh + i)*kw + j][p] = image[c][ih][iw] or 0 outside, for one sample;
// ld is the distance between rows of cols.
template <typename T>
void im2col(const T* image, const Geometry& g, T* cols, std::int64_t ld) {
  const std::int64_t P = ld;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.in_h * g.in_w;
    for (std::int64_t ki = 0; ki < g.k_h; ++ki)
      for (std::int64_t kj = 0; kj < g.k_w; ++kj) {
        T* dst = cols + ((c * g.k_h + ki) * g.k_w + kj) * P;
        const std::int64_t offset = kj * g.dilation - g.padding;
        std::int64_t lo, hi;
        valid_range(offset, g, lo, hi);
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t ih = oh * g.stride - g.padding + ki * g.dilation;
          T* drow = dst + oh * g.out_w;
          if (ih < 0 || ih >= g.in_h) {
            std::fill_n(drow, g.out_w, T(0));
            continue;
          }
          const T* srow = plane + ih * g.in_w + offset;
          std::fill_n(drow, lo, T(0));
          if (g.stride == 1) {
            std::copy(srow + lo, srow + hi, drow + lo);
          } else {
            for (std::int64_t ow = lo; ow < hi; ++ow) drow[ow] = srow[ow * g.stride];
          }
          std::fill(drow + hi, drow + g.out_w, T(0));
        }
      }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
template <typename T>
void col2im(const T* cols, const Geometry& g, T* image, std::int64_t ld) {
  const std::int64_t P = ld;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.in_h * g.in_w;
    for (std::int64_t ki = 0; ki < g.k_h; ++ki)
      for (std::int64_t kj = 0; kj < g.k_w; ++kj) {
        const T* src = cols + ((c * g.k_h + ki) * g.k_w + kj) * P;
        const std::int64_t offset = kj * g.dilation - g.padding;
        std::int64_t lo, hi;
        valid_range(offset, g, lo, hi);
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t ih = oh * g.stride - g.padding + ki * g.dilation;
          if (ih < 0 || ih >= g.in_h) continue;
          T* drow = plane + ih * g.in_w + offset;
          const T* srow = src + oh * g.out_w;
          if (g.stride == 1) {
            for (std::int64_t ow = lo; ow < hi; ++ow) drow[ow] += srow[ow];
          } else {
            for (std::int64_t ow = lo; ow < hi; ++ow) drow[ow * g.stride] += srow[ow];
          }
        }
      }
  }
}

// (N, C, P) <-> (C, N*P) layout changes.
template <typename T>
void nchw_to_cn(const T* src, std::int64_t n, std::int64_t c, std::int64_t p, T* dst) {
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) std::copy_n(src + (i * c + j) * p, p, dst + j * n * p + i * p);
}

template <typename T>
void cn_to_nchw_add(const T* src, std::int64_t n, std::int64_t c, std::int64_t p, T* dst) {
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      const T* s = src + j * n * p + i * p;
      T* d = dst + (i * c + j) * p;
      for (std::int64_t k = 0; k < p; ++k) d[k] += s[k];
    }
}

// Samples per GEMM: small planes are grouped so the product stays wide, large
// ones run one at a time to keep the column buffer in cache.
std::int64_t group_size(std::int64_t batch, std::int64_t positions) {
  constexpr std::int64_t kMinColumns = 1024;
  return std::clamp<std::int64_t>((kMinColumns + positions - 1) / positions, 1, batch);
}

// View of samples [n0, n0 + m) of an (N, C, P) array as a (C, m*P) matrix;
// copies into buf unless m == 1.
template <typename T>
const T* gather(const T* src, std::int64_t n0, std::int64_t m, std::int64_t c, std::int64_t p,
                detail::Storage<T>& buf) {
  if (m == 1) return src + n0 * c * p;
  buf.resize(static_cast<std::size_t>(c * m * p));
  nchw_to_cn(src + n0 * c * p, m, c, p, buf.data());
  return buf.data();
}

bool is_pointwise(const Geometry& g) {
  return g.k_h == 1 && g.k_w == 1 && g.stride == 1 && g.padding == 0 && g.in_h == g.out_h &&
         g.in_w == g.out_w;
}

void check_bias(const std::optional<Tensor>& bias, std::int64_t channels, const char* op) {
  if (bias && bias->shape() != Shape{1, channels, 1, 1}) {
    throw DimensionError(std::string(op) + ": bias shape " + bias->shape().str() +
                         " does not match output axis C = " + std::to_string(channels));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias,
              const Conv2dOptions& opts) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  detail::require_same_dtype(x, weight, "conv2d");
  if (bias) detail::require_same_dtype(x, *bias, "conv2d");
  if (ws.c != xs.c) {
    throw DimensionError("conv2d: input axis C = " + std::to_string(xs.c) +
                         " but weight expects " + std::to_string(ws.c));
  }
  if (opts.stride < 1 || opts.dilation < 1 || opts.padding < 0) {
    throw DimensionError("conv2d: stride and dilation must be >= 1, padding >= 0");
  }
  check_bias(bias, ws.n, "conv2d");
  const std::int64_t span_h = opts.dilation * (ws.h - 1) + 1;
  const std::int64_t span_w = opts.dilation * (ws.w - 1) + 1;
  const std::int64_t oh = (xs.h + 2 * opts.padding - span_h) / opts.stride + 1;
  const std::int64_t ow = (xs.w + 2 * opts.padding - span_w) / opts.stride + 1;
  if (xs.h + 2 * opts.padding < span_h || oh < 1) {
    throw DimensionError("conv2d: kernel exceeds padded input on axis H " + xs.str());
  }
  if (xs.w + 2 * opts.padding < span_w || ow < 1) {
    throw DimensionError("conv2d: kernel exceeds padded input on axis W " + xs.str());
  }

  const Geometry g{xs.c, xs.h, xs.w, ws.h, ws.w, oh, ow, opts.stride, opts.padding, opts.dilation};
  const std::int64_t N = xs.n, Cout = ws.n, K = g.rows(), P = g.positions();
  Tensor out = detail::make_tensor(Shape{N, Cout, oh, ow}, x.dtype());

  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = impl_of(x).values<T>().data();
    T* ov = impl_of(out).values<T>().data();
    ConstMatrixMap<T> W(impl_of(weight).values<T>().data(), Cout, K);
    const bool pointwise = is_pointwise(g);
    const std::int64_t in_size = xs.c * xs.h * xs.w, gs = group_size(N, P);
    detail::Storage<T> cols, res;
    for (std::int64_t n0 = 0; n0 < N; n0 += gs) {
      const std::int64_t m = std::min(gs, N - n0);
      const T* c = nullptr;
      if (pointwise) {
        c = gather(xv, n0, m, K, P, cols);
      } else {
        cols.resize(static_cast<std::size_t>(K * m * P));
        for (std::int64_t i = 0; i < m; ++i) im2col(xv + (n0 + i) * in_size, g, cols.data() + i * P, m * P);
        c = cols.data();
      }
      if (m > 1) res.resize(static_cast<std::size_t>(Cout * m * P));
      MatrixMap<T> r(m == 1 ? ov + n0 * Cout * P : res.data(), Cout, m * P);
      r.noalias() = W * ConstMatrixMap<T>(c, K, m * P);
      if (bias) r.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(
                    impl_of(*bias).values<T>().data(), Cout);
      if (m > 1) cn_to_nchw_add(res.data(), m, Cout, P, ov + n0 * Cout * P);
    }
  });

  if (detail::needs_grad({&x, &weight, bias ? &*bias : nullptr})) {
    auto xi = Access::impl(x), wi = Access::impl(weight);
    std::shared_ptr<TensorImpl> bi = bias ? Access::impl(*bias) : nullptr;
    detail::attach(out, {&x, &weight, bias ? &*bias : nullptr},
                   [xi, wi, bi, g, N, Cout, K, P](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        T* gb = grad_target<T>(bi);
        T* gw = grad_target<T>(wi);
        T* gx = grad_target<T>(xi);
        const T* gout = out_grad<T>(o).data();
        const T* xv = xi->values<T>().data();
        ConstMatrixMap<T> W(wi->values<T>().data(), Cout, K);
        const bool pointwise = is_pointwise(g);
        const std::int64_t in_size = g.channels * g.in_h * g.in_w, gs = group_size(N, P);
        detail::Storage<T> gbuf, cols;
        for (std::int64_t n0 = 0; n0 < N; n0 += gs) {
          const std::int64_t m = std::min(gs, N - n0);
          ConstMatrixMap<T> G(gather(gout, n0, m, Cout, P, gbuf), Cout, m * P);
          if (gb) Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(gb, Cout) += G.rowwise().sum();
          if (gw) {
            const T* c = nullptr;
            if (pointwise) {
              c = gather(xv, n0, m, K, P, cols);
            } else {
              cols.resize(static_cast<std::size_t>(K * m * P));
              for (std::int64_t i = 0; i < m; ++i) im2col(xv + (n0 + i) * in_size, g, cols.data() + i * P, m * P);
              c = cols.data();
            }
            MatrixMap<T>(gw, Cout, K).noalias() += G * ConstMatrixMap<T>(c, K, m * P).transpose();
          }
          if (gx) {
            if (pointwise && m == 1) {
              MatrixMap<T>(gx + n0 * in_size, K, P).noalias() += W.transpose() * G;
              continue;
            }
            cols.resize(static_cast<std::size_t>(K * m * P));
            MatrixMap<T>(cols.data(), K, m * P).noalias() = W.transpose() * G;
            if (pointwise) {
              cn_to_nchw_add(cols.data(), m, K, P, gx + n0 * in_size);
            } else {
              for (std::int64_t i = 0; i < m; ++i) col2im(cols.data() + i * P, g, gx + (n0 + i) * in_size, m * P);
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias,
                        std::int64_t stride, std::int64_t padding) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  detail::require_same_dtype(x, weight, "conv_transpose2d");
  if (bias) detail::require_same_dtype(x, *bias, "conv_transpose2d");
  if (ws.n != xs.c) {
    throw DimensionError("conv_transpose2d: input axis C = " + std::to_string(xs.c) +
                         " but weight expects " + std::to_string(ws.n));
  }
  if (stride < 1 || padding < 0) {
    throw DimensionError("conv_transpose2d: stride must be >= 1, padding >= 0");
  }
  const std::int64_t Cout = ws.c;
  check_bias(bias, Cout, "conv_transpose2d");
  const std::int64_t oh = (xs.h - 1) * stride - 2 * padding + ws.h;
  const std::int64_t ow = (xs.w - 1) * stride - 2 * padding + ws.w;
  if (oh < 1) throw DimensionError("conv_transpose2d: empty output on axis H");
  if (ow < 1) throw DimensionError("conv_transpose2d: empty output on axis W");

  // The output plane plays the role of the image in conv geometry.
  const Geometry g{Cout, oh, ow, ws.h, ws.w, xs.h, xs.w, stride, padding, 1};
  const std::int64_t N = xs.n, Cin = xs.c, K = g.rows(), P = g.positions();
  Tensor out = detail::make_tensor(Shape{N, Cout, oh, ow}, x.dtype());

  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = impl_of(x).values<T>().data();
    T* ov = impl_of(out).values<T>().data();
    ConstMatrixMap<T> W(impl_of(weight).values<T>().data(), Cin, K);
    const std::int64_t hw = oh * ow, gs = group_size(N, P);
    detail::Storage<T> xbuf, cols;
    for (std::int64_t n0 = 0; n0 < N; n0 += gs) {
      const std::int64_t m = std::min(gs, N - n0);
      cols.resize(static_cast<std::size_t>(K * m * P));
      MatrixMap<T>(cols.data(), K, m * P).noalias() =
          W.transpose() * ConstMatrixMap<T>(gather(xv, n0, m, Cin, P, xbuf), Cin, m * P);
      for (std::int64_t i = 0; i < m; ++i) col2im(cols.data() + i * P, g, ov + (n0 + i) * Cout * hw, m * P);
    }
    if (bias) {
      const T* bv = impl_of(*bias).values<T>().data();
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < Cout; ++c) {
          T* plane = ov + (n * Cout + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) plane[i] += bv[c];
        }
    }
  });

  if (detail::needs_grad({&x, &weight, bias ? &*bias : nullptr})) {
    auto xi = Access::impl(x), wi = Access::impl(weight);
    std::shared_ptr<TensorImpl> bi = bias ? Access::impl(*bias) : nullptr;
    detail::attach(out, {&x, &weight, bias ? &*bias : nullptr},
                   [xi, wi, bi, g, N, Cin, Cout, K, P](TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* gout = out_grad<T>(o).data();
        const std::int64_t hw = g.in_h * g.in_w;
        if (T* gb = grad_target<T>(bi)) {
          for (std::int64_t c = 0; c < Cout; ++c) {
            T acc = 0;
            for (std::int64_t n = 0; n < N; ++n) {
              const T* plane = gout + (n * Cout + c) * hw;
              for (std::int64_t i = 0; i < hw; ++i) acc += plane[i];
            }
            gb[c] += acc;
          }
        }
        T* gw = grad_target<T>(wi);
        T* gx = grad_target<T>(xi);
        if (!gw && !gx) return;
        const T* xv = xi->values<T>().data();
        ConstMatrixMap<T> W(wi->values<T>().data(), Cin, K);
        const std::int64_t gs = group_size(N, P);
        detail::Storage<T> dcols, xbuf, dx;
        for (std::int64_t n0 = 0; n0 < N; n0 += gs) {
          const std::int64_t m = std::min(gs, N - n0);
          dcols.resize(static_cast<std::size_t>(K * m * P));
          for (std::int64_t i = 0; i < m; ++i) im2col(gout + (n0 + i) * Cout * hw, g, dcols.data() + i * P, m * P);
          ConstMatrixMap<T> D(dcols.data(), K, m * P);
          if (gw) {
            MatrixMap<T>(gw, Cin, K).noalias() +=
                ConstMatrixMap<T>(gather(xv, n0, m, Cin, P, xbuf), Cin, m * P) * D.transpose();
          }
          if (gx) {
            if (m == 1) {
              MatrixMap<T>(gx + n0 * Cin * P, Cin, P).noalias() += W * D;
            } else {
              dx.resize(static_cast<std::size_t>(Cin * m * P));
              MatrixMap<T>(dx.data(), Cin, m * P).noalias() = W * D;
              cn_to_nchw_add(dx.data(), m, Cin, P, gx + n0 * Cin * P);
            }
          }
        }
      });
    });
  }
  return out;
}

}  // namespace srda
