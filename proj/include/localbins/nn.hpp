#pragma once

// Layer primitives on NCHW tensors plus the flat [B,C] variants the
// query path needs. Dense contractions go through Eigen.

#include <Eigen/Dense>

#include "localbins/tensor.hpp"

namespace localbins {

namespace detail {
template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapRM = Eigen::Map<MatRM<S>>;
template <class S>
using CMapRM = Eigen::Map<const MatRM<S>>;
}  // namespace detail

// ---------------------------------------------------------------------------
// channel-linear layer: works on [B,Cin] rows or [N,Cin,H,W] maps.
// w: [Cout,Cin] row-major, b: [Cout].

template <class S>
TensorT<S> linear_channels(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  if (w.rank() != 2) throw std::invalid_argument("linear_channels: weight must be rank 2");
  const std::int64_t cout = w.dim(0), cin = w.dim(1);
  if (b.size() != cout) throw std::invalid_argument("linear_channels: bias length mismatch");

  TensorT<S> out;
  if (x.rank() == 2) {
    if (x.dim(1) != cin)
      throw std::invalid_argument("linear_channels: channel mismatch, input " +
                                  shape_str(x.shape()) + " weight " + shape_str(w.shape()));
    const std::int64_t rows = x.dim(0);
    out = TensorT<S>({rows, cout});
    detail::CMapRM<S> X(x.data(), rows, cin), W(w.data(), cout, cin);
    detail::MapRM<S> Y(out.data(), rows, cout);
    Y.noalias() = X * W.transpose();
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < cout; ++c) out.data()[r * cout + c] += b.data()[c];
  } else if (x.rank() == 4) {
    if (x.dim(1) != cin)
      throw std::invalid_argument("linear_channels: channel mismatch, input " +
                                  shape_str(x.shape()) + " weight " + shape_str(w.shape()));
    const std::int64_t n = x.dim(0), h = x.dim(2), ww = x.dim(3), hw = h * ww;
    out = TensorT<S>({n, cout, h, ww});
    detail::CMapRM<S> W(w.data(), cout, cin);
    for (std::int64_t s = 0; s < n; ++s) {
      detail::CMapRM<S> X(x.data() + s * cin * hw, cin, hw);
      detail::MapRM<S> Y(out.data() + s * cout * hw, cout, hw);
      Y.noalias() = W * X;
      for (std::int64_t c = 0; c < cout; ++c)
        for (std::int64_t p = 0; p < hw; ++p) Y(c, p) += b.data()[c];
    }
  } else {
    throw std::invalid_argument("linear_channels: input must be rank 2 or 4");
  }
  detail::ensure_finite(out, "linear_channels");

  if (detail::any_tracked<S>({&x, &w, &b})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&x, &w, &b}, [x, w, b, out, cout, cin]() mutable {
      if (x.rank() == 2) {
        const std::int64_t rows = x.dim(0);
        detail::CMapRM<S> X(x.data(), rows, cin), W(w.data(), cout, cin),
            GY(out.grad().data(), rows, cout);
        if (x.tracked()) {
          detail::MapRM<S> GX(x.grad().data(), rows, cin);
          GX.noalias() += GY * W;
        }
        if (w.tracked()) {
          detail::MapRM<S> GW(w.grad().data(), cout, cin);
          GW.noalias() += GY.transpose() * X;
        }
        if (b.tracked())
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cout; ++c) b.grad()[c] += GY(r, c);
      } else {
        const std::int64_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
        detail::CMapRM<S> W(w.data(), cout, cin);
        for (std::int64_t s = 0; s < n; ++s) {
          detail::CMapRM<S> X(x.data() + s * cin * hw, cin, hw),
              GY(out.grad().data() + s * cout * hw, cout, hw);
          if (x.tracked()) {
            detail::MapRM<S> GX(x.grad().data() + s * cin * hw, cin, hw);
            GX.noalias() += W.transpose() * GY;
          }
          if (w.tracked()) {
            detail::MapRM<S> GW(w.grad().data(), cout, cin);
            GW.noalias() += GY * X.transpose();
          }
          if (b.tracked())
            for (std::int64_t c = 0; c < cout; ++c)
              for (std::int64_t p = 0; p < hw; ++p) b.grad()[c] += GY(c, p);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, kernel [Cout,Cin,kh,kw], odd kernels.

namespace detail {
template <class S>
void im2col(const S* src, std::int64_t cin, std::int64_t h, std::int64_t w,
            std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad,
            std::int64_t ho, std::int64_t wo, S* col) {
  // col layout: [cin*kh*kw, ho*wo]
  for (std::int64_t c = 0; c < cin; ++c)
    for (std::int64_t ki = 0; ki < kh; ++ki)
      for (std::int64_t kj = 0; kj < kw; ++kj) {
        S* row = col + ((c * kh + ki) * kw + kj) * ho * wo;
        for (std::int64_t i = 0; i < ho; ++i) {
          std::int64_t y = i * stride + ki - pad;
          for (std::int64_t j = 0; j < wo; ++j) {
            std::int64_t x = j * stride + kj - pad;
            row[i * wo + j] = (y >= 0 && y < h && x >= 0 && x < w)
                                  ? src[(c * h + y) * w + x]
                                  : S(0);
          }
        }
      }
}

template <class S>
void col2im_add(const S* col, std::int64_t cin, std::int64_t h, std::int64_t w,
                std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad,
                std::int64_t ho, std::int64_t wo, S* dst) {
  for (std::int64_t c = 0; c < cin; ++c)
    for (std::int64_t ki = 0; ki < kh; ++ki)
      for (std::int64_t kj = 0; kj < kw; ++kj) {
        const S* row = col + ((c * kh + ki) * kw + kj) * ho * wo;
        for (std::int64_t i = 0; i < ho; ++i) {
          std::int64_t y = i * stride + ki - pad;
          if (y < 0 || y >= h) continue;
          for (std::int64_t j = 0; j < wo; ++j) {
            std::int64_t x = j * stride + kj - pad;
            if (x >= 0 && x < w) dst[(c * h + y) * w + x] += row[i * wo + j];
          }
        }
      }
}
}  // namespace detail

template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& k, int stride, int padding) {
  if (x.rank() != 4 || k.rank() != 4)
    throw std::invalid_argument("conv2d: input and kernel must be rank 4");
  const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != cin)
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(x.shape()) +
                                " kernel " + shape_str(k.shape()));
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel extents must be odd");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  const std::int64_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::int64_t wo = (w + 2 * padding - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: non-positive output extent");

  TensorT<S> out({n, cout, ho, wo});
  const std::int64_t kdim = cin * kh * kw;
  std::vector<S> col(static_cast<std::size_t>(kdim * ho * wo));
  detail::CMapRM<S> K(k.data(), cout, kdim);
  for (std::int64_t s = 0; s < n; ++s) {
    detail::im2col(x.data() + s * cin * h * w, cin, h, w, kh, kw, stride, padding, ho, wo,
                   col.data());
    detail::CMapRM<S> C(col.data(), kdim, ho * wo);
    detail::MapRM<S> Y(out.data() + s * cout * ho * wo, cout, ho * wo);
    Y.noalias() = K * C;
  }
  detail::ensure_finite(out, "conv2d");

  if (detail::any_tracked<S>({&x, &k})) {
    int st = stride, pd = padding;
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&x, &k}, [x, k, out, st, pd]() mutable {
      const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
      const std::int64_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
      const std::int64_t ho = out.dim(2), wo = out.dim(3);
      const std::int64_t kdim = cin * kh * kw;
      std::vector<S> col(static_cast<std::size_t>(kdim * ho * wo));
      detail::CMapRM<S> K(k.data(), cout, kdim);
      for (std::int64_t s = 0; s < n; ++s) {
        detail::CMapRM<S> GY(out.grad().data() + s * cout * ho * wo, cout, ho * wo);
        if (k.tracked()) {
          detail::im2col(x.data() + s * cin * h * w, cin, h, w, kh, kw, st, pd, ho, wo,
                         col.data());
          detail::CMapRM<S> C(col.data(), kdim, ho * wo);
          detail::MapRM<S> GK(k.grad().data(), cout, kdim);
          GK.noalias() += GY * C.transpose();
        }
        if (x.tracked()) {
          detail::MapRM<S> GC(col.data(), kdim, ho * wo);
          GC.noalias() = K.transpose() * GY;
          detail::col2im_add(col.data(), cin, h, w, kh, kw, st, pd, ho, wo,
                             x.grad().data() + s * cin * h * w);
        }
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> bias_channel(const TensorT<S>& x, const TensorT<S>& b) {
  if (x.rank() != 4) throw std::invalid_argument("bias_channel: input must be rank 4");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (b.size() != c) throw std::invalid_argument("bias_channel: channel mismatch");
  TensorT<S> out(x.shape());
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const S bv = b.data()[ch];
      const S* src = x.data() + (s * c + ch) * hw;
      S* dst = out.data() + (s * c + ch) * hw;
      for (std::int64_t p = 0; p < hw; ++p) dst[p] = src[p] + bv;
    }
  detail::ensure_finite(out, "bias_channel");
  if (detail::any_tracked<S>({&x, &b})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&x, &b}, [x, b, out]() mutable {
      const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
      if (x.tracked()) detail::axpy(out.grad(), x.grad());
      if (b.tracked())
        for (std::int64_t s = 0; s < n; ++s)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const S* g = out.grad().data() + (s * c + ch) * hw;
            S acc = 0;
            for (std::int64_t p = 0; p < hw; ++p) acc += g[p];
            b.grad()[ch] += acc;
          }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// bilinear 2x upsampling, align-corners=false.

template <class S>
TensorT<S> bilinear_upsample2x(const TensorT<S>& x) {
  if (x.rank() != 4) throw std::invalid_argument("bilinear_upsample2x: input must be rank 4");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t ho = 2 * h, wo = 2 * w;
  TensorT<S> out({n, c, ho, wo});

  // Precompute 1-D source indices/weights shared by every row/column.
  auto axis = [](std::int64_t in, std::int64_t outn, std::vector<std::int64_t>& i0,
                 std::vector<std::int64_t>& i1, std::vector<S>& w1) {
    i0.resize(static_cast<std::size_t>(outn));
    i1.resize(static_cast<std::size_t>(outn));
    w1.resize(static_cast<std::size_t>(outn));
    for (std::int64_t o = 0; o < outn; ++o) {
      double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
      double f = std::floor(src);
      std::int64_t a = static_cast<std::int64_t>(f);
      double t = src - f;
      std::int64_t a0 = std::clamp<std::int64_t>(a, 0, in - 1);
      std::int64_t a1 = std::clamp<std::int64_t>(a + 1, 0, in - 1);
      i0[static_cast<std::size_t>(o)] = a0;
      i1[static_cast<std::size_t>(o)] = a1;
      w1[static_cast<std::size_t>(o)] = static_cast<S>(t);
    }
  };
  std::vector<std::int64_t> y0, y1, x0, x1;
  std::vector<S> wy, wx;
  axis(h, ho, y0, y1, wy);
  axis(w, wo, x0, x1, wx);

  for (std::int64_t s = 0; s < n * c; ++s) {
    const S* src = x.data() + s * h * w;
    S* dst = out.data() + s * ho * wo;
    for (std::int64_t i = 0; i < ho; ++i) {
      const S ty = wy[static_cast<std::size_t>(i)];
      const S* r0 = src + y0[static_cast<std::size_t>(i)] * w;
      const S* r1 = src + y1[static_cast<std::size_t>(i)] * w;
      for (std::int64_t j = 0; j < wo; ++j) {
        const S tx = wx[static_cast<std::size_t>(j)];
        const std::int64_t a = x0[static_cast<std::size_t>(j)], b = x1[static_cast<std::size_t>(j)];
        dst[i * wo + j] = (S(1) - ty) * ((S(1) - tx) * r0[a] + tx * r0[b]) +
                          ty * ((S(1) - tx) * r1[a] + tx * r1[b]);
      }
    }
  }
  detail::ensure_finite(out, "bilinear_upsample2x");

  if (detail::any_tracked<S>({&x})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&x}, [x, out, y0, y1, x0, x1, wy, wx]() mutable {
      const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
      const std::int64_t ho = 2 * h, wo = 2 * w;
      for (std::int64_t s = 0; s < n * c; ++s) {
        S* gx = x.grad().data() + s * h * w;
        const S* gy = out.grad().data() + s * ho * wo;
        for (std::int64_t i = 0; i < ho; ++i) {
          const S ty = wy[static_cast<std::size_t>(i)];
          S* r0 = gx + y0[static_cast<std::size_t>(i)] * w;
          S* r1 = gx + y1[static_cast<std::size_t>(i)] * w;
          for (std::int64_t j = 0; j < wo; ++j) {
            const S tx = wx[static_cast<std::size_t>(j)];
            const std::int64_t a = x0[static_cast<std::size_t>(j)],
                               b = x1[static_cast<std::size_t>(j)];
            const S g = gy[i * wo + j];
            r0[a] += g * (S(1) - ty) * (S(1) - tx);
            r0[b] += g * (S(1) - ty) * tx;
            r1[a] += g * ty * (S(1) - tx);
            r1[b] += g * ty * tx;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// channel softmax / normalization / reductions (rank 2 or rank 4, dim 1)

namespace detail {
// Iterates over (outer, channel-stride, count) for channel-axis ops.
template <class S>
struct ChannelView {
  std::int64_t groups;   // number of channel vectors
  std::int64_t c;        // channels
  std::int64_t stride;   // distance between consecutive channels
  // group g, channel k lives at base(g) + k*stride
  std::vector<std::int64_t> base;
  explicit ChannelView(const TensorT<S>& x) {
    if (x.rank() == 2) {
      groups = x.dim(0);
      c = x.dim(1);
      stride = 1;
      base.resize(static_cast<std::size_t>(groups));
      for (std::int64_t g = 0; g < groups; ++g) base[static_cast<std::size_t>(g)] = g * c;
    } else if (x.rank() == 4) {
      const std::int64_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
      groups = n * hw;
      c = x.dim(1);
      stride = hw;
      base.resize(static_cast<std::size_t>(groups));
      for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t p = 0; p < hw; ++p)
          base[static_cast<std::size_t>(s * hw + p)] = s * c * hw + p;
    } else {
      throw std::invalid_argument("channel op: input must be rank 2 or 4");
    }
  }
};
}  // namespace detail

template <class S>
TensorT<S> softmax_channel(const TensorT<S>& x) {
  detail::ChannelView<S> v(x);
  TensorT<S> out(x.shape());
  for (std::int64_t g = 0; g < v.groups; ++g) {
    const std::int64_t b = v.base[static_cast<std::size_t>(g)];
    S mx = x.data()[b];
    for (std::int64_t k = 1; k < v.c; ++k) mx = std::max(mx, x.data()[b + k * v.stride]);
    S z = 0;
    for (std::int64_t k = 0; k < v.c; ++k) {
      S e = std::exp(x.data()[b + k * v.stride] - mx);
      out.data()[b + k * v.stride] = e;
      z += e;
    }
    for (std::int64_t k = 0; k < v.c; ++k) out.data()[b + k * v.stride] /= z;
  }
  detail::ensure_finite(out, "softmax_channel");
  if (detail::any_tracked<S>({&x})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&x}, [x, out, v]() mutable {
      for (std::int64_t g = 0; g < v.groups; ++g) {
        const std::int64_t b = v.base[static_cast<std::size_t>(g)];
        S dot = 0;
        for (std::int64_t k = 0; k < v.c; ++k)
          dot += out.grad()[b + k * v.stride] * out.data()[b + k * v.stride];
        for (std::int64_t k = 0; k < v.c; ++k)
          x.grad()[b + k * v.stride] += out.data()[b + k * v.stride] *
                                        (out.grad()[b + k * v.stride] - dot);
      }
    });
  }
  return out;
}

// y_k = x_k / sum_j x_j per channel vector; inputs must be positive.
template <class S>
TensorT<S> normalize_channel(const TensorT<S>& x) {
  detail::ChannelView<S> v(x);
  TensorT<S> out(x.shape());
  for (std::int64_t g = 0; g < v.groups; ++g) {
    const std::int64_t b = v.base[static_cast<std::size_t>(g)];
    S z = 0;
    for (std::int64_t k = 0; k < v.c; ++k) z += x.data()[b + k * v.stride];
    if (!(z > S(0))) throw std::runtime_error("normalize_channel: non-positive channel sum");
    for (std::int64_t k = 0; k < v.c; ++k) out.data()[b + k * v.stride] = x.data()[b + k * v.stride] / z;
  }
  detail::ensure_finite(out, "normalize_channel");
  if (detail::any_tracked<S>({&x})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&x}, [x, out, v]() mutable {
      for (std::int64_t g = 0; g < v.groups; ++g) {
        const std::int64_t b = v.base[static_cast<std::size_t>(g)];
        S z = 0, dot = 0;
        for (std::int64_t k = 0; k < v.c; ++k) z += x.data()[b + k * v.stride];
        for (std::int64_t k = 0; k < v.c; ++k)
          dot += out.grad()[b + k * v.stride] * out.data()[b + k * v.stride];
        for (std::int64_t k = 0; k < v.c; ++k)
          x.grad()[b + k * v.stride] += (out.grad()[b + k * v.stride] - dot) / z;
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> sum_channel(const TensorT<S>& x) {
  if (x.rank() != 4) throw std::invalid_argument("sum_channel: input must be rank 4");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  TensorT<S> out({n, 1, x.dim(2), x.dim(3)});
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t p = 0; p < hw; ++p) {
      S acc = 0;
      for (std::int64_t k = 0; k < c; ++k) acc += x.data()[(s * c + k) * hw + p];
      out.data()[s * hw + p] = acc;
    }
  detail::ensure_finite(out, "sum_channel");
  if (detail::any_tracked<S>({&x})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&x}, [x, out]() mutable {
      const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
      for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t k = 0; k < c; ++k)
          for (std::int64_t p = 0; p < hw; ++p)
            x.grad()[(s * c + k) * hw + p] += out.grad()[s * hw + p];
    });
  }
  return out;
}

template <class S>
TensorT<S> concat_channel(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 4 || b.rank() != 4)
    throw std::invalid_argument("concat_channel: inputs must be rank 4");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw std::invalid_argument("concat_channel: spatial/batch mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  TensorT<S> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::int64_t s = 0; s < n; ++s) {
    std::copy(a.data() + s * ca * hw, a.data() + (s + 1) * ca * hw,
              out.data() + s * (ca + cb) * hw);
    std::copy(b.data() + s * cb * hw, b.data() + (s + 1) * cb * hw,
              out.data() + s * (ca + cb) * hw + ca * hw);
  }
  if (detail::any_tracked<S>({&a, &b})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&a, &b}, [a, b, out]() mutable {
      const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
      for (std::int64_t s = 0; s < n; ++s) {
        if (a.tracked())
          for (std::int64_t i = 0; i < ca * hw; ++i)
            a.grad()[s * ca * hw + i] += out.grad()[s * (ca + cb) * hw + i];
        if (b.tracked())
          for (std::int64_t i = 0; i < cb * hw; ++i)
            b.grad()[s * cb * hw + i] += out.grad()[s * (ca + cb) * hw + ca * hw + i];
      }
    });
  }
  return out;
}

// Contiguous row slice of a rank-2 tensor.
template <class S>
TensorT<S> rows_slice(const TensorT<S>& x, std::int64_t r0, std::int64_t r1) {
  if (x.rank() != 2) throw std::invalid_argument("rows_slice: input must be rank 2");
  if (r0 < 0 || r1 > x.dim(0) || r0 >= r1) throw std::invalid_argument("rows_slice: bad range");
  const std::int64_t c = x.dim(1);
  TensorT<S> out({r1 - r0, c});
  std::copy(x.data() + r0 * c, x.data() + r1 * c, out.data());
  if (detail::any_tracked<S>({&x})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&x}, [x, out, r0, c]() mutable {
      for (std::int64_t i = 0; i < out.size(); ++i) x.grad()[r0 * c + i] += out.grad()[i];
    });
  }
  return out;
}

// Gathers per-pixel channel vectors from a rank-4 map into [B,C] rows.
struct PixelIndex {
  std::int64_t sample, y, x;
};

template <class S>
TensorT<S> gather_pixels(const TensorT<S>& x, const std::vector<PixelIndex>& px) {
  if (x.rank() != 4) throw std::invalid_argument("gather_pixels: input must be rank 4");
  const std::int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3), hw = h * w;
  TensorT<S> out({static_cast<std::int64_t>(px.size()), c});
  for (std::size_t r = 0; r < px.size(); ++r) {
    const auto& p = px[r];
    if (p.sample < 0 || p.sample >= x.dim(0) || p.y < 0 || p.y >= h || p.x < 0 || p.x >= w)
      throw std::invalid_argument("gather_pixels: index out of range");
    for (std::int64_t k = 0; k < c; ++k)
      out.data()[static_cast<std::int64_t>(r) * c + k] =
          x.data()[(p.sample * c + k) * hw + p.y * w + p.x];
  }
  if (detail::any_tracked<S>({&x})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&x}, [x, out, px]() mutable {
      const std::int64_t c = x.dim(1), hw = x.dim(2) * x.dim(3), w = x.dim(3);
      for (std::size_t r = 0; r < px.size(); ++r) {
        const auto& p = px[r];
        for (std::int64_t k = 0; k < c; ++k)
          x.grad()[(p.sample * c + k) * hw + p.y * w + p.x] +=
              out.grad()[static_cast<std::int64_t>(r) * c + k];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pointwise MLP: Cin -> h -> h -> Cout with ReLU between layers. The same
// parameters apply to spatial maps and pooled flat rows.

template <class S>
struct MlpT {
  TensorT<S> w1, b1, w2, b2, w3, b3;

  static MlpT kaiming(std::mt19937_64& rng, std::int64_t cin, std::int64_t hidden,
                      std::int64_t cout) {
    auto layer = [&](std::int64_t ci, std::int64_t co) {
      S bound = static_cast<S>(std::sqrt(6.0 / static_cast<double>(ci)));
      return uniform_tensor<S>(rng, {co, ci}, -bound, bound);
    };
    MlpT m;
    m.w1 = layer(cin, hidden);
    m.b1 = TensorT<S>({hidden});
    m.w2 = layer(hidden, hidden);
    m.b2 = TensorT<S>({hidden});
    m.w3 = layer(hidden, cout);
    m.b3 = TensorT<S>({cout});
    return m;
  }

  TensorT<S> apply(const TensorT<S>& x) const {
    auto h1 = relu(linear_channels(x, w1, b1));
    auto h2 = relu(linear_channels(h1, w2, b2));
    return linear_channels(h2, w3, b3);
  }

  std::int64_t in_channels() const { return w1.dim(1); }
  std::int64_t out_channels() const { return w3.dim(0); }
};

}  // namespace localbins
