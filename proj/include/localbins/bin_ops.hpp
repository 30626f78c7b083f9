#pragma once

// Differentiable bin algebra: splitting widths into adjacent pairs,
// the linear-norm splitter activation, and width-to-center conversion.

#include "localbins/nn.hpp"

namespace localbins {

// Each width b^a becomes the adjacent pair (alpha^a * b^a, (1-alpha^a) * b^a),
// preserving order along the channel axis. widths and alpha share shape
// [...,m,...]; output has 2m channels.
template <class S>
TensorT<S> split_widths(const TensorT<S>& widths, const TensorT<S>& alpha) {
  detail::same_shape(widths, alpha, "split_widths");
  detail::ChannelView<S> v(widths);
  Shape out_shape = widths.shape();
  out_shape[1] = 2 * v.c;
  TensorT<S> out(out_shape);
  detail::ChannelView<S> vo(out);
  for (std::int64_t g = 0; g < v.groups; ++g) {
    const std::int64_t bi = v.base[static_cast<std::size_t>(g)];
    const std::int64_t bo = vo.base[static_cast<std::size_t>(g)];
    for (std::int64_t k = 0; k < v.c; ++k) {
      const S wv = widths.data()[bi + k * v.stride];
      const S av = alpha.data()[bi + k * v.stride];
      out.data()[bo + (2 * k) * vo.stride] = av * wv;
      out.data()[bo + (2 * k + 1) * vo.stride] = (S(1) - av) * wv;
    }
  }
  detail::ensure_finite(out, "split_widths");
  if (detail::any_tracked<S>({&widths, &alpha})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&widths, &alpha}, [widths, alpha, out, v, vo]() mutable {
      for (std::int64_t g = 0; g < v.groups; ++g) {
        const std::int64_t bi = v.base[static_cast<std::size_t>(g)];
        const std::int64_t bo = vo.base[static_cast<std::size_t>(g)];
        for (std::int64_t k = 0; k < v.c; ++k) {
          const S wv = widths.data()[bi + k * v.stride];
          const S av = alpha.data()[bi + k * v.stride];
          const S g0 = out.grad()[bo + (2 * k) * vo.stride];
          const S g1 = out.grad()[bo + (2 * k + 1) * vo.stride];
          if (widths.tracked())
            widths.grad()[bi + k * v.stride] += av * g0 + (S(1) - av) * g1;
          if (alpha.tracked()) alpha.grad()[bi + k * v.stride] += wv * (g0 - g1);
        }
      }
    });
  }
  return out;
}

// Linear-norm activation over interleaved nonnegative (x1,x2) channel pairs:
// alpha_k = x_{2k} / (x_{2k} + x_{2k+1} + eps).
template <class S>
TensorT<S> linear_norm_pairs(const TensorT<S>& x, S eps = static_cast<S>(1e-4)) {
  detail::ChannelView<S> v(x);
  if (v.c % 2 != 0) throw std::invalid_argument("linear_norm_pairs: channel count must be even");
  Shape out_shape = x.shape();
  out_shape[1] = v.c / 2;
  TensorT<S> out(out_shape);
  detail::ChannelView<S> vo(out);
  for (std::int64_t g = 0; g < v.groups; ++g) {
    const std::int64_t bi = v.base[static_cast<std::size_t>(g)];
    const std::int64_t bo = vo.base[static_cast<std::size_t>(g)];
    for (std::int64_t k = 0; k < vo.c; ++k) {
      const S x1 = x.data()[bi + (2 * k) * v.stride];
      const S x2 = x.data()[bi + (2 * k + 1) * v.stride];
      out.data()[bo + k * vo.stride] = x1 / (x1 + x2 + eps);
    }
  }
  detail::ensure_finite(out, "linear_norm_pairs");
  if (detail::any_tracked<S>({&x})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&x}, [x, out, v, vo, eps]() mutable {
      for (std::int64_t g = 0; g < v.groups; ++g) {
        const std::int64_t bi = v.base[static_cast<std::size_t>(g)];
        const std::int64_t bo = vo.base[static_cast<std::size_t>(g)];
        for (std::int64_t k = 0; k < vo.c; ++k) {
          const S x1 = x.data()[bi + (2 * k) * v.stride];
          const S x2 = x.data()[bi + (2 * k + 1) * v.stride];
          const S d = x1 + x2 + eps;
          const S g0 = out.grad()[bo + k * vo.stride];
          x.grad()[bi + (2 * k) * v.stride] += g0 * (x2 + eps) / (d * d);
          x.grad()[bi + (2 * k + 1) * v.stride] += g0 * (-x1) / (d * d);
        }
      }
    });
  }
  return out;
}

// c(b^k) = d_min + (d_max - d_min) * (b^k / 2 + sum_{s<k} b^s). Widths must be
// normalized per channel vector (sum within 1e-6 of 1).
template <class S>
TensorT<S> bin_centers(const TensorT<S>& widths, S d_min, S d_max) {
  if (!(d_min < d_max)) throw std::invalid_argument("bin_centers: invalid depth range");
  detail::ChannelView<S> v(widths);
  TensorT<S> out(widths.shape());
  const S range = d_max - d_min;
  for (std::int64_t g = 0; g < v.groups; ++g) {
    const std::int64_t b = v.base[static_cast<std::size_t>(g)];
    S cum = 0;
    for (std::int64_t k = 0; k < v.c; ++k) {
      const S wv = widths.data()[b + k * v.stride];
      out.data()[b + k * v.stride] = d_min + range * (wv / S(2) + cum);
      cum += wv;
    }
    if (std::abs(static_cast<double>(cum) - 1.0) > 1e-6)
      throw std::invalid_argument("bin_centers: widths are not normalized");
  }
  detail::ensure_finite(out, "bin_centers");
  if (detail::any_tracked<S>({&widths})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&widths}, [widths, out, v, range]() mutable {
      for (std::int64_t g = 0; g < v.groups; ++g) {
        const std::int64_t b = v.base[static_cast<std::size_t>(g)];
        // dL/dw_s = range * (0.5 * gy_s + sum_{k>s} gy_k)
        S suffix = 0;
        for (std::int64_t s = v.c - 1; s >= 0; --s) {
          const S gy = out.grad()[b + s * v.stride];
          widths.grad()[b + s * v.stride] += range * (S(0.5) * gy + suffix);
          suffix += gy;
        }
      }
    });
  }
  return out;
}

}  // namespace localbins
