#pragma once

// 1x1 ROIAlign with average pooling: each box is reduced to a single
// C-vector by averaging bilinear samples on a g x g grid inside the box.

#include "localbins/nn.hpp"

namespace localbins {

struct RoiBox {
  std::int64_t sample = 0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // image-space pixel coordinates
};

namespace detail {
struct BilinearTap {
  std::int64_t i0, i1;
  double t;  // weight of i1
};
inline BilinearTap bilinear_tap(double coord, std::int64_t extent) {
  // pixel i has its center at i + 0.5
  double u = coord - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(extent - 1));
  double f = std::floor(u);
  std::int64_t i0 = static_cast<std::int64_t>(f);
  std::int64_t i1 = std::min(i0 + 1, extent - 1);
  return {i0, i1, u - f};
}
}  // namespace detail

// Pools every box into one row of the [B,C] result. `samples` is the number
// of sample points per axis; 0 picks ceil(box extent in feature cells) per
// axis (dense mode).
template <class S>
TensorT<S> roi_avg_pool_rows(const TensorT<S>& feat, const std::vector<RoiBox>& boxes,
                             std::int64_t image_h, std::int64_t image_w, int samples = 2) {
  if (feat.rank() != 4) throw std::invalid_argument("roi_avg_pool: feature must be rank 4");
  const std::int64_t c = feat.dim(1), hf = feat.dim(2), wf = feat.dim(3);
  if (image_h % hf != 0 || image_w % wf != 0)
    throw std::invalid_argument("roi_avg_pool: image extent not a multiple of feature extent");
  const double stride_y = static_cast<double>(image_h) / static_cast<double>(hf);
  const double stride_x = static_cast<double>(image_w) / static_cast<double>(wf);

  struct Tap {
    std::int64_t idx;  // spatial offset within one channel plane
    S w;
  };
  std::vector<std::vector<Tap>> taps(boxes.size());
  for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
    const auto& b = boxes[bi];
    if (b.sample < 0 || b.sample >= feat.dim(0))
      throw std::invalid_argument("roi_avg_pool: bad sample index");
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > static_cast<double>(image_w) ||
        b.y1 > static_cast<double>(image_h) || b.x0 >= b.x1 || b.y0 >= b.y1)
      throw std::invalid_argument("roi_avg_pool: box outside image");
    const double fx0 = b.x0 / stride_x, fx1 = b.x1 / stride_x;
    const double fy0 = b.y0 / stride_y, fy1 = b.y1 / stride_y;
    int gx = samples, gy = samples;
    if (samples <= 0) {
      gx = std::max(1, static_cast<int>(std::ceil(fx1 - fx0)));
      gy = std::max(1, static_cast<int>(std::ceil(fy1 - fy0)));
    }
    const S inv = S(1) / static_cast<S>(gx * gy);
    auto& tp = taps[bi];
    for (int iy = 0; iy < gy; ++iy) {
      const double sy = fy0 + (iy + 0.5) * (fy1 - fy0) / gy;
      const auto ty = detail::bilinear_tap(sy, hf);
      for (int ix = 0; ix < gx; ++ix) {
        const double sx = fx0 + (ix + 0.5) * (fx1 - fx0) / gx;
        const auto tx = detail::bilinear_tap(sx, wf);
        const S w00 = static_cast<S>((1.0 - ty.t) * (1.0 - tx.t)) * inv;
        const S w01 = static_cast<S>((1.0 - ty.t) * tx.t) * inv;
        const S w10 = static_cast<S>(ty.t * (1.0 - tx.t)) * inv;
        const S w11 = static_cast<S>(ty.t * tx.t) * inv;
        tp.push_back({ty.i0 * wf + tx.i0, w00});
        tp.push_back({ty.i0 * wf + tx.i1, w01});
        tp.push_back({ty.i1 * wf + tx.i0, w10});
        tp.push_back({ty.i1 * wf + tx.i1, w11});
      }
    }
  }

  TensorT<S> out({static_cast<std::int64_t>(boxes.size()), c});
  const std::int64_t plane = hf * wf;
  for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
    const std::int64_t s = boxes[bi].sample;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const S* src = feat.data() + (s * c + ch) * plane;
      S acc = 0;
      for (const auto& t : taps[bi]) acc += t.w * src[t.idx];
      out.data()[static_cast<std::int64_t>(bi) * c + ch] = acc;
    }
  }
  detail::ensure_finite(out, "roi_avg_pool");

  if (detail::any_tracked<S>({&feat})) {
    auto sample_of = std::vector<std::int64_t>();
    for (const auto& b : boxes) sample_of.push_back(b.sample);
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&feat}, [feat, out, taps, sample_of, c, plane]() mutable {
      for (std::size_t bi = 0; bi < taps.size(); ++bi) {
        const std::int64_t s = sample_of[bi];
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const S g = out.grad()[static_cast<std::int64_t>(bi) * c + ch];
          S* dst = feat.grad().data() + (s * c + ch) * plane;
          for (const auto& t : taps[bi]) dst[t.idx] += t.w * g;
        }
      }
    });
  }
  return out;
}

}  // namespace localbins
