#pragma once

// Differentiable loss primitives: 1D bidirectional Chamfer matching and the
// scale-invariant log depth loss.

#include <cmath>
#include <cstdint>
#include <vector>

#include "localbins/tensor.hpp"

namespace localbins {

namespace detail {

// Nearest value in sorted `v` to x; returns index into `v`.
template <class S>
std::size_t nearest_sorted(const std::vector<S>& v, S x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.begin()) return 0;
  if (it == v.end()) return v.size() - 1;
  std::size_t hi = static_cast<std::size_t>(it - v.begin());
  std::size_t lo = hi - 1;
  return (x - v[lo]) <= (v[hi] - x) ? lo : hi;
}

}  // namespace detail

// Weighted sum of per-row bidirectional squared Chamfer distances between the
// rows of `pred` [B,m] and fixed target sets `targets` (one per row, each
// nonempty). Nearest neighbours are found by sorting + binary search; the
// result matches the O(nm) brute force.
template <class S>
TensorT<S> chamfer_rows(const TensorT<S>& pred, const std::vector<std::vector<S>>& targets,
                        const std::vector<S>& weights) {
  if (pred.rank() != 2) throw std::invalid_argument("chamfer_rows: pred must be rank 2");
  const std::int64_t rows = pred.dim(0), m = pred.dim(1);
  if (static_cast<std::int64_t>(targets.size()) != rows ||
      static_cast<std::int64_t>(weights.size()) != rows)
    throw std::invalid_argument("chamfer_rows: row count mismatch");

  // Per-row nearest-neighbour assignments, kept for backward.
  std::vector<std::vector<std::size_t>> fwd_nn(static_cast<std::size_t>(rows));
  std::vector<std::vector<std::size_t>> rev_nn(static_cast<std::size_t>(rows));
  S total = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto& gt = targets[static_cast<std::size_t>(r)];
    if (gt.empty()) throw std::invalid_argument("chamfer_rows: empty target set");
    const S* a = pred.data() + r * m;

    std::vector<S> gts(gt);
    std::sort(gts.begin(), gts.end());
    std::vector<std::size_t> gt_order(gt.size());
    std::iota(gt_order.begin(), gt_order.end(), std::size_t{0});
    std::sort(gt_order.begin(), gt_order.end(),
              [&](std::size_t i, std::size_t j) { return gt[i] < gt[j]; });

    std::vector<std::size_t> a_order(static_cast<std::size_t>(m));
    std::iota(a_order.begin(), a_order.end(), std::size_t{0});
    std::sort(a_order.begin(), a_order.end(),
              [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
    std::vector<S> as(static_cast<std::size_t>(m));
    for (std::int64_t k = 0; k < m; ++k) as[static_cast<std::size_t>(k)] = a[a_order[static_cast<std::size_t>(k)]];

    auto& fn = fwd_nn[static_cast<std::size_t>(r)];
    fn.resize(static_cast<std::size_t>(m));
    S row_sum = 0;
    for (std::int64_t k = 0; k < m; ++k) {
      std::size_t j = detail::nearest_sorted(gts, a[k]);
      fn[static_cast<std::size_t>(k)] = gt_order[j];
      const S d = a[k] - gts[j];
      row_sum += d * d;
    }
    auto& rn = rev_nn[static_cast<std::size_t>(r)];
    rn.resize(gt.size());
    for (std::size_t q = 0; q < gt.size(); ++q) {
      std::size_t j = detail::nearest_sorted(as, gt[q]);
      rn[q] = a_order[j];
      const S d = gt[q] - as[j];
      row_sum += d * d;
    }
    total += weights[static_cast<std::size_t>(r)] * row_sum;
  }
  TensorT<S> out = TensorT<S>::scalar(total);
  detail::ensure_finite(out, "chamfer_rows");

  if (detail::any_tracked<S>({&pred})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&pred}, [pred, out, targets, weights, fwd_nn, rev_nn, m]() mutable {
      const S g = out.grad()[0];
      for (std::int64_t r = 0; r < pred.dim(0); ++r) {
        const S wg = g * weights[static_cast<std::size_t>(r)];
        const S* a = pred.data() + r * m;
        S* ga = pred.grad().data() + r * m;
        const auto& gt = targets[static_cast<std::size_t>(r)];
        const auto& fn = fwd_nn[static_cast<std::size_t>(r)];
        const auto& rn = rev_nn[static_cast<std::size_t>(r)];
        for (std::int64_t k = 0; k < m; ++k)
          ga[k] += wg * S(2) * (a[k] - gt[fn[static_cast<std::size_t>(k)]]);
        for (std::size_t q = 0; q < gt.size(); ++q)
          ga[static_cast<std::int64_t>(rn[q])] += wg * S(2) * (a[rn[q]] - gt[q]);
      }
    });
  }
  return out;
}

// Bidirectional squared Chamfer distance between one predicted value set
// (rank-1 tensor) and a fixed target set.
template <class S>
TensorT<S> chamfer_1d(const TensorT<S>& a, const std::vector<S>& b) {
  if (a.rank() != 1) throw std::invalid_argument("chamfer_1d: pred must be rank 1");
  if (a.size() == 0 || b.empty()) throw std::invalid_argument("chamfer_1d: empty set");
  TensorT<S> view({1, a.size()}, a.values());  // single-row view
  view.grad_ = a.grad_;
  view.node_ = a.node_;
  return chamfer_rows(view, {b}, {S(1)});
}

// Plain (non-differentiable) brute-force chamfer for small sets.
template <class S>
S chamfer_bruteforce(const std::vector<S>& a, const std::vector<S>& b) {
  S total = 0;
  for (S x : a) {
    S best = (x - b[0]) * (x - b[0]);
    for (S y : b) best = std::min(best, (x - y) * (x - y));
    total += best;
  }
  for (S y : b) {
    S best = (y - a[0]) * (y - a[0]);
    for (S x : a) best = std::min(best, (x - y) * (x - y));
    total += best;
  }
  return total;
}

// Scale-invariant log loss: alpha * sqrt(mean(g^2) - lambda * mean(g)^2) with
// g = log(pred) - log(gt) over valid pixels.
template <class S>
TensorT<S> silog_loss(const TensorT<S>& pred, const TensorT<S>& gt,
                      const std::vector<std::uint8_t>& mask, S si_lambda = static_cast<S>(0.85),
                      S si_alpha = static_cast<S>(10)) {
  detail::same_shape(pred, gt, "silog_loss");
  if (static_cast<std::int64_t>(mask.size()) != pred.size())
    throw std::invalid_argument("silog_loss: mask length mismatch");
  std::vector<std::int64_t> valid;
  for (std::int64_t i = 0; i < pred.size(); ++i)
    if (mask[static_cast<std::size_t>(i)]) valid.push_back(i);
  if (valid.empty()) throw std::invalid_argument("silog_loss: no valid pixels");

  const S n = static_cast<S>(valid.size());
  S sum_g = 0, sum_g2 = 0;
  std::vector<S> gvals(valid.size());
  for (std::size_t k = 0; k < valid.size(); ++k) {
    const S p = pred.data()[valid[k]];
    const S t = gt.data()[valid[k]];
    if (!(p > S(0)))
      throw std::runtime_error("silog_loss: non-positive prediction under mask");
    if (!(t > S(0))) throw std::runtime_error("silog_loss: non-positive ground truth under mask");
    const S g = std::log(p) - std::log(t);
    gvals[k] = g;
    sum_g += g;
    sum_g2 += g * g;
  }
  const S mg = sum_g / n;
  S var = sum_g2 / n - si_lambda * mg * mg;
  if (var < S(0)) var = S(0);  // guard tiny negative round-off when lambda ~ 1
  const S loss = si_alpha * std::sqrt(var);
  TensorT<S> out = TensorT<S>::scalar(loss);
  detail::ensure_finite(out, "silog_loss");

  if (detail::any_tracked<S>({&pred})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&pred}, [pred, out, valid, gvals, mg, var, n, si_lambda, si_alpha]() mutable {
      const S g0 = out.grad()[0];
      const S denom = std::sqrt(var) > S(1e-12) ? std::sqrt(var) : S(1e-12);
      const S c = g0 * si_alpha / (S(2) * denom);
      for (std::size_t k = 0; k < valid.size(); ++k) {
        const S dvar_dg = S(2) * gvals[k] / n - S(2) * si_lambda * mg / n;
        pred.grad()[valid[k]] += c * dvar_dg / pred.data()[valid[k]];
      }
    });
  }
  return out;
}

}  // namespace localbins
