#include "localbins/losses.hpp"

namespace localbins {

BinsLossResult foveated_bins_loss(const std::vector<Tensor>& widths_per_level,
                                  const std::vector<int>& size_class,
                                  const std::vector<std::vector<double>>& gt,
                                  const DepthRange& range, const LossConfig& cfg,
                                  int n_size_classes) {
  if (widths_per_level.empty()) throw std::invalid_argument("foveated_bins_loss: no levels");
  const std::int64_t rows = widths_per_level.front().dim(0);
  if (static_cast<std::int64_t>(size_class.size()) != rows ||
      static_cast<std::int64_t>(gt.size()) != rows)
    throw std::invalid_argument("foveated_bins_loss: row metadata mismatch");
  if (rows == 0) throw std::invalid_argument("foveated_bins_loss: all boxes rejected");

  // rows are grouped class-major; find the contiguous range of each class
  std::vector<std::pair<std::int64_t, std::int64_t>> ranges(
      static_cast<std::size_t>(n_size_classes), {0, 0});
  {
    std::int64_t r = 0;
    for (int k = 0; k < n_size_classes; ++k) {
      const std::int64_t r0 = r;
      while (r < rows && size_class[static_cast<std::size_t>(r)] == k) ++r;
      ranges[static_cast<std::size_t>(k)] = {r0, r};
    }
    if (r != rows)
      throw std::invalid_argument("foveated_bins_loss: rows not grouped by size class");
  }

  const int n = static_cast<int>(widths_per_level.size()) - 1;  // output level index
  BinsLossResult res;
  res.breakdown.assign(widths_per_level.size(),
                       std::vector<double>(static_cast<std::size_t>(n_size_classes), 0.0));
  std::vector<Tensor> terms;
  std::vector<double> weights;
  for (int level = 0; level <= n; ++level) {
    Tensor centers =
        bin_centers(widths_per_level[static_cast<std::size_t>(level)], range.d_min, range.d_max);
    for (int k = 0; k < n_size_classes; ++k) {
      const auto [r0, r1] = ranges[static_cast<std::size_t>(k)];
      if (r0 == r1) continue;
      Tensor rows_k = rows_slice(centers, r0, r1);
      std::vector<std::vector<double>> gts(gt.begin() + r0, gt.begin() + r1);
      std::vector<double> ones(static_cast<std::size_t>(r1 - r0), 1.0);
      Tensor term = chamfer_rows(rows_k, gts, ones);
      const double w = foveated_weight(level, k, n, cfg.gamma_l, cfg.gamma_b);
      res.breakdown[static_cast<std::size_t>(level)][static_cast<std::size_t>(k)] =
          w * term.item();
      terms.push_back(std::move(term));
      weights.push_back(w);
    }
  }
  if (terms.empty()) throw std::invalid_argument("foveated_bins_loss: all boxes rejected");
  res.loss = linear_combination(terms, weights);
  return res;
}

Tensor total_loss(const Tensor& pixel, const Tensor& bins, const LossConfig& cfg) {
  return add(pixel, scale(bins, cfg.beta));
}

}  // namespace localbins
