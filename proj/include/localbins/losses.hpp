#pragma once

// Training objectives: scale-invariant pixel loss, foveated multi-level bins
// loss over query responses, and their weighted total.

#include "localbins/bin_ops.hpp"
#include "localbins/loss_ops.hpp"
#include "localbins/query.hpp"
#include "localbins/types.hpp"

namespace localbins {

struct LossConfig {
  double beta = 0.02;
  double gamma_l = 0.3;
  double gamma_b = 0.3;
  double si_lambda = 0.85;
  double si_alpha = 10.0;
};

// Eq-style weight for response level `level` (0 = bottleneck .. n = output)
// and size class `k` (0 = smallest): gamma_l^(n-level) * gamma_b^k.
inline double foveated_weight(int level, int k, int n, double gamma_l, double gamma_b) {
  return std::pow(gamma_l, n - level) * std::pow(gamma_b, k);
}

struct BinsLossResult {
  Tensor loss;  // scalar
  // weighted per-(level, size class) contributions, breakdown[level][k]
  std::vector<std::vector<double>> breakdown;
};

// widths_per_level: [B,m_l] per response level, rows grouped by size class in
// ascending class order; gt[b] is the depth sample set of row b (nonempty).
BinsLossResult foveated_bins_loss(const std::vector<Tensor>& widths_per_level,
                                  const std::vector<int>& size_class,
                                  const std::vector<std::vector<double>>& gt,
                                  const DepthRange& range, const LossConfig& cfg,
                                  int n_size_classes);

Tensor total_loss(const Tensor& pixel, const Tensor& bins, const LossConfig& cfg);

}  // namespace localbins
