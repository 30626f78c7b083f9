#pragma once

// Query-Response machinery: random multi-scale box generation, ROIAlign
// pooling of the feature pyramid, running the LocalBins MLP chain on pooled
// vectors (sharing the spatial parameters), and ground-truth extraction.

#include <random>

#include "localbins/bins.hpp"
#include "localbins/roi.hpp"

namespace localbins {

struct BoxQuery {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive-exclusive pixel coords
  int size_class = 0;
};

struct QuerySet {
  std::vector<std::int64_t> sizes;  // strictly increasing
  std::int64_t boxes_per_class = 0;
  std::vector<BoxQuery> boxes;  // grouped by class, class-major order
};

// Base box sizes (chosen for 480-pixel inputs) rescaled to the working
// resolution: scaled by
// min(H,W)/480 and rounded to the nearest odd integer >= 3.
std::vector<std::int64_t> scaled_box_sizes(std::int64_t h, std::int64_t w,
                                           const std::vector<std::int64_t>& base_sizes);

QuerySet generate_queries(std::mt19937_64& rng, std::int64_t h, std::int64_t w,
                          const std::vector<std::int64_t>& sizes, std::int64_t m);

// All valid depths whose pixel centers fall in the box; uniformly subsampled
// to `cap` when larger. Empty result means the box is rejected.
std::vector<double> extract_gt_depths(const Tensor& depth, const std::vector<std::uint8_t>& mask,
                                      const BoxQuery& box, std::int64_t cap,
                                      std::mt19937_64& rng);

// Pooled bins per level for one box (the spec-level single-box contract).
struct BoxResponse {
  std::vector<std::vector<double>> widths_per_level;  // level 0..n
  std::vector<double> gt_depths;
};

BoxResponse query_bins(const PyramidFeatures& pyr, const LocalBinsParams& p, const BoxQuery& box,
                       std::int64_t image_h, std::int64_t image_w);

// Batched query path used in training: one [B,m_l] widths tensor per level,
// rows aligned with `boxes`. `sample_of` maps each box to its batch sample.
struct QueryBatch {
  std::vector<RoiBox> boxes;
  std::vector<int> size_class;
  std::vector<std::vector<double>> gt;  // per box
};

std::vector<Tensor> query_bins_batch(const PyramidFeatures& pyr, const LocalBinsParams& p,
                                     const QueryBatch& batch, std::int64_t image_h,
                                     std::int64_t image_w);

struct CoverageReport {
  std::int64_t psci = 0;
  std::int64_t px_covered = 0;
  double coverage_pct = 0;
};

CoverageReport coverage_report(const QuerySet& qs, std::int64_t h, std::int64_t w);

// Naive baseline targets: GT depth sets of centered windows at randomly
// selected valid pixels.
struct NaiveTarget {
  PixelIndex pixel;
  std::vector<double> gt_depths;
};

std::vector<NaiveTarget> naive_subsample_targets(const Tensor& depth,
                                                 const std::vector<std::uint8_t>& mask,
                                                 int window, std::int64_t n_locations,
                                                 std::mt19937_64& rng);

}  // namespace localbins
