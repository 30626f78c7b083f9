#pragma once

// Synthetic depth scenes, corpus file IO, depth evaluation metrics, and the
// bin locality / density analyses.

#include <random>
#include <string>

#include "localbins/types.hpp"

namespace localbins {

struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SceneSample {
  Tensor image;  // [3,H,W] in [0,1]
  Tensor depth;  // [1,H,W] meters
  std::vector<std::uint8_t> mask;  // row-major validity, length H*W
};

// Procedural scene: 3-8 primitives (gradient planes, boxes, spheres)
// z-buffered into a depth map; appearance is a deterministic function of
// depth, surface id and a noise field; ~2% of pixels masked invalid.
SceneSample generate_scene(std::mt19937_64& rng, std::int64_t h, std::int64_t w,
                           const DepthRange& range);

// Corpus file, magic "LBDS" (see README for the exact layout).
void write_corpus(const std::vector<SceneSample>& corpus, const std::string& path);
std::vector<SceneSample> read_corpus(const std::string& path);

struct MetricsReport {
  double delta1 = 0, delta2 = 0, delta3 = 0;
  double rel = 0, rms = 0, log10 = 0;
};

MetricsReport compute_metrics(const Tensor& pred, const Tensor& gt,
                              const std::vector<std::uint8_t>& mask);

// Mean absolute distance from each GT depth in a window to its nearest
// predicted bin center, one value per window.
std::vector<double> nearest_center_locality(const std::vector<double>& centers,
                                            const std::vector<std::vector<double>>& window_sets);

// Gaussian KDE of a center set sampled at 256 uniform points over the range.
struct DensityCurve {
  std::vector<double> depth;    // 256 grid points
  std::vector<double> density;
};

DensityCurve bin_density_profile(const std::vector<double>& centers, const DepthRange& range,
                                 double bandwidth);

inline double default_kde_bandwidth(const DepthRange& r, std::size_t m) {
  return 0.1 * (r.d_max - r.d_min) / std::sqrt(static_cast<double>(m));
}

}  // namespace localbins
