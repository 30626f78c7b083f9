#include "localbins/data.hpp"

#include <cstring>
#include <fstream>

namespace localbins {

namespace {

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

SceneSample generate_scene(std::mt19937_64& rng, std::int64_t h, std::int64_t w,
                           const DepthRange& range) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  // keep generated depths comfortably inside (d_min, d_max)
  const double lo = std::max(range.d_min * 1.5, 1.0);
  const double hi = range.d_max * 0.95;

  std::vector<double> depth(static_cast<std::size_t>(h * w));
  std::vector<int> surface(static_cast<std::size_t>(h * w), 0);

  // background plane with gradient
  const double base = lo + (hi - lo) * (0.4 + 0.4 * u01(rng));
  const double gx = (u01(rng) - 0.5) * 0.6 * (hi - lo);
  const double gy = (u01(rng) - 0.5) * 0.6 * (hi - lo);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      depth[static_cast<std::size_t>(y * w + x)] =
          clampd(base + gx * (static_cast<double>(x) / w - 0.5) +
                     gy * (static_cast<double>(y) / h - 0.5),
                 lo, hi);

  std::uniform_int_distribution<int> nprim(2, 7);
  const int k = nprim(rng);
  for (int pi = 1; pi <= k; ++pi) {
    const bool sphere = u01(rng) < 0.4;
    if (sphere) {
      const double cx = u01(rng) * w, cy = u01(rng) * h;
      const double r = (0.08 + 0.25 * u01(rng)) * std::min(h, w);
      const double d0 = lo + (hi - lo) * u01(rng);
      const double bump = 0.1 * (hi - lo) * u01(rng);
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          const double dx = x - cx, dy = y - cy;
          const double q = r * r - dx * dx - dy * dy;
          if (q <= 0) continue;
          const double d = clampd(d0 - bump * std::sqrt(q) / r, lo, hi);
          auto& cell = depth[static_cast<std::size_t>(y * w + x)];
          if (d < cell) {
            cell = d;
            surface[static_cast<std::size_t>(y * w + x)] = pi;
          }
        }
    } else {
      const double bw = (0.1 + 0.4 * u01(rng)) * w, bh = (0.1 + 0.4 * u01(rng)) * h;
      const double x0 = u01(rng) * (w - bw), y0 = u01(rng) * (h - bh);
      const double d0 = lo + (hi - lo) * u01(rng);
      const double slope = (u01(rng) - 0.5) * 0.1 * (hi - lo);
      for (std::int64_t y = static_cast<std::int64_t>(y0);
           y < static_cast<std::int64_t>(y0 + bh) && y < h; ++y)
        for (std::int64_t x = static_cast<std::int64_t>(x0);
             x < static_cast<std::int64_t>(x0 + bw) && x < w; ++x) {
          const double d = clampd(d0 + slope * ((x - x0) / std::max(bw, 1.0)), lo, hi);
          auto& cell = depth[static_cast<std::size_t>(y * w + x)];
          if (d < cell) {
            cell = d;
            surface[static_cast<std::size_t>(y * w + x)] = pi;
          }
        }
    }
  }

  // appearance: depth cue + per-surface albedo + pure noise channel
  SceneSample s;
  s.image = Tensor({3, h, w});
  s.depth = Tensor({1, h, w});
  s.mask.assign(static_cast<std::size_t>(h * w), 1);
  std::normal_distribution<double> nz(0.0, 0.01);
  std::vector<double> albedo(9);
  for (auto& a : albedo) a = 0.1 + 0.8 * u01(rng);
  for (std::int64_t i = 0; i < h * w; ++i) {
    const double d = depth[static_cast<std::size_t>(i)];
    s.depth.data()[i] = d;
    const double cue = 1.0 - (d - lo) / (hi - lo);
    s.image.data()[i] = clampd(cue + nz(rng), 0.0, 1.0);
    s.image.data()[h * w + i] =
        clampd(albedo[static_cast<std::size_t>(surface[static_cast<std::size_t>(i)])] + nz(rng),
               0.0, 1.0);
    s.image.data()[2 * h * w + i] = u01(rng);
    if (u01(rng) < 0.02) s.mask[static_cast<std::size_t>(i)] = 0;
  }
  return s;
}

// ---------------------------------------------------------------------------
// corpus IO: "LBDS", u32 count, then per sample u32 H, u32 W, f32 image,
// f32 depth, packed LSB-first row-major validity bitmask.

namespace {
template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw format_error("corpus: truncated payload");
  return v;
}
}  // namespace

void write_corpus(const std::vector<SceneSample>& corpus, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw format_error("corpus: cannot open " + path + " for writing");
  os.write("LBDS", 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(corpus.size()));
  for (const auto& s : corpus) {
    const std::int64_t h = s.depth.dim(1), w = s.depth.dim(2);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(h));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(w));
    for (std::int64_t i = 0; i < 3 * h * w; ++i)
      put<float>(os, static_cast<float>(s.image.data()[i]));
    for (std::int64_t i = 0; i < h * w; ++i)
      put<float>(os, static_cast<float>(s.depth.data()[i]));
    std::vector<std::uint8_t> bits(static_cast<std::size_t>((h * w + 7) / 8), 0);
    for (std::int64_t i = 0; i < h * w; ++i)
      if (s.mask[static_cast<std::size_t>(i)])
        bits[static_cast<std::size_t>(i / 8)] |= static_cast<std::uint8_t>(1u << (i % 8));
    os.write(reinterpret_cast<const char*>(bits.data()),
             static_cast<std::streamsize>(bits.size()));
  }
  if (!os) throw format_error("corpus: write failed for " + path);
}

std::vector<SceneSample> read_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw format_error("corpus: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "LBDS", 4) != 0)
    throw format_error("corpus: bad magic in " + path);
  const auto count = get<std::uint32_t>(is);
  std::vector<SceneSample> corpus;
  corpus.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::int64_t h = get<std::uint32_t>(is);
    const std::int64_t w = get<std::uint32_t>(is);
    if (h <= 0 || w <= 0) throw format_error("corpus: bad sample extents");
    SceneSample s;
    s.image = Tensor({3, h, w});
    s.depth = Tensor({1, h, w});
    for (std::int64_t i = 0; i < 3 * h * w; ++i) s.image.data()[i] = get<float>(is);
    for (std::int64_t i = 0; i < h * w; ++i) s.depth.data()[i] = get<float>(is);
    std::vector<std::uint8_t> bits(static_cast<std::size_t>((h * w + 7) / 8));
    is.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
    if (!is) throw format_error("corpus: truncated payload");
    s.mask.assign(static_cast<std::size_t>(h * w), 0);
    for (std::int64_t i = 0; i < h * w; ++i)
      s.mask[static_cast<std::size_t>(i)] =
          (bits[static_cast<std::size_t>(i / 8)] >> (i % 8)) & 1u;
    corpus.push_back(std::move(s));
  }
  return corpus;
}

// ---------------------------------------------------------------------------

MetricsReport compute_metrics(const Tensor& pred, const Tensor& gt,
                              const std::vector<std::uint8_t>& mask) {
  if (pred.shape() != gt.shape())
    throw std::invalid_argument("compute_metrics: shape mismatch");
  if (static_cast<std::int64_t>(mask.size()) != pred.size())
    throw std::invalid_argument("compute_metrics: mask length mismatch");
  MetricsReport m;
  std::int64_t n = 0;
  double se = 0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double p = pred.data()[i], t = gt.data()[i];
    if (!(p > 0) || !(t > 0))
      throw std::invalid_argument("compute_metrics: non-positive depth under mask");
    ++n;
    const double ratio = std::max(p / t, t / p);
    if (ratio < 1.25) ++m.delta1;
    if (ratio < 1.25 * 1.25) ++m.delta2;
    if (ratio < 1.25 * 1.25 * 1.25) ++m.delta3;
    m.rel += std::abs(p - t) / t;
    se += (p - t) * (p - t);
    m.log10 += std::abs(std::log10(p) - std::log10(t));
  }
  if (n == 0) throw std::invalid_argument("compute_metrics: empty mask");
  const double dn = static_cast<double>(n);
  m.delta1 /= dn;
  m.delta2 /= dn;
  m.delta3 /= dn;
  m.rel /= dn;
  m.log10 /= dn;
  m.rms = std::sqrt(se / dn);
  return m;
}

std::vector<double> nearest_center_locality(const std::vector<double>& centers,
                                            const std::vector<std::vector<double>>& window_sets) {
  if (centers.empty()) throw std::invalid_argument("nearest_center_locality: no centers");
  std::vector<double> sorted(centers);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  for (const auto& ws : window_sets) {
    if (ws.empty()) throw std::invalid_argument("nearest_center_locality: empty window");
    double acc = 0;
    for (double d : ws) {
      auto it = std::lower_bound(sorted.begin(), sorted.end(), d);
      double best = std::numeric_limits<double>::infinity();
      if (it != sorted.end()) best = std::min(best, std::abs(*it - d));
      if (it != sorted.begin()) best = std::min(best, std::abs(*(it - 1) - d));
      acc += best;
    }
    out.push_back(acc / static_cast<double>(ws.size()));
  }
  return out;
}

DensityCurve bin_density_profile(const std::vector<double>& centers, const DepthRange& range,
                                 double bandwidth) {
  if (centers.empty()) throw std::invalid_argument("bin_density_profile: empty centers");
  if (!(bandwidth > 0)) throw std::invalid_argument("bin_density_profile: bandwidth must be > 0");
  constexpr int kGrid = 256;
  DensityCurve c;
  c.depth.resize(kGrid);
  c.density.resize(kGrid);
  const double norm =
      1.0 / (static_cast<double>(centers.size()) * bandwidth * std::sqrt(2.0 * M_PI));
  for (int i = 0; i < kGrid; ++i) {
    const double x = range.d_min + (range.d_max - range.d_min) *
                                       (static_cast<double>(i) / (kGrid - 1));
    double acc = 0;
    for (double m : centers) {
      const double z = (x - m) / bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    c.depth[static_cast<std::size_t>(i)] = x;
    c.density[static_cast<std::size_t>(i)] = acc * norm;
  }
  return c;
}

}  // namespace localbins
