#include "localbins/query.hpp"

namespace localbins {

std::vector<std::int64_t> scaled_box_sizes(std::int64_t h, std::int64_t w,
                                           const std::vector<std::int64_t>& base_sizes) {
  const double f = static_cast<double>(std::min(h, w)) / 480.0;
  std::vector<std::int64_t> out;
  for (auto s : base_sizes) {
    std::int64_t v = static_cast<std::int64_t>(std::llround(static_cast<double>(s) * f));
    if (v % 2 == 0) ++v;  // nearest odd, rounding up on ties
    out.push_back(std::max<std::int64_t>(v, 3));
  }
  return out;
}

QuerySet generate_queries(std::mt19937_64& rng, std::int64_t h, std::int64_t w,
                          const std::vector<std::int64_t>& sizes, std::int64_t m) {
  QuerySet qs;
  qs.sizes = sizes;
  qs.boxes_per_class = m;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const std::int64_t s = sizes[k];
    if (s > std::min(h, w))
      throw std::invalid_argument("generate_queries: box size " + std::to_string(s) +
                                  " exceeds image extent");
    std::uniform_int_distribution<std::int64_t> dx(0, w - s), dy(0, h - s);
    for (std::int64_t i = 0; i < m; ++i) {
      BoxQuery b;
      b.x0 = static_cast<double>(dx(rng));
      b.y0 = static_cast<double>(dy(rng));
      b.x1 = b.x0 + static_cast<double>(s);
      b.y1 = b.y0 + static_cast<double>(s);
      b.size_class = static_cast<int>(k);
      qs.boxes.push_back(b);
    }
  }
  return qs;
}

std::vector<double> extract_gt_depths(const Tensor& depth, const std::vector<std::uint8_t>& mask,
                                      const BoxQuery& box, std::int64_t cap,
                                      std::mt19937_64& rng) {
  const std::int64_t h = depth.dim(depth.rank() - 2), w = depth.dim(depth.rank() - 1);
  if (static_cast<std::int64_t>(mask.size()) != h * w)
    throw std::invalid_argument("extract_gt_depths: mask length mismatch");
  std::vector<double> vals;
  const std::int64_t y0 = static_cast<std::int64_t>(std::ceil(box.y0 - 0.5));
  const std::int64_t y1 = static_cast<std::int64_t>(std::ceil(box.y1 - 0.5));
  const std::int64_t x0 = static_cast<std::int64_t>(std::ceil(box.x0 - 0.5));
  const std::int64_t x1 = static_cast<std::int64_t>(std::ceil(box.x1 - 0.5));
  for (std::int64_t y = std::max<std::int64_t>(y0, 0); y < std::min(y1, h); ++y)
    for (std::int64_t x = std::max<std::int64_t>(x0, 0); x < std::min(x1, w); ++x)
      if (mask[static_cast<std::size_t>(y * w + x)])
        vals.push_back(depth.data()[y * w + x]);
  if (cap > 0 && static_cast<std::int64_t>(vals.size()) > cap) {
    // partial Fisher-Yates: the first `cap` entries become a uniform sample
    for (std::int64_t i = 0; i < cap; ++i) {
      std::uniform_int_distribution<std::int64_t> d(i, static_cast<std::int64_t>(vals.size()) - 1);
      std::swap(vals[static_cast<std::size_t>(i)], vals[static_cast<std::size_t>(d(rng))]);
    }
    vals.resize(static_cast<std::size_t>(cap));
  }
  return vals;
}

std::vector<Tensor> query_bins_batch(const PyramidFeatures& pyr, const LocalBinsParams& p,
                                     const QueryBatch& batch, std::int64_t image_h,
                                     std::int64_t image_w) {
  Tensor pooled = roi_avg_pool_rows(pyr.bottleneck, batch.boxes, image_h, image_w);
  BinState state = seed_bins(embed_bins(pooled, p, -1), p);
  std::vector<Tensor> widths;
  widths.push_back(state.widths);
  for (int k = 1; k <= p.cfg.n_levels; ++k) {
    Tensor rows =
        roi_avg_pool_rows(pyr.decoder[static_cast<std::size_t>(k - 1)], batch.boxes, image_h,
                          image_w);
    Tensor ek = embed_bins(rows, p, k - 1);
    state = split_bins(state, ek, p);
    widths.push_back(state.widths);
  }
  return widths;
}

BoxResponse query_bins(const PyramidFeatures& pyr, const LocalBinsParams& p, const BoxQuery& box,
                       std::int64_t image_h, std::int64_t image_w) {
  QueryBatch qb;
  qb.boxes.push_back({0, box.x0, box.y0, box.x1, box.y1});
  qb.size_class.push_back(box.size_class);
  BoxResponse r;
  NoGrad ng;
  for (const Tensor& wt : query_bins_batch(pyr, p, qb, image_h, image_w))
    r.widths_per_level.emplace_back(wt.values());
  return r;
}

CoverageReport coverage_report(const QuerySet& qs, std::int64_t h, std::int64_t w) {
  CoverageReport rep;
  rep.psci = static_cast<std::int64_t>(qs.boxes.size());
  std::vector<std::uint8_t> covered(static_cast<std::size_t>(h * w), 0);
  for (const auto& b : qs.boxes) {
    const std::int64_t y0 = std::max<std::int64_t>(static_cast<std::int64_t>(std::ceil(b.y0 - 0.5)), 0);
    const std::int64_t y1 = std::min<std::int64_t>(static_cast<std::int64_t>(std::ceil(b.y1 - 0.5)), h);
    const std::int64_t x0 = std::max<std::int64_t>(static_cast<std::int64_t>(std::ceil(b.x0 - 0.5)), 0);
    const std::int64_t x1 = std::min<std::int64_t>(static_cast<std::int64_t>(std::ceil(b.x1 - 0.5)), w);
    for (std::int64_t y = y0; y < y1; ++y)
      for (std::int64_t x = x0; x < x1; ++x) covered[static_cast<std::size_t>(y * w + x)] = 1;
  }
  for (auto v : covered) rep.px_covered += v;
  rep.coverage_pct = 100.0 * static_cast<double>(rep.px_covered) / static_cast<double>(h * w);
  return rep;
}

std::vector<NaiveTarget> naive_subsample_targets(const Tensor& depth,
                                                 const std::vector<std::uint8_t>& mask,
                                                 int window, std::int64_t n_locations,
                                                 std::mt19937_64& rng) {
  if (window % 2 == 0) throw std::invalid_argument("naive_subsample_targets: window must be odd");
  const std::int64_t h = depth.dim(depth.rank() - 2), w = depth.dim(depth.rank() - 1);
  std::vector<std::int64_t> valid;
  for (std::int64_t i = 0; i < h * w; ++i)
    if (mask[static_cast<std::size_t>(i)]) valid.push_back(i);
  std::vector<NaiveTarget> out;
  if (valid.empty()) return out;
  std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
  const std::int64_t r = window / 2;
  for (std::int64_t i = 0; i < n_locations; ++i) {
    const std::int64_t idx = valid[pick(rng)];
    const std::int64_t cy = idx / w, cx = idx % w;
    NaiveTarget t;
    t.pixel = {0, cy, cx};
    for (std::int64_t y = std::max<std::int64_t>(cy - r, 0); y <= std::min(cy + r, h - 1); ++y)
      for (std::int64_t x = std::max<std::int64_t>(cx - r, 0); x <= std::min(cx + r, w - 1); ++x)
        if (mask[static_cast<std::size_t>(y * w + x)])
          t.gt_depths.push_back(depth.data()[y * w + x]);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace localbins
