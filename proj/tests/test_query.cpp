#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "localbins/query.hpp"

using namespace localbins;

TEST_CASE("scaled_box_sizes") {
  const std::vector<std::int64_t> base = {3, 7, 15, 31, 63};
  // identity at the reference resolution (all already odd)
  CHECK(scaled_box_sizes(480, 640, base) == base);
  // desk scale: min extent 64 -> factor 2/15, nearest odd with floor 3
  CHECK(scaled_box_sizes(64, 64, base) == std::vector<std::int64_t>{3, 3, 3, 5, 9});
  // factor uses min(H, W)
  CHECK(scaled_box_sizes(64, 480, base) == std::vector<std::int64_t>{3, 3, 3, 5, 9});
  // results are always odd and >= 3
  for (auto s : scaled_box_sizes(200, 200, base)) {
    CHECK(s >= 3);
    CHECK(s % 2 == 1);
  }
}

TEST_CASE("generate_queries layout and bounds") {
  std::mt19937_64 rng(17);
  const std::vector<std::int64_t> sizes = {3, 5, 9};
  QuerySet qs = generate_queries(rng, 32, 48, sizes, 50);
  CHECK(qs.boxes_per_class == 50);
  REQUIRE(qs.boxes.size() == 150);
  for (std::size_t i = 0; i < qs.boxes.size(); ++i) {
    const BoxQuery& b = qs.boxes[i];
    // class-major grouping
    CHECK(b.size_class == static_cast<int>(i / 50));
    const double s = static_cast<double>(sizes[static_cast<std::size_t>(b.size_class)]);
    CHECK(b.x1 - b.x0 == s);
    CHECK(b.y1 - b.y0 == s);
    CHECK(b.x0 >= 0);
    CHECK(b.y0 >= 0);
    CHECK(b.x1 <= 48);
    CHECK(b.y1 <= 32);
  }
  CHECK_THROWS_AS(generate_queries(rng, 8, 8, {9}, 1), std::invalid_argument);

  // same seed, same boxes
  std::mt19937_64 r1(5), r2(5);
  QuerySet a = generate_queries(r1, 32, 48, sizes, 10);
  QuerySet b = generate_queries(r2, 32, 48, sizes, 10);
  for (std::size_t i = 0; i < a.boxes.size(); ++i) {
    CHECK(a.boxes[i].x0 == b.boxes[i].x0);
    CHECK(a.boxes[i].y0 == b.boxes[i].y0);
  }
}

TEST_CASE("extract_gt_depths") {
  // 4x4 depth map with row-major values 0..15
  std::vector<double> vals(16);
  for (int i = 0; i < 16; ++i) vals[static_cast<std::size_t>(i)] = i;
  Tensor depth({1, 1, 4, 4}, vals);
  std::vector<std::uint8_t> mask(16, 1);
  std::mt19937_64 rng(1);

  SUBCASE("full containment") {
    BoxQuery b{1.0, 1.0, 3.0, 3.0, 0};
    auto got = extract_gt_depths(depth, mask, b, 0, rng);
    std::sort(got.begin(), got.end());
    CHECK(got == std::vector<double>{5, 6, 9, 10});
  }
  SUBCASE("mask filters pixels") {
    mask[5] = 0;
    BoxQuery b{1.0, 1.0, 3.0, 3.0, 0};
    auto got = extract_gt_depths(depth, mask, b, 0, rng);
    std::sort(got.begin(), got.end());
    CHECK(got == std::vector<double>{6, 9, 10});
  }
  SUBCASE("fully masked box is rejected (empty)") {
    std::fill(mask.begin(), mask.end(), 0);
    BoxQuery b{0.0, 0.0, 4.0, 4.0, 0};
    CHECK(extract_gt_depths(depth, mask, b, 0, rng).empty());
  }
  SUBCASE("cap subsamples without replacement") {
    BoxQuery b{0.0, 0.0, 4.0, 4.0, 0};
    auto got = extract_gt_depths(depth, mask, b, 6, rng);
    REQUIRE(got.size() == 6);
    std::set<double> uniq(got.begin(), got.end());
    CHECK(uniq.size() == 6);  // sampled distinct pixels
    for (double v : got) CHECK((v >= 0 && v <= 15));
  }
  SUBCASE("mask length validation") {
    std::vector<std::uint8_t> bad(15, 1);
    BoxQuery b{0.0, 0.0, 2.0, 2.0, 0};
    CHECK_THROWS_AS(extract_gt_depths(depth, bad, b, 0, rng), std::invalid_argument);
  }
}

TEST_CASE("query path emits normalized widths per level") {
  ParamStore store;
  std::mt19937_64 rng(23);
  const int n = 2, n_seed = 2;
  auto bp = make_backbone(store, rng, n, n_seed, 4, 8);
  LocalBinsConfig cfg;
  cfg.n_seed = n_seed;
  cfg.n_levels = n;
  cfg.embed_dim = 8;
  cfg.hidden_embed = 8;
  cfg.hidden_seed = 8;
  cfg.hidden_split = 8;
  std::vector<std::int64_t> dec_ch;
  for (const auto& d : bp.dec) dec_ch.push_back(d.w.dim(0));
  auto lp = make_localbins(store, rng, cfg, bp.bottleneck_channels(), dec_ch);

  Tensor img = uniform_tensor<double>(rng, {2, 3, 16, 16}, 0.0, 1.0);
  auto pyr = encode_decode(img, bp);

  QueryBatch qb;
  qb.boxes.push_back({0, 2.0, 2.0, 7.0, 7.0});
  qb.boxes.push_back({1, 0.0, 0.0, 16.0, 16.0});
  qb.boxes.push_back({1, 5.0, 3.0, 10.0, 8.0});
  qb.size_class = {1, 2, 1};
  auto widths = query_bins_batch(pyr, lp, qb, 16, 16);

  REQUIRE(widths.size() == static_cast<std::size_t>(n + 1));
  for (int level = 0; level <= n; ++level) {
    const Tensor& w = widths[static_cast<std::size_t>(level)];
    REQUIRE(w.shape() == Shape{3, (std::int64_t{1} << level) * n_seed});
    for (std::int64_t row = 0; row < 3; ++row) {
      double sum = 0;
      for (std::int64_t c = 0; c < w.dim(1); ++c) {
        const double v = w.data()[row * w.dim(1) + c];
        CHECK(v > 0.0);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  // single-box contract agrees with the matching batch row
  BoxQuery single{2.0, 2.0, 7.0, 7.0, 1};
  BoxResponse r = query_bins(pyr, lp, single, 16, 16);
  REQUIRE(r.widths_per_level.size() == static_cast<std::size_t>(n + 1));
  for (int level = 0; level <= n; ++level) {
    const Tensor& w = widths[static_cast<std::size_t>(level)];
    const auto& row = r.widths_per_level[static_cast<std::size_t>(level)];
    REQUIRE(static_cast<std::int64_t>(row.size()) == w.dim(1));
    for (std::int64_t c = 0; c < w.dim(1); ++c)
      CHECK(row[static_cast<std::size_t>(c)] ==
            doctest::Approx(w.data()[c]).epsilon(1e-12));
  }
}

TEST_CASE("coverage_report counts covered pixels once") {
  QuerySet qs;
  qs.sizes = {2};
  qs.boxes_per_class = 2;
  // two overlapping 2x2 boxes on a 4x4 image: union covers 6 pixels
  qs.boxes.push_back({0.0, 0.0, 2.0, 2.0, 0});
  qs.boxes.push_back({1.0, 1.0, 3.0, 3.0, 0});
  auto rep = coverage_report(qs, 4, 4);
  CHECK(rep.psci == 2);
  CHECK(rep.px_covered == 7);  // 4 + 4 - 1 shared
  CHECK(rep.coverage_pct == doctest::Approx(100.0 * 7.0 / 16.0));
}

TEST_CASE("naive targets sample valid centers and collect windows") {
  std::vector<double> vals(36);
  for (int i = 0; i < 36; ++i) vals[static_cast<std::size_t>(i)] = 0.1 * i;
  Tensor depth({1, 1, 6, 6}, vals);
  std::vector<std::uint8_t> mask(36, 1);
  mask[0] = 0;  // invalidate one pixel
  std::mt19937_64 rng(3);
  auto targets = naive_subsample_targets(depth, mask, 3, 40, rng);
  REQUIRE(targets.size() == 40);
  for (const auto& t : targets) {
    CHECK(mask[static_cast<std::size_t>(t.pixel.y * 6 + t.pixel.x)] == 1);
    CHECK_FALSE(t.gt_depths.empty());
    CHECK(t.gt_depths.size() <= 9);
    for (double v : t.gt_depths) {
      CHECK(v >= 0.0);
      CHECK(v <= 3.5);
    }
  }
  // interior center away from the masked pixel keeps the full 3x3 window
  std::mt19937_64 r2(3);
  auto again = naive_subsample_targets(depth, mask, 3, 40, r2);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(again[i].pixel.y == targets[i].pixel.y);
    CHECK(again[i].pixel.x == targets[i].pixel.x);
  }
  CHECK_THROWS_AS(naive_subsample_targets(depth, mask, 4, 1, rng), std::invalid_argument);
  std::fill(mask.begin(), mask.end(), 0);
  CHECK(naive_subsample_targets(depth, mask, 3, 5, rng).empty());
}
