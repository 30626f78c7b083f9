#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "localbins/nn.hpp"
#include "localbins/roi.hpp"

using namespace localbins;
using Tensor = TensorT<double>;

TEST_CASE("conv2d all-ones oracle") {
  // 3x3 ones kernel over a 3x3 ones image, pad 1: corners see 4 cells,
  // edges 6, center 9.
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, k, 1, 1);
  const double expect[9] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
  for (int i = 0; i < 9; ++i) CHECK(y.data()[i] == doctest::Approx(expect[i]));
}

TEST_CASE("conv2d shapes, stride and validation") {
  Tensor x({2, 3, 8, 8});
  Tensor k({5, 3, 3, 3});
  Tensor y = conv2d(x, k, 2, 1);
  CHECK(y.shape() == Shape{2, 5, 4, 4});
  CHECK_THROWS_AS(conv2d(x, Tensor({5, 4, 3, 3}), 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, Tensor({5, 3, 2, 2}), 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, k, 0, 1), std::invalid_argument);
}

TEST_CASE("conv2d matches direct cross-correlation on random input") {
  std::mt19937_64 rng(3);
  Tensor x = uniform_tensor<double>(rng, {1, 2, 5, 5}, -1.0, 1.0);
  Tensor k = uniform_tensor<double>(rng, {3, 2, 3, 3}, -1.0, 1.0);
  Tensor y = conv2d(x, k, 1, 1);
  for (std::int64_t co = 0; co < 3; ++co)
    for (std::int64_t i = 0; i < 5; ++i)
      for (std::int64_t j = 0; j < 5; ++j) {
        double acc = 0;
        for (std::int64_t ci = 0; ci < 2; ++ci)
          for (std::int64_t a = -1; a <= 1; ++a)
            for (std::int64_t b = -1; b <= 1; ++b) {
              std::int64_t yy = i + a, xx = j + b;
              if (yy < 0 || yy >= 5 || xx < 0 || xx >= 5) continue;
              acc += x.data()[(ci * 5 + yy) * 5 + xx] *
                     k.data()[((co * 2 + ci) * 3 + a + 1) * 3 + b + 1];
            }
        CHECK(y.data()[(co * 5 + i) * 5 + j] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("conv2d gradient") {
  std::mt19937_64 rng(7);
  Tensor x = uniform_tensor<double>(rng, {1, 2, 4, 4}, -1.0, 1.0);
  Tensor k = uniform_tensor<double>(rng, {2, 2, 3, 3}, -0.5, 0.5);
  x.set_requires_grad();
  k.set_requires_grad();
  auto f = [&]() { return sum_all(square(conv2d(x, k, 2, 1))); };
  auto rep = finite_diff_check<double>(f, {x, k}, 1e-6);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("linear_channels matches dense matmul on rows") {
  std::mt19937_64 rng(9);
  Tensor x = uniform_tensor<double>(rng, {4, 3}, -1.0, 1.0);
  Tensor w = uniform_tensor<double>(rng, {2, 3}, -1.0, 1.0);
  Tensor b({2}, {0.5, -0.25});
  Tensor y = linear_channels(x, w, b);
  for (std::int64_t r = 0; r < 4; ++r)
    for (std::int64_t c = 0; c < 2; ++c) {
      double acc = b.data()[c];
      for (std::int64_t i = 0; i < 3; ++i) acc += x.data()[r * 3 + i] * w.data()[c * 3 + i];
      CHECK(y.data()[r * 2 + c] == doctest::Approx(acc).epsilon(1e-12));
    }
  CHECK_THROWS_AS(linear_channels(Tensor({4, 5}), w, b), std::invalid_argument);
}

TEST_CASE("linear_channels on maps equals per-pixel row application") {
  std::mt19937_64 rng(13);
  Tensor x = uniform_tensor<double>(rng, {2, 3, 2, 2}, -1.0, 1.0);
  Tensor w = uniform_tensor<double>(rng, {4, 3}, -1.0, 1.0);
  Tensor b = uniform_tensor<double>(rng, {4}, -0.2, 0.2);
  Tensor y4 = linear_channels(x, w, b);
  for (std::int64_t s = 0; s < 2; ++s)
    for (std::int64_t p = 0; p < 4; ++p) {
      Tensor row({1, 3});
      for (std::int64_t c = 0; c < 3; ++c) row.data()[c] = x.data()[(s * 3 + c) * 4 + p];
      Tensor y2 = linear_channels(row, w, b);
      for (std::int64_t c = 0; c < 4; ++c)
        CHECK(y4.data()[(s * 4 + c) * 4 + p] == doctest::Approx(y2.data()[c]).epsilon(1e-12));
    }
}

TEST_CASE("linear_channels gradient (both ranks)") {
  std::mt19937_64 rng(17);
  Tensor x2 = uniform_tensor<double>(rng, {3, 4}, -1.0, 1.0);
  Tensor x4 = uniform_tensor<double>(rng, {2, 4, 2, 2}, -1.0, 1.0);
  Tensor w = uniform_tensor<double>(rng, {3, 4}, -1.0, 1.0);
  Tensor b = uniform_tensor<double>(rng, {3}, -0.2, 0.2);
  for (Tensor* t : {&x2, &x4, &w, &b}) t->set_requires_grad();
  auto f2 = [&]() { return sum_all(square(linear_channels(x2, w, b))); };
  CHECK(finite_diff_check<double>(f2, {x2, w, b}, 1e-6).max_rel_err < 1e-6);
  auto f4 = [&]() { return sum_all(square(linear_channels(x4, w, b))); };
  CHECK(finite_diff_check<double>(f4, {x4, w, b}, 1e-6).max_rel_err < 1e-6);
}

TEST_CASE("bilinear_upsample2x 2x2 oracle") {
  Tensor x({1, 1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
  Tensor y = bilinear_upsample2x(x);
  const double expect[16] = {0.0, 0.25, 0.75, 1.0, 0.5,  0.75, 1.25, 1.5,
                             1.5, 1.75, 2.25, 2.5, 2.0,  2.25, 2.75, 3.0};
  CHECK(y.shape() == Shape{1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) CHECK(y.data()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("bilinear_upsample2x preserves constants and is differentiable") {
  Tensor c = Tensor::full({1, 2, 3, 3}, 0.7);
  Tensor y = bilinear_upsample2x(c);
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(0.7));

  std::mt19937_64 rng(23);
  Tensor x = uniform_tensor<double>(rng, {1, 2, 3, 3}, -1.0, 1.0);
  x.set_requires_grad();
  auto f = [&]() { return sum_all(square(bilinear_upsample2x(x))); };
  CHECK(finite_diff_check<double>(f, {x}, 1e-6).max_rel_err < 1e-6);
}

TEST_CASE("softmax_channel oracle (1,2,3)") {
  Tensor x({1, 3}, {1.0, 2.0, 3.0});
  Tensor y = softmax_channel(x);
  CHECK(y.data()[0] == doctest::Approx(0.09003057).epsilon(1e-5));
  CHECK(y.data()[1] == doctest::Approx(0.24472847).epsilon(1e-5));
  CHECK(y.data()[2] == doctest::Approx(0.66524096).epsilon(1e-5));
  double s = y.data()[0] + y.data()[1] + y.data()[2];
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax_channel is shift-invariant and overflow-safe") {
  Tensor a({1, 2}, {1000.0, 1001.0});
  Tensor y = softmax_channel(a);
  CHECK(y.data()[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("softmax/normalize channel gradients") {
  std::mt19937_64 rng(29);
  Tensor x = uniform_tensor<double>(rng, {2, 3, 2, 2}, -1.0, 1.0);
  x.set_requires_grad();
  auto f = [&]() { return sum_all(square(softmax_channel(x))); };
  CHECK(finite_diff_check<double>(f, {x}, 1e-6).max_rel_err < 1e-6);

  Tensor p = uniform_tensor<double>(rng, {2, 4}, 0.1, 2.0);
  p.set_requires_grad();
  auto g = [&]() { return sum_all(square(normalize_channel(p))); };
  CHECK(finite_diff_check<double>(g, {p}, 1e-7).max_rel_err < 1e-5);
}

TEST_CASE("normalize_channel values and errors") {
  Tensor x({1, 4}, {1.0, 1.0, 2.0, 4.0});
  Tensor y = normalize_channel(x);
  CHECK(y.data()[0] == doctest::Approx(0.125));
  CHECK(y.data()[3] == doctest::Approx(0.5));
  Tensor z({1, 2}, {1.0, -1.0});
  CHECK_THROWS_AS(normalize_channel(z), std::runtime_error);
}

TEST_CASE("sum_channel / concat_channel / rows_slice / gather_pixels") {
  Tensor x({1, 2, 1, 2}, {1.0, 2.0, 10.0, 20.0});
  Tensor s = sum_channel(x);
  CHECK(s.shape() == Shape{1, 1, 1, 2});
  CHECK(s.data()[0] == 11.0);
  CHECK(s.data()[1] == 22.0);

  Tensor a({1, 1, 1, 2}, {1.0, 2.0}), b({1, 2, 1, 2}, {3.0, 4.0, 5.0, 6.0});
  Tensor cc = concat_channel(a, b);
  CHECK(cc.shape() == Shape{1, 3, 1, 2});
  CHECK(cc.data()[2] == 3.0);
  CHECK(cc.data()[5] == 6.0);
  CHECK_THROWS_AS(concat_channel(a, Tensor({1, 1, 2, 2})), std::invalid_argument);

  Tensor m({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor sl = rows_slice(m, 1, 3);
  CHECK(sl.shape() == Shape{2, 2});
  CHECK(sl.data()[0] == 3.0);
  CHECK_THROWS_AS(rows_slice(m, 2, 2), std::invalid_argument);

  Tensor g = gather_pixels(x, {{0, 0, 1}});
  CHECK(g.shape() == Shape{1, 2});
  CHECK(g.data()[0] == 2.0);
  CHECK(g.data()[1] == 20.0);
  CHECK_THROWS_AS(gather_pixels(x, {{0, 5, 0}}), std::invalid_argument);
}

TEST_CASE("structural op gradients") {
  std::mt19937_64 rng(31);
  Tensor x = uniform_tensor<double>(rng, {1, 3, 2, 2}, -1.0, 1.0);
  Tensor a = uniform_tensor<double>(rng, {1, 2, 2, 2}, -1.0, 1.0);
  x.set_requires_grad();
  a.set_requires_grad();
  auto f = [&]() { return sum_all(square(sum_channel(concat_channel(x, a)))); };
  CHECK(finite_diff_check<double>(f, {x, a}, 1e-6).max_rel_err < 1e-6);
  auto g = [&]() { return sum_all(square(gather_pixels(x, {{0, 1, 0}, {0, 0, 1}}))); };
  CHECK(finite_diff_check<double>(g, {x}, 1e-6).max_rel_err < 1e-6);
}

TEST_CASE("MLP spatial/flat parameter sharing") {
  std::mt19937_64 rng(37);
  auto mlp = MlpT<double>::kaiming(rng, 3, 8, 2);
  Tensor x = uniform_tensor<double>(rng, {1, 3, 2, 2}, -1.0, 1.0);
  Tensor y4 = mlp.apply(x);
  CHECK(y4.shape() == Shape{1, 2, 2, 2});
  // pixel (1,1) as a flat row
  Tensor row({1, 3});
  for (std::int64_t c = 0; c < 3; ++c) row.data()[c] = x.data()[c * 4 + 3];
  Tensor y2 = mlp.apply(row);
  for (std::int64_t c = 0; c < 2; ++c)
    CHECK(y4.data()[c * 4 + 3] == doctest::Approx(y2.data()[c]).epsilon(1e-12));
  CHECK(mlp.in_channels() == 3);
  CHECK(mlp.out_channels() == 2);
}

TEST_CASE("roi_avg_pool_rows: constant map pools to the constant") {
  Tensor feat = Tensor::full({2, 3, 4, 4}, 2.5);
  std::vector<RoiBox> boxes = {{0, 1.0, 1.0, 9.0, 5.0}, {1, 0.0, 0.0, 16.0, 16.0}};
  Tensor rows = roi_avg_pool_rows(feat, boxes, 16, 16);
  CHECK(rows.shape() == Shape{2, 3});
  for (std::int64_t i = 0; i < rows.size(); ++i)
    CHECK(rows.data()[i] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("roi_avg_pool_rows: full-image box with dense sampling averages the map") {
  std::mt19937_64 rng(41);
  Tensor feat = uniform_tensor<double>(rng, {1, 1, 4, 4}, 0.0, 1.0);
  std::vector<RoiBox> boxes = {{0, 0.0, 0.0, 4.0, 4.0}};
  Tensor rows = roi_avg_pool_rows(feat, boxes, 4, 4, 0);  // dense: 4x4 grid at stride 1
  double mean = 0;
  for (std::int64_t i = 0; i < 16; ++i) mean += feat.data()[i];
  mean /= 16.0;
  CHECK(rows.data()[0] == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("roi_avg_pool_rows validation and gradient") {
  Tensor feat = Tensor::full({1, 1, 4, 4}, 1.0);
  CHECK_THROWS_AS(roi_avg_pool_rows(feat, {{0, -1.0, 0.0, 4.0, 4.0}}, 16, 16),
                  std::invalid_argument);
  CHECK_THROWS_AS(roi_avg_pool_rows(feat, {{2, 0.0, 0.0, 4.0, 4.0}}, 16, 16),
                  std::invalid_argument);
  CHECK_THROWS_AS(roi_avg_pool_rows(feat, {{0, 0.0, 0.0, 4.0, 4.0}}, 15, 16),
                  std::invalid_argument);

  std::mt19937_64 rng(43);
  Tensor f2 = uniform_tensor<double>(rng, {1, 2, 4, 4}, -1.0, 1.0);
  f2.set_requires_grad();
  std::vector<RoiBox> boxes = {{0, 2.0, 3.0, 11.0, 12.0}, {0, 0.0, 0.0, 16.0, 16.0}};
  auto fn = [&]() { return sum_all(square(roi_avg_pool_rows(f2, boxes, 16, 16))); };
  CHECK(finite_diff_check<double>(fn, {f2}, 1e-6).max_rel_err < 1e-6);
}
