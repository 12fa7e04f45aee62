// SPDX-License-Identifier: Apache-2.0

#include "unires/geometry.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace unires;

TEST_CASE("normalize_box maps full-image boxes to (0,0),(999,999)") {
  for (auto [w, h] : {std::pair{64, 64}, {640, 480}, {1, 1}, {1024, 768}}) {
    BoundingBox b{0, 0, static_cast<double>(w), static_cast<double>(h)};
    BoundingBox n = normalize_box(b, w, h);
    CHECK(n.x0 == 0);
    CHECK(n.y0 == 0);
    CHECK(n.x1 == 999);
    CHECK(n.y1 == 999);
    CHECK(n.space == CoordSpace::NORM999);
  }
}

TEST_CASE("normalize_box rounding is half-up") {
  // 250/500*999 = 499.5 -> 500
  BoundingBox b{0, 0, 250, 250};
  BoundingBox n = normalize_box(b, 500, 500);
  CHECK(n.x1 == 500);
  CHECK(n.y1 == 500);
  CHECK(n.x0 == 0);
}

TEST_CASE("normalize_box is idempotent on NORM999 input") {
  BoundingBox b{10, 20, 30, 40, CoordSpace::NORM999};
  BoundingBox n = normalize_box(b, 100, 100);
  CHECK(n.x0 == 10);
  CHECK(n.y1 == 40);
}

TEST_CASE("normalize_box rejects degenerate image size") {
  BoundingBox b{0, 0, 1, 1};
  CHECK_THROWS_AS(normalize_box(b, 0, 10), invalid_input_error);
}

TEST_CASE("normalize_box is monotone in each coordinate") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 100);
  for (int i = 0; i < 200; ++i) {
    double a = u(rng), d = u(rng);
    double lo = std::min(a, d), hi = std::max(a, d);
    BoundingBox b1{0, 0, lo, 50};
    BoundingBox b2{0, 0, hi, 50};
    CHECK(normalize_box(b1, 100, 100).x1 <= normalize_box(b2, 100, 100).x1);
  }
}

TEST_CASE("rle codec hand-traced examples") {
  SECTION("empty 2x2 -> [4]") {
    BinaryMask m(2, 2);
    auto rle = rle_encode(m);
    CHECK(rle.counts == std::vector<long>{4});
  }
  SECTION("full 2x2 -> [0,4]") {
    BinaryMask m(2, 2);
    for (auto& b : m.bits) b = 1;
    auto rle = rle_encode(m);
    CHECK(rle.counts == std::vector<long>{0, 4});
  }
  SECTION("single pixel (0,0) of 2x2 -> [0,1,3] (column-major)") {
    BinaryMask m(2, 2);
    m.at(0, 0) = 1;
    auto rle = rle_encode(m);
    CHECK(rle.counts == std::vector<long>{0, 1, 3});
  }
}

TEST_CASE("rle_decode rejects bad counts") {
  RleMask rle;
  rle.height = 2;
  rle.width = 2;
  rle.counts = {3};
  CHECK_THROWS_AS(rle_decode(rle), corrupt_mask_error);
}

TEST_CASE("rle round-trip exact on random masks") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    std::uniform_int_distribution<int> dim(1, 64);
    BinaryMask m(dim(rng), dim(rng));
    std::bernoulli_distribution bit(0.3);
    for (auto& b : m.bits) b = bit(rng) ? 1 : 0;
    CHECK(rle_decode(rle_encode(m)) == m);
  }
}

TEST_CASE("mask_iou basics") {
  BinaryMask a(2, 2), b(2, 2);
  a.at(0, 0) = a.at(0, 1) = 1;
  b.at(0, 1) = b.at(1, 1) = 1;
  CHECK(mask_iou(a, b) == Catch::Approx(1.0 / 3.0));
  CHECK(mask_iou(a, a) == 1.0);
  BinaryMask empty(2, 2);
  CHECK(mask_iou(a, empty) == 0.0);
  CHECK(mask_iou(empty, empty) == 1.0);  // both-empty convention
  BinaryMask wrong(3, 2);
  CHECK_THROWS_AS(mask_iou(a, wrong), invalid_input_error);
}

TEST_CASE("mask_iou is symmetric") {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution bit(0.4);
  for (int i = 0; i < 50; ++i) {
    BinaryMask a(8, 8), b(8, 8);
    for (auto& x : a.bits) x = bit(rng);
    for (auto& x : b.bits) x = bit(rng);
    CHECK(mask_iou(a, b) == mask_iou(b, a));
  }
}

TEST_CASE("roi_align of a constant map is the constant") {
  FeatureMap fm;
  fm.grid_h = fm.grid_w = 4;
  fm.channels = 3;
  fm.stride = 16;
  fm.values = Mat::Constant(16, 3, 3.5);
  BoundingBox box{5, 5, 50, 40};
  FeatureMap out = roi_align(fm, box, 2, 2, 2);
  CHECK((out.values.array() - 3.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("roi_align matches a direct bilinear oracle for a centered box") {
  FeatureMap fm;
  fm.grid_h = fm.grid_w = 2;
  fm.channels = 1;
  fm.stride = 16;  // extent 32x32
  fm.values = Mat(4, 1);
  fm.values << 1.0, 2.0, 3.0, 4.0;
  // full-extent box, 1x1 output, 1 sample -> sample at the box center (16,16)
  BoundingBox box{0, 0, 32, 32};
  FeatureMap out = roi_align(fm, box, 1, 1, 1);
  // grid coords (0.5,0.5): bilinear average of all four cells
  CHECK(out.values(0, 0) == Catch::Approx(2.5));
}

TEST_CASE("roi_align rejects degenerate boxes") {
  FeatureMap fm;
  fm.grid_h = fm.grid_w = 2;
  fm.channels = 1;
  fm.stride = 16;
  fm.values = Mat::Zero(4, 1);
  CHECK_THROWS_AS(roi_align(fm, BoundingBox{5, 5, 5, 10}, 1, 1, 1), invalid_input_error);
  CHECK_THROWS_AS(roi_align(fm, BoundingBox{100, 100, 120, 120}, 1, 1, 1),
                  invalid_input_error);
}

TEST_CASE("roi_align is linear in the feature map") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  FeatureMap a, b;
  a.grid_h = a.grid_w = b.grid_h = b.grid_w = 4;
  a.channels = b.channels = 2;
  a.stride = b.stride = 8;
  a.values = Mat(16, 2);
  b.values = Mat(16, 2);
  for (long i = 0; i < 16; ++i)
    for (long j = 0; j < 2; ++j) {
      a.values(i, j) = g(rng);
      b.values(i, j) = g(rng);
    }
  BoundingBox box{3, 4, 28, 25};
  double alpha = 1.7, beta = -0.4;
  FeatureMap mix = a;
  mix.values = alpha * a.values + beta * b.values;
  Mat lhs = roi_align(mix, box, 3, 3, 2).values;
  Mat rhs = alpha * roi_align(a, box, 3, 3, 2).values +
            beta * roi_align(b, box, 3, 3, 2).values;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
}
