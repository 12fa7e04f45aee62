// SPDX-License-Identifier: Apache-2.0
//
// Geometric substrate: boxes, binary masks, the RLE codec, IoU and ROI Align.
// All operations here are pure functions over immutable inputs.

#pragma once

#include "unires/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace unires {

enum class CoordSpace { PIXEL, NORM999 };

struct BoundingBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  CoordSpace space = CoordSpace::PIXEL;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
};

struct BinaryMask {
  int height = 0, width = 0;
  std::vector<std::uint8_t> bits;  // row-major, values in {0,1}

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), bits(static_cast<size_t>(h) * w, 0) {}

  std::uint8_t& at(int r, int c) { return bits[static_cast<size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return bits[static_cast<size_t>(r) * width + c]; }

  long area() const {
    long n = 0;
    for (auto b : bits) n += b;
    return n;
  }
  bool empty_mask() const { return area() == 0; }

  bool operator==(const BinaryMask& o) const {
    return height == o.height && width == o.width && bits == o.bits;
  }
};

struct RleMask {
  int height = 0, width = 0;
  std::vector<long> counts;  // alternating bg/fg runs, column-major scan
};

enum class FeatureLevel { IMAGE, HIGHRES, OBJECT, PART, GROUNDING };

struct FeatureMap {
  int grid_h = 0, grid_w = 0;
  int channels = 0;
  Mat values;  // (grid_h*grid_w) x channels, rows in row-major grid order
  FeatureLevel level = FeatureLevel::IMAGE;
  double stride = 1.0;  // source-image pixels per grid cell

  int rows() const { return grid_h * grid_w; }
};

// round-half-up then clamp to [0,999]; NORM999 inputs pass through unchanged.
inline BoundingBox normalize_box(const BoundingBox& box, int img_w, int img_h) {
  if (box.space == CoordSpace::NORM999) return box;
  if (img_w < 1 || img_h < 1)
    throw invalid_input_error("normalize_box: degenerate image size");
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > img_w || box.y1 > img_h || box.x0 > box.x1 ||
      box.y0 > box.y1)
    throw invalid_input_error("normalize_box: box outside image extent");
  auto norm = [](double c, int size) {
    double v = std::floor(c / size * 999.0 + 0.5);
    return std::clamp(v, 0.0, 999.0);
  };
  BoundingBox out;
  out.x0 = norm(box.x0, img_w);
  out.y0 = norm(box.y0, img_h);
  out.x1 = norm(box.x1, img_w);
  out.y1 = norm(box.y1, img_h);
  out.space = CoordSpace::NORM999;
  return out;
}

// Column-major scan; counts alternate background/foreground starting with
// background (leading zero when the mask starts with foreground).
inline RleMask rle_encode(const BinaryMask& mask) {
  RleMask rle;
  rle.height = mask.height;
  rle.width = mask.width;
  std::uint8_t cur = 0;
  long run = 0;
  for (int c = 0; c < mask.width; ++c) {
    for (int r = 0; r < mask.height; ++r) {
      std::uint8_t b = mask.at(r, c) ? 1 : 0;
      if (b == cur) {
        ++run;
      } else {
        rle.counts.push_back(run);
        cur = b;
        run = 1;
      }
    }
  }
  if (run > 0 || rle.counts.empty()) rle.counts.push_back(run);
  return rle;
}

inline BinaryMask rle_decode(const RleMask& rle) {
  long total = 0;
  for (long c : rle.counts) {
    if (c < 0) throw corrupt_mask_error("rle_decode: negative count");
    total += c;
  }
  if (total != static_cast<long>(rle.height) * rle.width)
    throw corrupt_mask_error("rle_decode: counts do not sum to H*W");
  BinaryMask mask(rle.height, rle.width);
  long pos = 0;
  std::uint8_t val = 0;
  for (long count : rle.counts) {
    for (long i = 0; i < count; ++i) {
      int c = static_cast<int>(pos / rle.height);
      int r = static_cast<int>(pos % rle.height);
      mask.at(r, c) = val;
      ++pos;
    }
    val = 1 - val;
  }
  return mask;
}

// |a∩b| / |a∪b|; both-empty is defined as a perfect match (1.0).
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width)
    throw invalid_input_error("mask_iou: shape mismatch");
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    bool pa = a.bits[i], pb = b.bits[i];
    inter += (pa && pb);
    uni += (pa || pb);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline void intersection_union(const BinaryMask& a, const BinaryMask& b, long& inter,
                               long& uni) {
  if (a.height != b.height || a.width != b.width)
    throw invalid_input_error("intersection_union: shape mismatch");
  inter = 0;
  uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    bool pa = a.bits[i], pb = b.bits[i];
    inter += (pa && pb);
    uni += (pa || pb);
  }
}

// Sampling weights for ROI Align: out = W * fm.values, W is (out_h*out_w) x
// (grid_h*grid_w). Half-pixel-center continuous coordinates, bilinear samples
// averaged per bin, border clamping. Exposing the weights keeps the operation
// a plain matmul, so gradients flow through it without a dedicated op.
inline Mat roi_align_weights(int grid_h, int grid_w, double stride, const BoundingBox& box,
                             int out_h, int out_w, int samples_per_bin) {
  if (box.space != CoordSpace::PIXEL)
    throw invalid_input_error("roi_align: box must be in pixel space");
  if (box.width() <= 0 || box.height() <= 0)
    throw invalid_input_error("roi_align: zero-area box");
  double ext_w = grid_w * stride, ext_h = grid_h * stride;
  if (box.x1 <= 0 || box.y1 <= 0 || box.x0 >= ext_w || box.y0 >= ext_h)
    throw invalid_input_error("roi_align: box outside feature extent");
  if (out_h < 1 || out_w < 1 || samples_per_bin < 1)
    throw invalid_input_error("roi_align: invalid output configuration");

  Mat w = Mat::Zero(static_cast<long>(out_h) * out_w, static_cast<long>(grid_h) * grid_w);
  double bin_w = box.width() / out_w;
  double bin_h = box.height() / out_h;
  int s = samples_per_bin;
  double inv = 1.0 / (s * s);
  for (int by = 0; by < out_h; ++by) {
    for (int bx = 0; bx < out_w; ++bx) {
      long row = static_cast<long>(by) * out_w + bx;
      for (int sy = 0; sy < s; ++sy) {
        for (int sx = 0; sx < s; ++sx) {
          double px = box.x0 + (bx + (sx + 0.5) / s) * bin_w;
          double py = box.y0 + (by + (sy + 0.5) / s) * bin_h;
          // continuous grid coordinates, half-pixel centers
          double gx = px / stride - 0.5;
          double gy = py / stride - 0.5;
          gx = std::clamp(gx, 0.0, static_cast<double>(grid_w - 1));
          gy = std::clamp(gy, 0.0, static_cast<double>(grid_h - 1));
          int x0 = static_cast<int>(std::floor(gx));
          int y0 = static_cast<int>(std::floor(gy));
          int x1 = std::min(x0 + 1, grid_w - 1);
          int y1 = std::min(y0 + 1, grid_h - 1);
          double fx = gx - x0, fy = gy - y0;
          w(row, static_cast<long>(y0) * grid_w + x0) += (1 - fx) * (1 - fy) * inv;
          w(row, static_cast<long>(y0) * grid_w + x1) += fx * (1 - fy) * inv;
          w(row, static_cast<long>(y1) * grid_w + x0) += (1 - fx) * fy * inv;
          w(row, static_cast<long>(y1) * grid_w + x1) += fx * fy * inv;
        }
      }
    }
  }
  return w;
}

inline FeatureMap roi_align(const FeatureMap& fm, const BoundingBox& box, int out_h,
                            int out_w, int samples_per_bin = 2) {
  Mat w = roi_align_weights(fm.grid_h, fm.grid_w, fm.stride, box, out_h, out_w,
                            samples_per_bin);
  FeatureMap out;
  out.grid_h = out_h;
  out.grid_w = out_w;
  out.channels = fm.channels;
  out.values = w * fm.values;
  out.level = fm.level;
  out.stride = fm.stride;  // nominal; output bins no longer share the source stride
  return out;
}

}  // namespace unires
