// SPDX-License-Identifier: Apache-2.0
//
// Pixel decoder: dot-product mask head over the re-weighted grounding
// features, followed by learned transposed-convolution upsampling.

#pragma once

#include "unires/geometry.hpp"
#include "unires/mgfe.hpp"
#include "unires/nn.hpp"

#include <cmath>

namespace unires {

struct DecoderConfig {
  int grid_h = 16, grid_w = 16;  // grounding feature grid
  int upsample_factor = 4;       // output resolution = grid * factor
  long channels = 64;            // C, the grounding feature dim
  long seg_dim = 128;            // D, the sequence-model hidden dim
};

struct MaskLogits {
  int height = 0, width = 0;
  Mat values;
  ad::Var var;  // tape handle for the training path
};

// Bilinear-tent initialization for the upsampling kernel (size 2f).
inline Mat tent_kernel(int f) {
  int k = 2 * f;
  Mat ker(k, k);
  for (int dy = 0; dy < k; ++dy)
    for (int dx = 0; dx < k; ++dx) {
      double wy = 1.0 - std::abs((dy + 0.5) - f) / f;
      double wx = 1.0 - std::abs((dx + 0.5) - f) / f;
      ker(dy, dx) = wy * wx;
    }
  return ker;
}

// Per-patch logit = <project(seg_embedding), f_r patch> / sqrt(C), reshaped
// to the grounding grid and upsampled by a learned transposed convolution.
inline MaskLogits decode(Ctx& ctx, ad::Var f_r, ad::Var seg_embedding,
                         const DecoderConfig& cfg) {
  if (f_r.cols() != cfg.channels)
    throw invalid_state_error("decode: grounding feature dim mismatch");
  if (seg_embedding.cols() != cfg.seg_dim)
    throw invalid_state_error("decode: seg embedding dim mismatch");
  if (f_r.rows() != static_cast<long>(cfg.grid_h) * cfg.grid_w)
    throw invalid_state_error("decode: grounding grid mismatch");

  ad::Var kernel_w = nn::linear(ctx, seg_embedding, "dec.segproj", cfg.seg_dim,
                                cfg.channels);                       // 1 x C
  ad::Var patch_logits = ad::scale(ad::mm(f_r, ad::transpose(kernel_w)),
                                   1.0 / std::sqrt(static_cast<double>(cfg.channels)));

  // reshape the (grid_h*grid_w) x 1 column into the grid, row-major
  std::vector<ad::Var> rows;
  rows.reserve(cfg.grid_h);
  for (int gy = 0; gy < cfg.grid_h; ++gy)
    rows.push_back(ad::transpose(
        ad::slice_rows(patch_logits, static_cast<long>(gy) * cfg.grid_w, cfg.grid_w)));
  ad::Var grid = ad::concat_rows(rows);  // grid_h x grid_w

  int f = cfg.upsample_factor;
  ctx.store->ensure_value("dec.upk", tent_kernel(f));
  ctx.store->ensure_value("dec.upb", Mat::Zero(1, 1));
  ad::Var logits =
      ad::tconv2d(grid, ctx.param("dec.upk"), ctx.param("dec.upb"), f, f / 2);

  MaskLogits out;
  out.height = cfg.grid_h * f;
  out.width = cfg.grid_w * f;
  out.values = logits.val();
  out.var = logits;
  return out;
}

// pixel = 1 iff sigmoid(logit) > threshold (strict).
inline BinaryMask binarize(const MaskLogits& logits, double threshold = 0.5) {
  BinaryMask mask(logits.height, logits.width);
  for (int r = 0; r < logits.height; ++r)
    for (int c = 0; c < logits.width; ++c) {
      double p = 1.0 / (1.0 + std::exp(-logits.values(r, c)));
      mask.at(r, c) = p > threshold ? 1 : 0;
    }
  return mask;
}

}  // namespace unires
