// SPDX-License-Identifier: Apache-2.0
//
// Toy stand-ins for the frozen foundation encoders: a fixed-resolution
// low-res encoder, a variable-resolution high-res encoder (shared weights
// across resolutions) and a grounding encoder. All are patchify + linear
// projection + one residual attention block.

#pragma once

#include "unires/geometry.hpp"
#include "unires/nn.hpp"

#include <array>
#include <cmath>
#include <string>

namespace unires {

struct ImageTensor {
  int height = 0, width = 0;
  std::array<Mat, 3> chan;  // each height x width, values in [0,1]

  ImageTensor() = default;
  ImageTensor(int h, int w) : height(h), width(w) {
    for (auto& c : chan) c = Mat::Zero(h, w);
  }
};

inline ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
  ImageTensor out(out_h, out_w);
  for (int k = 0; k < 3; ++k) {
    for (int y = 0; y < out_h; ++y) {
      double sy = (y + 0.5) * img.height / out_h - 0.5;
      sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
      int y0 = static_cast<int>(std::floor(sy));
      int y1 = std::min(y0 + 1, img.height - 1);
      double fy = sy - y0;
      for (int x = 0; x < out_w; ++x) {
        double sx = (x + 0.5) * img.width / out_w - 0.5;
        sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
        int x0 = static_cast<int>(std::floor(sx));
        int x1 = std::min(x0 + 1, img.width - 1);
        double fx = sx - x0;
        out.chan[k](y, x) = (1 - fy) * ((1 - fx) * img.chan[k](y0, x0) +
                                        fx * img.chan[k](y0, x1)) +
                            fy * ((1 - fx) * img.chan[k](y1, x0) +
                                  fx * img.chan[k](y1, x1));
      }
    }
  }
  return out;
}

struct EncoderConfig {
  int input_res = 64;    // fixed for the low/grounding encoders, minimum for high
  int patch_stride = 16;
  int channels = 64;
  int depth = 1;
  std::uint64_t seed = 0;
};

namespace detail {

inline Mat patchify(const ImageTensor& img, int stride) {
  int gh = img.height / stride, gw = img.width / stride;
  int dim = stride * stride * 3;
  Mat patches(static_cast<long>(gh) * gw, dim);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      long row = static_cast<long>(gy) * gw + gx;
      long col = 0;
      for (int k = 0; k < 3; ++k)
        for (int dy = 0; dy < stride; ++dy)
          for (int dx = 0; dx < stride; ++dx)
            patches(row, col++) = img.chan[k](gy * stride + dy, gx * stride + dx);
    }
  return patches;
}

// 2D sinusoidal position features; resolution-independent, no parameters.
inline Mat sincos_position(int gh, int gw, int dim) {
  Mat pos = Mat::Zero(static_cast<long>(gh) * gw, dim);
  int quarter = dim / 4;
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      long row = static_cast<long>(gy) * gw + gx;
      for (int i = 0; i < quarter; ++i) {
        double freq = std::pow(100.0, -static_cast<double>(i) / quarter);
        pos(row, i) = std::sin(gy * freq);
        pos(row, quarter + i) = std::cos(gy * freq);
        pos(row, 2 * quarter + i) = std::sin(gx * freq);
        pos(row, 3 * quarter + i) = std::cos(gx * freq);
      }
    }
  return pos;
}

}  // namespace detail

class ToyEncoder {
 public:
  ToyEncoder(EncoderConfig cfg, std::string name, FeatureLevel level, bool fixed_res,
             bool learned_pos)
      : cfg_(cfg), name_(std::move(name)), level_(level), fixed_res_(fixed_res),
        learned_pos_(learned_pos) {
    if (cfg_.input_res % cfg_.patch_stride != 0)
      throw invalid_input_error(name_ + ": input_res not divisible by patch_stride");
    if (cfg_.channels <= 0) throw invalid_input_error(name_ + ": channels must be > 0");
  }

  // Encodes on the given context; the returned FeatureMap's `values` carries
  // the tape value (use var for gradient flow).
  ad::Var encode(Ctx& ctx, const ImageTensor& img, FeatureMap& meta) const {
    if (fixed_res_ && (img.height != cfg_.input_res || img.width != cfg_.input_res))
      throw invalid_input_error(name_ + ": wrong input resolution");
    if (img.height % cfg_.patch_stride != 0 || img.width % cfg_.patch_stride != 0)
      throw invalid_input_error(name_ + ": resolution not divisible by patch stride");
    int gh = img.height / cfg_.patch_stride;
    int gw = img.width / cfg_.patch_stride;
    long dim = static_cast<long>(cfg_.patch_stride) * cfg_.patch_stride * 3;
    std::string p = "enc." + name_;

    ad::Var x = ctx.tape.constant(detail::patchify(img, cfg_.patch_stride));
    x = nn::linear(ctx, x, p + ".embed", dim, cfg_.channels);
    if (learned_pos_) {
      ctx.store->ensure(p + ".pos", static_cast<long>(gh) * gw, cfg_.channels, 0.02);
      x = ad::add(x, ctx.param(p + ".pos"));
    } else {
      x = ad::addc(x, detail::sincos_position(gh, gw, cfg_.channels));
    }
    for (int d = 0; d < cfg_.depth; ++d) {
      std::string bp = p + ".blk" + std::to_string(d);
      ad::Var h = nn::layernorm(ctx, x, bp + ".ln");
      x = ad::add(x, nn::attention(ctx, h, h, bp + ".attn", cfg_.channels, 1));
    }
    meta.grid_h = gh;
    meta.grid_w = gw;
    meta.channels = cfg_.channels;
    meta.level = level_;
    meta.stride = cfg_.patch_stride;
    meta.values = x.val();
    return x;
  }

  // Inference-only convenience: encode without keeping a caller-visible tape.
  FeatureMap encode_plain(ParamStore& store, const ImageTensor& img) const {
    Ctx ctx(store);
    FeatureMap fm;
    encode(ctx, img, fm);
    return fm;
  }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::string name_;
  FeatureLevel level_;
  bool fixed_res_;
  bool learned_pos_;
};

// The three encoders the model uses, with the spec's toy defaults.
struct EncoderSet {
  ToyEncoder low;
  ToyEncoder high;
  ToyEncoder ground;

  EncoderSet(const EncoderConfig& low_cfg, const EncoderConfig& high_cfg,
             const EncoderConfig& ground_cfg)
      : low(low_cfg, "low", FeatureLevel::IMAGE, true, true),
        high(high_cfg, "high", FeatureLevel::HIGHRES, false, false),
        ground(ground_cfg, "ground", FeatureLevel::GROUNDING, true, true) {}
};

}  // namespace unires
