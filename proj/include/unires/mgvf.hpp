// SPDX-License-Identifier: Apache-2.0
//
// Multi-Granularity Vision Flow: proposal providers, ROI feature extraction
// over the high-resolution feature map, and the coarse-to-fine
// cross-attention cascade producing enhanced object/part features.

#pragma once

#include "unires/encoders.hpp"
#include "unires/geometry.hpp"
#include "unires/nn.hpp"

#include <functional>
#include <string>
#include <vector>

namespace unires {

enum class ProposalLevel { OBJECT, PART };
enum class ProposalSource { GROUND_TRUTH, GRID, EXTERNAL };

struct ProposalSet {
  std::vector<BoundingBox> boxes;  // pixel space, positive area
  ProposalLevel level = ProposalLevel::OBJECT;
  ProposalSource source = ProposalSource::GRID;
};

// EXTERNAL provider contract: (image id, level) -> pixel boxes.
using ExternalProposalFn =
    std::function<std::vector<BoundingBox>(const std::string&, ProposalLevel)>;

// Fixed grid fallback: 2x2 boxes at object level, 4x4 at part level.
inline ProposalSet grid_proposals(int img_w, int img_h, ProposalLevel level) {
  int n = level == ProposalLevel::OBJECT ? 2 : 4;
  ProposalSet out;
  out.level = level;
  out.source = ProposalSource::GRID;
  for (int gy = 0; gy < n; ++gy)
    for (int gx = 0; gx < n; ++gx) {
      BoundingBox b;
      b.x0 = static_cast<double>(img_w) * gx / n;
      b.y0 = static_cast<double>(img_h) * gy / n;
      b.x1 = static_cast<double>(img_w) * (gx + 1) / n;
      b.y1 = static_cast<double>(img_h) * (gy + 1) / n;
      out.boxes.push_back(b);
    }
  return out;
}

inline ProposalSet ground_truth_proposals(const std::vector<BoundingBox>& boxes,
                                          ProposalLevel level) {
  ProposalSet out;
  out.level = level;
  out.source = ProposalSource::GROUND_TRUTH;
  out.boxes = boxes;
  return out;
}

inline ProposalSet external_proposals(const ExternalProposalFn& fn,
                                      const std::string& image_id, ProposalLevel level) {
  ProposalSet out;
  out.level = level;
  out.source = ProposalSource::EXTERNAL;
  out.boxes = fn(image_id, level);
  return out;
}

struct VisionFlowConfig {
  int roi_bins = 7;           // ROI Align bin grid before mean reduction
  int roi_samples = 2;        // sample points per bin side
  int heads = 1;              // heads per cascade cross-attention step
  bool adjacent_interaction = true;  // cascade off -> raw F_o, F_p pass through
};

struct VisionFlowOutput {
  FeatureMap f_l;     // N_l x C image-level features
  ad::Var f_l_var;
  ad::Var f_o_enh;    // N_o x C enhanced object features
  ad::Var f_p_enh;    // N_p x C enhanced part features
  int n_obj = 0, n_part = 0;
};

// One C-vector per box: ROI Align bins mean-reduced, stacked in proposal
// order. Differentiable through the feature map (pure matmul path).
inline ad::Var extract_region_features(Ctx& ctx, ad::Var f_h_var, const FeatureMap& f_h,
                                       const ProposalSet& props,
                                       const VisionFlowConfig& cfg) {
  if (props.boxes.empty())
    return ctx.tape.constant(Mat::Zero(0, f_h.channels));
  long bins = static_cast<long>(cfg.roi_bins) * cfg.roi_bins;
  Mat reduce = Mat::Zero(static_cast<long>(props.boxes.size()),
                         bins * static_cast<long>(props.boxes.size()));
  Mat weights(bins * static_cast<long>(props.boxes.size()), f_h.rows());
  for (size_t i = 0; i < props.boxes.size(); ++i) {
    weights.middleRows(static_cast<long>(i) * bins, bins) =
        roi_align_weights(f_h.grid_h, f_h.grid_w, f_h.stride, props.boxes[i],
                          cfg.roi_bins, cfg.roi_bins, cfg.roi_samples);
    reduce.block(i, static_cast<long>(i) * bins, 1, bins).setConstant(1.0 / bins);
  }
  ad::Var pooled = ad::mm(ctx.tape.constant(weights), f_h_var);
  return ad::mm(ctx.tape.constant(reduce), pooled);
}

// F~_o = CrossAttn(F_o, F_l, F_l); F~_p = CrossAttn(F_p, F~_o, F~_o).
// Empty S_o falls back to F_l as the key/value for the part step.
inline VisionFlowOutput run_vision_flow(Ctx& ctx, ad::Var f_l_var, const FeatureMap& f_l,
                                        ad::Var f_h_var, const FeatureMap& f_h,
                                        const ProposalSet& s_o, const ProposalSet& s_p,
                                        const VisionFlowConfig& cfg) {
  VisionFlowOutput out;
  out.f_l = f_l;
  out.f_l_var = f_l_var;
  out.n_obj = static_cast<int>(s_o.boxes.size());
  out.n_part = static_cast<int>(s_p.boxes.size());
  long C = f_l.channels;

  ad::Var f_o = extract_region_features(ctx, f_h_var, f_h, s_o, cfg);
  ad::Var f_p = extract_region_features(ctx, f_h_var, f_h, s_p, cfg);

  if (!cfg.adjacent_interaction) {
    out.f_o_enh = f_o;
    out.f_p_enh = f_p;
    return out;
  }
  ad::Var f_o_enh = f_o;
  if (out.n_obj > 0)
    f_o_enh = nn::cross_attention(ctx, f_o, f_l_var, "mgvf.obj", C, cfg.heads);
  out.f_o_enh = f_o_enh;
  if (out.n_part > 0) {
    ad::Var kv = out.n_obj > 0 ? f_o_enh : f_l_var;
    out.f_p_enh = nn::cross_attention(ctx, f_p, kv, "mgvf.part", C, cfg.heads);
  } else {
    out.f_p_enh = f_p;
  }
  return out;
}

}  // namespace unires
