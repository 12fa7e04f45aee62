// SPDX-License-Identifier: Apache-2.0
//
// Full model assembly: encoders -> vision flow -> projection -> sequence
// model -> routing/re-weighting -> pixel decoder, for both the
// teacher-forced training path and greedy-decoding inference.

#pragma once

#include "unires/data_synth.hpp"
#include "unires/encoders.hpp"
#include "unires/losses.hpp"
#include "unires/mgfe.hpp"
#include "unires/mgvf.hpp"
#include "unires/pixel_decoder.hpp"

#include <optional>
#include <string>
#include <vector>

namespace unires {

struct ModelConfig {
  long channels = 64;   // C, vision feature dim
  long dim = 128;       // D, sequence-model dim
  int low_res = 64;
  int high_res = 128;   // paper sweet spot 1024; toy default 128
  int ground_res = 64;
  int stride_low = 16;
  int stride_high = 16;
  int stride_ground = 4;
  int enc_depth = 1;
  int llm_heads = 4;
  int llm_layers = 2;
  int max_len = 64;
  int max_answer_len = 8;
  int roi_bins = 7;
  int roi_samples = 2;
  int mgvf_heads = 1;
  // ablation switches
  bool decouple_seg = true;
  bool adjacent_interaction = true;
  bool decoder_reweight = true;
  bool use_object_feats = true;
  bool use_part_feats = true;
  bool freeze_vision = false;

  int upsample_factor() const { return stride_ground; }
  int out_res() const { return ground_res; }
};

struct TrainForward {
  ad::Var total;
  LossBundle bundle;
};

struct Prediction {
  bool no_seg = false;  // no SEG token emitted -> scored as no-target
  int g_hat = 0;
  BinaryMask mask;
  std::vector<int> emitted;
  bool pred_no_target() const {
    return no_seg || mask.area() < 50;
  }
};

class UniResModel {
 public:
  UniResModel(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed)
      : cfg_(cfg),
        vocab_(std::move(vocab)),
        params_(seed),
        encoders_(make_low_cfg(cfg, seed), make_high_cfg(cfg, seed),
                  make_ground_cfg(cfg, seed)) {
    vf_cfg_.roi_bins = cfg_.roi_bins;
    vf_cfg_.roi_samples = cfg_.roi_samples;
    vf_cfg_.heads = cfg_.mgvf_heads;
    vf_cfg_.adjacent_interaction = cfg_.adjacent_interaction;
    llm_cfg_.dim = cfg_.dim;
    llm_cfg_.heads = cfg_.llm_heads;
    llm_cfg_.layers = cfg_.llm_layers;
    llm_cfg_.max_len = cfg_.max_len;
    dec_cfg_.grid_h = dec_cfg_.grid_w = cfg_.ground_res / cfg_.stride_ground;
    dec_cfg_.upsample_factor = cfg_.stride_ground;
    dec_cfg_.channels = cfg_.channels;
    dec_cfg_.seg_dim = cfg_.dim;
    materialize();
  }

  ParamStore& params() { return params_; }
  const ParamStore& cparams() const { return params_; }
  const Vocabulary& vocab() const { return vocab_; }
  const ModelConfig& config() const { return cfg_; }
  const DecoderConfig& decoder_config() const { return dec_cfg_; }

  int answer_seg_token(Granularity g) const {
    if (!cfg_.decouple_seg) return vocab_.seg_object();
    return g == Granularity::PART ? vocab_.seg_part() : vocab_.seg_object();
  }

  // Shared vision-side forward: encoders + vision flow + projection.
  struct VisionForward {
    VisionFlowOutput flow;
    ad::Var f_g;
    ProjectedTokens tokens;
  };

  VisionForward vision_forward(Ctx& ctx, const GroundingSample& sample) const {
    ctx.frozen_vision = cfg_.freeze_vision;
    const ImageTensor& img = sample.image;
    ImageTensor high = resize_bilinear(img, cfg_.high_res, cfg_.high_res);

    FeatureMap fl_meta, fh_meta, fg_meta;
    ad::Var f_l = encoders_.low.encode(ctx, img, fl_meta);
    ad::Var f_h = encoders_.high.encode(ctx, high, fh_meta);
    ad::Var f_g = encoders_.ground.encode(ctx, img, fg_meta);
    // ROI boxes live in low-res pixel coordinates; rescale the high-res map's
    // stride so the box extent matches.
    fh_meta.stride = static_cast<double>(cfg_.low_res) / fh_meta.grid_w;

    ProposalSet s_o, s_p;
    s_o.level = ProposalLevel::OBJECT;
    s_p.level = ProposalLevel::PART;
    if (cfg_.use_object_feats)
      s_o = sample.object_boxes.empty()
                ? grid_proposals(img.width, img.height, ProposalLevel::OBJECT)
                : ground_truth_proposals(sample.object_boxes, ProposalLevel::OBJECT);
    if (cfg_.use_part_feats)
      s_p = sample.part_boxes.empty()
                ? grid_proposals(img.width, img.height, ProposalLevel::PART)
                : ground_truth_proposals(sample.part_boxes, ProposalLevel::PART);

    VisionForward out;
    out.flow = run_vision_flow(ctx, f_l, fl_meta, f_h, fh_meta, s_o, s_p, vf_cfg_);
    out.f_g = f_g;
    out.tokens = project_tokens(ctx, out.flow, cfg_.channels, cfg_.dim);
    return out;
  }

  // Token layout: [visual][bos][expr][sep][answer...][eos]
  struct SequenceLayout {
    std::vector<int> text_ids;
    long n_visual = 0;
    long answer_begin = 0;  // index into text_ids of the first answer token
  };

  SequenceLayout make_layout(const std::vector<int>& expr,
                             const std::vector<int>& answer, long n_visual) const {
    SequenceLayout lay;
    lay.n_visual = n_visual;
    lay.text_ids.push_back(vocab_.bos());
    lay.text_ids.insert(lay.text_ids.end(), expr.begin(), expr.end());
    lay.text_ids.push_back(vocab_.sep());
    lay.answer_begin = static_cast<long>(lay.text_ids.size());
    lay.text_ids.insert(lay.text_ids.end(), answer.begin(), answer.end());
    return lay;
  }

  LlmForward run_llm(Ctx& ctx, const ProjectedTokens& vis,
                     const std::vector<int>& text_ids) const {
    ad::Var text_emb = embed_tokens(ctx, text_ids, vocab_.size(), cfg_.dim);
    ad::Var seq = ad::concat_rows({vis.values, text_emb});
    return llm_forward(ctx, seq, llm_cfg_, vocab_.size());
  }

  // Teacher-forced training forward for a grounding sample.
  TrainForward forward_train(Ctx& ctx, const GroundingSample& sample,
                             const LossWeights& w) const {
    VisionForward vf = vision_forward(ctx, sample);
    std::vector<int> expr = vocab_.encode(sample.expression);
    int seg_tok = answer_seg_token(sample.granularity);
    SequenceLayout lay = make_layout(expr, {seg_tok, vocab_.eos()}, vf.tokens.values.rows());

    LlmForward llm = run_llm(ctx, vf.tokens, lay.text_ids);

    // supervised next-token positions: rows predicting the answer tokens
    long T = lay.n_visual + static_cast<long>(lay.text_ids.size());
    std::vector<int> targets(T, 0);
    std::vector<int> positions;
    for (long k = lay.answer_begin; k < static_cast<long>(lay.text_ids.size()); ++k) {
      long row = lay.n_visual + k - 1;  // row predicting text_ids[k]
      targets[row] = lay.text_ids[k];
      positions.push_back(static_cast<int>(row));
    }
    ad::Var l_lm = ad::softmax_ce(llm.logits, targets, positions);

    long seg_row = lay.n_visual + lay.answer_begin;  // position of the SEG token
    ad::Var seg_emb = ad::slice_rows(llm.hidden, seg_row, 1);

    int g = sample.granularity == Granularity::PART ? 1 : 0;
    ad::Var selected = route(g, vf.flow.f_o_enh, vf.flow.f_p_enh, vf.flow.f_l_var);
    ad::Var f_r = reweight(ctx, vf.f_g, selected, cfg_.channels, 1, cfg_.decoder_reweight);
    MaskLogits logits = decode(ctx, f_r, seg_emb, dec_cfg_);

    BinaryMask gt = sample.gt_union();
    Mat gt_mat = Mat::Zero(gt.height, gt.width);
    for (int r = 0; r < gt.height; ++r)
      for (int c = 0; c < gt.width; ++c) gt_mat(r, c) = gt.at(r, c);

    ad::Var probs = ad::sigmoid(logits.var);
    ad::Var l_bce = ad::bce_loss(probs, gt_mat);
    ad::Var l_dice = ad::dice_loss(probs, gt_mat);

    TrainForward out;
    out.total = combine_on_tape(l_lm, l_bce, l_dice, w);
    out.bundle = combine(l_lm.scalar(), l_bce.scalar(), l_dice.scalar(), w);
    return out;
  }

  // Region-captioning toy task: prompt "describe", answer = the expression.
  TrainForward forward_caption(Ctx& ctx, const GroundingSample& sample,
                               const LossWeights& w) const {
    VisionForward vf = vision_forward(ctx, sample);
    std::vector<int> expr = vocab_.encode(sample.expression);
    std::vector<int> answer = expr;
    answer.push_back(vocab_.eos());
    SequenceLayout lay = make_layout({vocab_.id("describe")}, answer,
                                     vf.tokens.values.rows());
    LlmForward llm = run_llm(ctx, vf.tokens, lay.text_ids);
    long T = lay.n_visual + static_cast<long>(lay.text_ids.size());
    std::vector<int> targets(T, 0);
    std::vector<int> positions;
    for (long k = lay.answer_begin; k < static_cast<long>(lay.text_ids.size()); ++k) {
      long row = lay.n_visual + k - 1;
      targets[row] = lay.text_ids[k];
      positions.push_back(static_cast<int>(row));
    }
    ad::Var l_lm = ad::softmax_ce(llm.logits, targets, positions);
    TrainForward out;
    out.total = ad::scale(l_lm, w.lambda_lm);
    out.bundle = combine(l_lm.scalar(), 0.0, 0.0, w);
    out.bundle.total = out.total.scalar();
    return out;
  }

  // Greedy decoding followed by route -> reweight -> decode -> binarize.
  Prediction predict(const GroundingSample& sample) const {
    Ctx ctx(const_cast<ParamStore&>(params_));
    VisionForward vf = vision_forward(ctx, sample);
    std::vector<int> expr = vocab_.encode(sample.expression);

    std::vector<int> text_ids;
    text_ids.push_back(vocab_.bos());
    text_ids.insert(text_ids.end(), expr.begin(), expr.end());
    text_ids.push_back(vocab_.sep());
    long prompt_len = static_cast<long>(text_ids.size());

    Prediction pred;
    long seg_row = -1;
    for (int step = 0; step < cfg_.max_answer_len; ++step) {
      LlmForward llm = run_llm(ctx, vf.tokens, text_ids);
      long last = llm.logits.rows() - 1;
      int next;
      llm.logits.val().row(last).maxCoeff(&next);
      text_ids.push_back(next);
      if (vocab_.is_seg(next) && seg_row < 0)
        seg_row = vf.tokens.values.rows() + static_cast<long>(text_ids.size()) - 1;
      if (next == vocab_.eos()) break;
    }
    pred.emitted.assign(text_ids.begin() + prompt_len, text_ids.end());

    int seg_tok = -1;
    for (int id : pred.emitted)
      if (vocab_.is_seg(id)) {
        seg_tok = id;
        break;
      }
    if (seg_tok < 0) {
      pred.no_seg = true;
      pred.mask = BinaryMask(cfg_.out_res(), cfg_.out_res());
      return pred;
    }
    pred.g_hat = classify_seg_token(vocab_, seg_tok);

    // re-run with the emitted sequence to take the hidden state at SEG
    LlmForward llm = run_llm(ctx, vf.tokens, text_ids);
    ad::Var seg_emb = ad::slice_rows(llm.hidden, seg_row, 1);
    ad::Var selected = route(pred.g_hat, vf.flow.f_o_enh, vf.flow.f_p_enh,
                             vf.flow.f_l_var);
    ad::Var f_r = reweight(ctx, vf.f_g, selected, cfg_.channels, 1, cfg_.decoder_reweight);
    MaskLogits logits = decode(ctx, f_r, seg_emb, dec_cfg_);
    pred.mask = binarize(logits);
    return pred;
  }

 private:
  static EncoderConfig make_low_cfg(const ModelConfig& m, std::uint64_t seed) {
    return {m.low_res, m.stride_low, static_cast<int>(m.channels), m.enc_depth, seed};
  }
  static EncoderConfig make_high_cfg(const ModelConfig& m, std::uint64_t seed) {
    return {m.high_res, m.stride_high, static_cast<int>(m.channels), m.enc_depth, seed};
  }
  static EncoderConfig make_ground_cfg(const ModelConfig& m, std::uint64_t seed) {
    return {m.ground_res, m.stride_ground, static_cast<int>(m.channels), m.enc_depth,
            seed};
  }

  // One dummy forward so every parameter exists before training/checkpointing.
  void materialize() {
    GroundingSample s;
    s.image = ImageTensor(cfg_.low_res, cfg_.low_res);
    s.expression = vocab_.token(0);
    s.gt_masks = {BinaryMask(cfg_.out_res(), cfg_.out_res())};
    s.gt_masks[0].at(0, 0) = 1;
    s.object_boxes = {BoundingBox{4, 4, 30, 30}};
    s.part_boxes = {BoundingBox{6, 6, 20, 20}};
    Ctx ctx(params_);
    forward_train(ctx, s, LossWeights{});
    if (vocab_.contains("describe")) forward_caption(ctx, s, LossWeights{});
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  ParamStore params_;
  EncoderSet encoders_;
  VisionFlowConfig vf_cfg_;
  SequenceModelConfig llm_cfg_;
  DecoderConfig dec_cfg_;
};

}  // namespace unires
