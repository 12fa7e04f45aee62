// SPDX-License-Identifier: Apache-2.0
//
// Multi-Granularity Feature Exploitation: vocabulary with decoupled
// [SEG_OBJECT]/[SEG_PART] tokens, visual-token projection, the toy
// decoder-only sequence model, granularity routing and decoder-input
// re-weighting.

#pragma once

#include "unires/mgvf.hpp"
#include "unires/nn.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace unires {

class Vocabulary {
 public:
  static constexpr const char* kSegObject = "[SEG_OBJECT]";
  static constexpr const char* kSegPart = "[SEG_PART]";

  // Special tokens are appended after the base range.
  explicit Vocabulary(std::vector<std::string> base_tokens) {
    for (auto& t : base_tokens) add(t);
    bos_ = add("<bos>");
    sep_ = add("<sep>");
    eos_ = add("<eos>");
    base_size_ = static_cast<int>(tokens_.size());
    seg_object_ = add(kSegObject);
    seg_part_ = add(kSegPart);
  }

  int id(const std::string& tok) const {
    auto it = ids_.find(tok);
    if (it == ids_.end()) throw invalid_input_error("vocabulary: unknown token " + tok);
    return it->second;
  }
  bool contains(const std::string& tok) const { return ids_.count(tok) > 0; }
  const std::string& token(int id) const { return tokens_.at(id); }
  int size() const { return static_cast<int>(tokens_.size()); }
  int bos() const { return bos_; }
  int sep() const { return sep_; }
  int eos() const { return eos_; }
  int seg_object() const { return seg_object_; }
  int seg_part() const { return seg_part_; }
  bool is_seg(int id) const { return id == seg_object_ || id == seg_part_; }

  std::vector<int> encode(const std::string& text) const {
    std::istringstream ss(text);
    std::vector<int> out;
    std::string w;
    while (ss >> w) out.push_back(id(w));
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    for (const auto& t : tokens_) f << t << "\n";
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw parse_error("vocabulary: cannot open " + path);
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(f, line))
      if (!line.empty()) toks.push_back(line);
    // strip the appended specials; the constructor re-appends them
    while (!toks.empty() &&
           (toks.back() == kSegPart || toks.back() == kSegObject || toks.back() == "<eos>" ||
            toks.back() == "<sep>" || toks.back() == "<bos>"))
      toks.pop_back();
    return Vocabulary(std::move(toks));
  }

  std::uint64_t checksum() const {
    std::string all;
    for (const auto& t : tokens_) {
      all += t;
      all += '\n';
    }
    return fnv1a(all);
  }

 private:
  int add(const std::string& t) {
    ids_[t] = static_cast<int>(tokens_.size());
    tokens_.push_back(t);
    return ids_[t];
  }
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
  int bos_ = -1, sep_ = -1, eos_ = -1, seg_object_ = -1, seg_part_ = -1;
  int base_size_ = 0;
};

struct SegDecision {
  int g_hat = 0;           // 0 = object, 1 = part
  int emitted_token = -1;  // SEG_OBJECT or SEG_PART id
  ad::Var seg_embedding;   // 1 x D, final-layer hidden state at the SEG position
};

// g_hat is a pure function of the emitted token.
inline int classify_seg_token(const Vocabulary& vocab, int token_id) {
  if (token_id == vocab.seg_object()) return 0;
  if (token_id == vocab.seg_part()) return 1;
  throw invalid_state_error("classify_seg_token: not a SEG-family token");
}

struct ProjectedTokens {
  ad::Var values;  // (N_l + N_o + N_p) x D
  long n_l = 0, n_o = 0, n_p = 0;
};

// F_v = P([F_l || F~_o || F~_p]), with span offsets recorded.
inline ProjectedTokens project_tokens(Ctx& ctx, const VisionFlowOutput& vf, long C,
                                      long D) {
  ProjectedTokens out;
  out.n_l = vf.f_l_var.rows();
  out.n_o = vf.f_o_enh.rows();
  out.n_p = vf.f_p_enh.rows();
  ad::Var cat = ad::concat_rows({vf.f_l_var, vf.f_o_enh, vf.f_p_enh});
  out.values = nn::linear(ctx, cat, "mgfe.proj", C, D);
  return out;
}

struct SequenceModelConfig {
  long dim = 128;
  int heads = 4;
  int layers = 2;
  int max_len = 64;
};

// Embeds token ids via a one-hot matmul so gradients reach the table.
inline ad::Var embed_tokens(Ctx& ctx, const std::vector<int>& ids, long vocab_size,
                            long dim) {
  ctx.store->ensure("llm.emb", vocab_size, dim, 0.02);
  Mat onehot = Mat::Zero(static_cast<long>(ids.size()), vocab_size);
  for (size_t i = 0; i < ids.size(); ++i) onehot(static_cast<long>(i), ids[i]) = 1.0;
  return ad::mm(ctx.tape.constant(onehot), ctx.param("llm.emb"));
}

// Forward over an already-embedded sequence; returns {hidden, logits}.
struct LlmForward {
  ad::Var hidden;  // T x D, post final layernorm
  ad::Var logits;  // T x V
};

inline LlmForward llm_forward(Ctx& ctx, ad::Var seq, const SequenceModelConfig& cfg,
                              long vocab_size) {
  long T = seq.rows();
  if (T > cfg.max_len)
    throw invalid_input_error("llm_forward: sequence exceeds max length");
  ctx.store->ensure("llm.pos", cfg.max_len, cfg.dim, 0.02);
  ad::Var pos = ad::slice_rows(ctx.param("llm.pos"), 0, T);
  ad::Var x = ad::add(seq, pos);
  Mat mask = nn::causal_mask(T);
  for (int l = 0; l < cfg.layers; ++l)
    x = nn::decoder_block(ctx, x, "llm.l" + std::to_string(l), cfg.dim, cfg.heads, mask);
  ad::Var h = nn::layernorm(ctx, x, "llm.lnf");
  LlmForward out;
  out.hidden = h;
  out.logits = nn::linear(ctx, h, "llm.head", cfg.dim, vocab_size);
  return out;
}

// Eq. 9 realized as exact branch selection; an empty selected branch falls
// back to the image-level span.
inline ad::Var route(int g_hat, ad::Var f_o_enh, ad::Var f_p_enh, ad::Var f_l_fallback) {
  if (g_hat != 0 && g_hat != 1)
    throw invalid_state_error("route: g_hat outside {0,1}");
  ad::Var sel = g_hat == 0 ? f_o_enh : f_p_enh;
  if (sel.rows() == 0) return f_l_fallback;
  return sel;
}

// F_r = CrossAttn(F_g, F~, F~) with residual; identity when disabled.
inline ad::Var reweight(Ctx& ctx, ad::Var f_g, ad::Var selected, long C, int heads = 1,
                        bool enabled = true) {
  if (!enabled) return f_g;
  return nn::cross_attention(ctx, f_g, selected, "mgfe.rw", C, heads);
}

}  // namespace unires
