// SPDX-License-Identifier: Apache-2.0
//
// Parameter storage and the small set of layers the model is built from.

#pragma once

#include "unires/autodiff.hpp"
#include "unires/common.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace unires {

// Named parameter matrices. std::map keeps iteration order deterministic,
// and per-name seeding keeps initialization order-independent.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  Mat& ensure(const std::string& name, long rows, long cols, double init_scale) {
    auto it = params_.find(name);
    if (it != params_.end()) return it->second;
    auto rng = seeded_rng(seed_, name);
    std::normal_distribution<double> dist(0.0, init_scale);
    Mat m(rows, cols);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return params_.emplace(name, std::move(m)).first->second;
  }

  Mat& ensure_value(const std::string& name, Mat value) {
    auto it = params_.find(name);
    if (it != params_.end()) return it->second;
    return params_.emplace(name, std::move(value)).first->second;
  }

  Mat& at(const std::string& name) { return params_.at(name); }
  const Mat& at(const std::string& name) const { return params_.at(name); }
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, Mat>& all() { return params_; }
  const std::map<std::string, Mat>& all() const { return params_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::map<std::string, Mat> params_;
};

// One forward pass: a tape plus the param vars materialized on it.
struct Ctx {
  ad::Tape tape;
  ParamStore* store = nullptr;
  std::map<std::string, ad::Var> param_vars;
  bool frozen_vision = false;  // when set, encoder params become constants

  explicit Ctx(ParamStore& s) : store(&s) {}

  ad::Var param(const std::string& name) {
    auto it = param_vars.find(name);
    if (it != param_vars.end()) return it->second;
    bool freeze = frozen_vision && name.rfind("enc.", 0) == 0;
    ad::Var v = freeze ? tape.constant(store->at(name)) : tape.leaf(store->at(name));
    param_vars.emplace(name, v);
    return v;
  }

  // Gradients of all (non-frozen) parameters after backward().
  std::map<std::string, Mat> grads() const {
    std::map<std::string, Mat> g;
    for (const auto& [name, v] : param_vars)
      if (tape.node(v.idx).needs_grad) g[name] = v.grad();
    return g;
  }

  const ad::Tape& ctape() const { return tape; }
};

namespace nn {

inline ad::Var linear(Ctx& ctx, ad::Var x, const std::string& prefix, long in, long out) {
  ctx.store->ensure(prefix + ".w", in, out, 1.0 / std::sqrt(static_cast<double>(in)));
  ctx.store->ensure_value(prefix + ".b", Mat::Zero(1, out));
  return ad::add_row(ad::mm(x, ctx.param(prefix + ".w")), ctx.param(prefix + ".b"));
}

inline ad::Var layernorm(Ctx& ctx, ad::Var x, const std::string& prefix) {
  long n = x.cols();
  ctx.store->ensure_value(prefix + ".g", Mat::Ones(1, n));
  ctx.store->ensure_value(prefix + ".b", Mat::Zero(1, n));
  return ad::layernorm_rows(x, ctx.param(prefix + ".g"), ctx.param(prefix + ".b"));
}

// Scaled dot-product attention with learned projections. Multi-head when
// heads > 1; `mask` (if non-null) is added to the score matrix pre-softmax.
// Returns the attention output without the residual.
inline ad::Var attention(Ctx& ctx, ad::Var q_in, ad::Var kv_in, const std::string& prefix,
                         long dim, int heads, const Mat* mask = nullptr) {
  if (kv_in.rows() == 0)
    throw empty_context_error("attention: empty key/value set");
  if (dim % heads != 0)
    throw invalid_input_error("attention: head count must divide dim");
  long dh = dim / heads;
  double init = 1.0 / std::sqrt(static_cast<double>(dim));
  ctx.store->ensure(prefix + ".wq", dim, dim, init);
  ctx.store->ensure(prefix + ".wk", dim, dim, init);
  ctx.store->ensure(prefix + ".wv", dim, dim, init);
  ctx.store->ensure(prefix + ".wo", dim, dim, init);
  ad::Var q = ad::mm(q_in, ctx.param(prefix + ".wq"));
  ad::Var k = ad::mm(kv_in, ctx.param(prefix + ".wk"));
  ad::Var v = ad::mm(kv_in, ctx.param(prefix + ".wv"));
  std::vector<ad::Var> outs;
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = heads == 1 ? q : ad::slice_cols(q, h * dh, dh);
    ad::Var kh = heads == 1 ? k : ad::slice_cols(k, h * dh, dh);
    ad::Var vh = heads == 1 ? v : ad::slice_cols(v, h * dh, dh);
    ad::Var scores =
        ad::scale(ad::mm(qh, ad::transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask != nullptr) scores = ad::addc(scores, *mask);
    ad::Var attn = ad::rowwise_softmax(scores);
    outs.push_back(ad::mm(attn, vh));
  }
  ad::Var merged = heads == 1 ? outs[0] : ad::concat_cols(outs);
  return ad::mm(merged, ctx.param(prefix + ".wo"));
}

// Cross-attention block with the residual connection on the query path.
inline ad::Var cross_attention(Ctx& ctx, ad::Var q, ad::Var kv, const std::string& prefix,
                               long dim, int heads = 1) {
  return ad::add(q, attention(ctx, q, kv, prefix, dim, heads));
}

// Pre-norm transformer decoder block: causal self-attention + MLP.
inline ad::Var decoder_block(Ctx& ctx, ad::Var x, const std::string& prefix, long dim,
                             int heads, const Mat& causal_mask) {
  ad::Var h = layernorm(ctx, x, prefix + ".ln1");
  x = ad::add(x, attention(ctx, h, h, prefix + ".attn", dim, heads, &causal_mask));
  ad::Var m = layernorm(ctx, x, prefix + ".ln2");
  m = linear(ctx, m, prefix + ".fc1", dim, 4 * dim);
  m = ad::tanh_op(m);
  m = linear(ctx, m, prefix + ".fc2", 4 * dim, dim);
  return ad::add(x, m);
}

inline Mat causal_mask(long n) {
  Mat m = Mat::Zero(n, n);
  for (long r = 0; r < n; ++r)
    for (long c = r + 1; c < n; ++c) m(r, c) = -1e9;
  return m;
}

}  // namespace nn

// Central finite-difference gradient check: perturbs every element of the
// named parameters and compares to the analytic gradient.
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
};

// `build` assembles the scalar loss on the given context; the helper runs
// backward for the analytic side and plain evaluations for the FD side.
inline GradCheckResult grad_check(
    ParamStore& store, const std::vector<std::string>& names,
    const std::function<ad::Var(Ctx&)>& build, double h = 1e-5) {
  std::map<std::string, Mat> analytic;
  {
    Ctx c(store);
    ad::Var loss = build(c);
    c.tape.backward(loss);
    analytic = c.grads();
  }
  GradCheckResult res;
  for (const std::string& name : names) {
    Mat& p = store.at(name);
    Mat ga = analytic.count(name) ? analytic.at(name) : Mat::Zero(p.rows(), p.cols());
    for (long r = 0; r < p.rows(); ++r)
      for (long c = 0; c < p.cols(); ++c) {
        double orig = p(r, c);
        p(r, c) = orig + h;
        Ctx cp(store);
        double fp = build(cp).scalar();
        p(r, c) = orig - h;
        Ctx cm(store);
        double fm = build(cm).scalar();
        p(r, c) = orig;
        double fd = (fp - fm) / (2 * h);
        double denom = std::max({std::abs(fd), std::abs(ga(r, c)), 1e-8});
        double rel = std::abs(fd - ga(r, c)) / denom;
        if (rel > res.max_rel_err) {
          res.max_rel_err = rel;
          res.worst_param = name;
        }
      }
  }
  return res;
}

}  // namespace unires
