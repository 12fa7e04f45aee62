// SPDX-License-Identifier: Apache-2.0
//
// Training loop: linear-warmup + cosine-decay schedule, AdamW with
// decoupled weight decay, gradient clipping, checkpointing, evaluation.

#pragma once

#include "unires/model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

namespace unires {

struct TrainConfig {
  int batch_size = 16;
  int steps_per_epoch = 2000;
  int epochs = 1;
  double base_lr = 5e-4;
  int warmup_steps = 100;
  LossWeights weights;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
  double weight_decay = 0.0;
  int dataset_n = 64;
  MixRatios mix;
  bool pretrain = false;  // caption-only mixture (stage-1 contract shape)
  ModelConfig model;

  int total_steps() const { return steps_per_epoch * epochs; }
};

// warmup: base*step/warmup; then base*0.5*(1+cos(pi*(step-warmup)/(total-warmup)))
inline double lr_at(int step, const TrainConfig& cfg) {
  int total = cfg.total_steps();
  if (step < 0 || step > total)
    throw invalid_input_error("lr_at: step out of range");
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
    return cfg.base_lr * step / cfg.warmup_steps;
  double t = static_cast<double>(step - cfg.warmup_steps) /
             (total - cfg.warmup_steps);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params, const std::map<std::string, Mat>& grads, double lr,
            double weight_decay) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (const auto& [name, g] : grads) {
      Mat& p = params.at(name);
      Mat& m = m_.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
      Mat& v = v_.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
      Mat mhat = m / bc1;
      Mat vhat = v / bc2;
      p -= lr * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
      if (weight_decay > 0.0) p -= lr * weight_decay * p;
    }
  }

  long iteration() const { return t_; }
  std::map<std::string, Mat>& m_state() { return m_; }
  std::map<std::string, Mat>& v_state() { return v_; }
  void set_iteration(long t) { t_ = t; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, Mat> m_, v_;
};

inline double clip_global_norm(std::map<std::string, Mat>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.squaredNorm();
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double s = max_norm / norm;
    for (auto& [name, g] : grads) g *= s;
  }
  return norm;
}

// One optimizer step over a batch; throws with the offending sample id on a
// non-finite loss.
inline LossBundle train_step(UniResModel& model, const std::vector<const GroundingSample*>& batch,
                             const TrainConfig& cfg, AdamW& opt, int step) {
  Ctx ctx(model.params());
  ad::Var total;
  LossBundle agg;
  for (size_t i = 0; i < batch.size(); ++i) {
    const GroundingSample& s = *batch[i];
    TrainForward fwd = cfg.pretrain ? model.forward_caption(ctx, s, cfg.weights)
                                    : model.forward_train(ctx, s, cfg.weights);
    if (!std::isfinite(fwd.total.scalar()))
      throw invalid_state_error("train_step: non-finite loss on sample " + s.id);
    agg.l_lm += fwd.bundle.l_lm;
    agg.l_bce += fwd.bundle.l_bce;
    agg.l_dice += fwd.bundle.l_dice;
    total = i == 0 ? fwd.total : ad::add(total, fwd.total);
  }
  double inv = 1.0 / batch.size();
  total = ad::scale(total, inv);
  agg.l_lm *= inv;
  agg.l_bce *= inv;
  agg.l_dice *= inv;
  LossBundle out = combine(agg.l_lm, agg.l_bce, agg.l_dice, cfg.weights);

  ctx.tape.backward(total);
  auto grads = ctx.grads();
  clip_global_norm(grads, cfg.grad_clip);
  opt.step(model.params(), grads, lr_at(step, cfg), cfg.weight_decay);
  return out;
}

struct EvalResult {
  MetricReport report;
  std::vector<EvalRecord> records;
  double granularity_accuracy = 0.0;  // over samples with a gt target
  long granularity_total = 0;
};

inline EvalResult evaluate(const UniResModel& model,
                           const std::vector<GroundingSample>& dataset) {
  EvalResult out;
  long gran_correct = 0;
  for (const auto& s : dataset) {
    Prediction p = model.predict(s);
    EvalRecord rec;
    rec.id = s.id;
    rec.granularity = s.granularity;
    rec.gt_no_target = s.no_target;
    if (!s.no_target) rec.gt = rle_encode(s.gt_union());
    if (!p.no_seg) rec.pred = rle_encode(p.mask);
    out.records.push_back(std::move(rec));
    if (!s.no_target) {
      int gt_g = s.granularity == Granularity::PART ? 1 : 0;
      if (!p.no_seg && p.g_hat == gt_g) ++gran_correct;
      ++out.granularity_total;
    }
  }
  out.report = compute_report(out.records);
  if (out.granularity_total > 0)
    out.granularity_accuracy = static_cast<double>(gran_correct) / out.granularity_total;
  return out;
}

// ---- checkpointing: flat key -> matrix archive + optimizer state ----

namespace detail {

inline void write_string(std::ofstream& f, const std::string& s) {
  std::uint64_t n = s.size();
  f.write(reinterpret_cast<const char*>(&n), sizeof(n));
  f.write(s.data(), static_cast<std::streamsize>(n));
}

inline std::string read_string(std::ifstream& f) {
  std::uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), sizeof(n));
  std::string s(n, '\0');
  f.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

inline void write_mat(std::ofstream& f, const Mat& m) {
  std::int64_t r = m.rows(), c = m.cols();
  f.write(reinterpret_cast<const char*>(&r), sizeof(r));
  f.write(reinterpret_cast<const char*>(&c), sizeof(c));
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) {
      double v = m(i, j);
      f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

inline Mat read_mat(std::ifstream& f) {
  std::int64_t r = 0, c = 0;
  f.read(reinterpret_cast<char*>(&r), sizeof(r));
  f.read(reinterpret_cast<char*>(&c), sizeof(c));
  Mat m(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) {
      double v;
      f.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(i, j) = v;
    }
  return m;
}

inline void write_map(std::ofstream& f, const std::map<std::string, Mat>& m) {
  std::uint64_t n = m.size();
  f.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const auto& [k, v] : m) {
    write_string(f, k);
    write_mat(f, v);
  }
}

inline std::map<std::string, Mat> read_map(std::ifstream& f) {
  std::uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), sizeof(n));
  std::map<std::string, Mat> m;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string k = read_string(f);
    m[k] = read_mat(f);
  }
  return m;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const UniResModel& model,
                            AdamW& opt, int step, std::uint64_t config_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw invalid_state_error("save_checkpoint: cannot open " + path);
  const char magic[8] = {'U', 'R', 'E', 'S', 'C', 'K', 'P', '1'};
  f.write(magic, 8);
  std::int64_t s = step;
  f.write(reinterpret_cast<const char*>(&s), sizeof(s));
  f.write(reinterpret_cast<const char*>(&config_hash), sizeof(config_hash));
  std::uint64_t vck = model.vocab().checksum();
  f.write(reinterpret_cast<const char*>(&vck), sizeof(vck));
  std::int64_t it = opt.iteration();
  f.write(reinterpret_cast<const char*>(&it), sizeof(it));
  detail::write_map(f, model.cparams().all());
  detail::write_map(f, opt.m_state());
  detail::write_map(f, opt.v_state());
}

struct CheckpointHeader {
  int step = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t vocab_checksum = 0;
};

inline CheckpointHeader load_checkpoint(const std::string& path, UniResModel& model,
                                        AdamW& opt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw parse_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (std::string(magic, 8) != "URESCKP1")
    throw parse_error("load_checkpoint: bad magic");
  CheckpointHeader hdr;
  std::int64_t s = 0;
  f.read(reinterpret_cast<char*>(&s), sizeof(s));
  hdr.step = static_cast<int>(s);
  f.read(reinterpret_cast<char*>(&hdr.config_hash), sizeof(hdr.config_hash));
  f.read(reinterpret_cast<char*>(&hdr.vocab_checksum), sizeof(hdr.vocab_checksum));
  std::int64_t it = 0;
  f.read(reinterpret_cast<char*>(&it), sizeof(it));
  opt.set_iteration(it);
  model.params().all() = detail::read_map(f);
  opt.m_state() = detail::read_map(f);
  opt.v_state() = detail::read_map(f);
  if (hdr.vocab_checksum != model.vocab().checksum())
    throw invalid_state_error("load_checkpoint: tokenizer checksum mismatch");
  return hdr;
}

// ---- training driver with the JSONL loss log ----

struct TrainCallbacks {
  std::function<void(int, const LossBundle&, double)> on_step;
};

inline void run_training(UniResModel& model, const std::vector<GroundingSample>& data,
                         const TrainConfig& cfg, AdamW& opt,
                         std::ostream* log = nullptr,
                         const TrainCallbacks& cb = {}) {
  if (log)
    (*log) << nlohmann::json{{"header", "loss-log"},
                             {"mask_loss_reduction", "per-sample then per-batch"}}
                  .dump()
           << "\n";
  std::mt19937_64 rng(cfg.seed);
  int total = cfg.total_steps();
  for (int step = 1; step <= total; ++step) {
    std::vector<const GroundingSample*> batch;
    std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
    for (int i = 0; i < cfg.batch_size; ++i) batch.push_back(&data[pick(rng)]);
    LossBundle b = train_step(model, batch, cfg, opt, step);
    double lr = lr_at(step, cfg);
    if (log)
      (*log) << nlohmann::json{{"step", step},   {"l_lm", b.l_lm},
                               {"l_bce", b.l_bce}, {"l_dice", b.l_dice},
                               {"l_mask", b.l_mask}, {"total", b.total},
                               {"lr", lr}}
                    .dump()
             << "\n";
    if (cb.on_step) cb.on_step(step, b, lr);
  }
}

}  // namespace unires
