// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value config files; every TrainConfig field is addressable and
// unknown keys are errors.

#pragma once

#include "unires/train.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace unires {

inline void apply_config_entry(TrainConfig& cfg, const std::string& key,
                               const std::string& value) {
  auto as_int = [&] { return std::stoi(value); };
  auto as_double = [&] { return std::stod(value); };
  auto as_bool = [&] {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw config_error("config: bad boolean for " + key + ": " + value);
  };
  if (key == "batch_size") cfg.batch_size = as_int();
  else if (key == "steps_per_epoch") cfg.steps_per_epoch = as_int();
  else if (key == "epochs") cfg.epochs = as_int();
  else if (key == "base_lr") cfg.base_lr = as_double();
  else if (key == "warmup_steps") cfg.warmup_steps = as_int();
  else if (key == "lambda_lm") cfg.weights.lambda_lm = as_double();
  else if (key == "lambda_mask") cfg.weights.lambda_mask = as_double();
  else if (key == "lambda_bce") cfg.weights.lambda_bce = as_double();
  else if (key == "lambda_dice") cfg.weights.lambda_dice = as_double();
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "grad_clip") cfg.grad_clip = as_double();
  else if (key == "weight_decay") cfg.weight_decay = as_double();
  else if (key == "dataset_n") cfg.dataset_n = as_int();
  else if (key == "mix_single") cfg.mix.single_object = as_double();
  else if (key == "mix_multi") cfg.mix.multi_object = as_double();
  else if (key == "mix_part") cfg.mix.part = as_double();
  else if (key == "mix_no_target") cfg.mix.no_target = as_double();
  else if (key == "pretrain") cfg.pretrain = as_bool();
  else if (key == "channels") cfg.model.channels = as_int();
  else if (key == "dim") cfg.model.dim = as_int();
  else if (key == "low_res") cfg.model.low_res = as_int();
  else if (key == "high_res") cfg.model.high_res = as_int();
  else if (key == "ground_res") cfg.model.ground_res = as_int();
  else if (key == "stride_low") cfg.model.stride_low = as_int();
  else if (key == "stride_high") cfg.model.stride_high = as_int();
  else if (key == "stride_ground") cfg.model.stride_ground = as_int();
  else if (key == "enc_depth") cfg.model.enc_depth = as_int();
  else if (key == "llm_heads") cfg.model.llm_heads = as_int();
  else if (key == "llm_layers") cfg.model.llm_layers = as_int();
  else if (key == "max_len") cfg.model.max_len = as_int();
  else if (key == "max_answer_len") cfg.model.max_answer_len = as_int();
  else if (key == "roi_bins") cfg.model.roi_bins = as_int();
  else if (key == "roi_samples") cfg.model.roi_samples = as_int();
  else if (key == "mgvf_heads") cfg.model.mgvf_heads = as_int();
  else if (key == "decouple_seg") cfg.model.decouple_seg = as_bool();
  else if (key == "adjacent_interaction") cfg.model.adjacent_interaction = as_bool();
  else if (key == "decoder_reweight") cfg.model.decoder_reweight = as_bool();
  else if (key == "use_object_feats") cfg.model.use_object_feats = as_bool();
  else if (key == "use_part_feats") cfg.model.use_part_feats = as_bool();
  else if (key == "freeze_vision") cfg.model.freeze_vision = as_bool();
  else throw config_error("config: unknown key " + key);
}

inline TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config: line " + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t\r");
      auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (cfg.warmup_steps > cfg.total_steps())
    throw config_error("config: warmup_steps exceeds total steps");
  return cfg;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

inline std::uint64_t config_hash(const TrainConfig& cfg) {
  std::ostringstream ss;
  ss << cfg.batch_size << '|' << cfg.steps_per_epoch << '|' << cfg.epochs << '|'
     << cfg.base_lr << '|' << cfg.warmup_steps << '|' << cfg.weights.lambda_lm << '|'
     << cfg.weights.lambda_mask << '|' << cfg.weights.lambda_bce << '|'
     << cfg.weights.lambda_dice << '|' << cfg.seed << '|' << cfg.grad_clip << '|'
     << cfg.weight_decay << '|' << cfg.model.channels << '|' << cfg.model.dim << '|'
     << cfg.model.high_res << '|' << cfg.model.decouple_seg << '|'
     << cfg.model.adjacent_interaction << '|' << cfg.model.decoder_reweight << '|'
     << cfg.model.use_object_feats << '|' << cfg.model.use_part_feats;
  return fnv1a(ss.str());
}

}  // namespace unires
