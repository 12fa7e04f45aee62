// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset generation, training, evaluation,
// report formatting, the data-generation engine and gradient checks.

#include "unires/config.hpp"
#include "unires/datagen_engine.hpp"
#include "unires/train.hpp"
#include "unires/wire_backend.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;
using namespace unires;

namespace {

nlohmann::json metric_values_json(const MetricValues& v) {
  nlohmann::json j;
  j["n_records"] = v.n_records;
  if (v.has_miou) j["miou"] = v.miou;
  if (v.has_oiou) {
    j["oiou"] = v.oiou;
    j["ciou"] = v.ciou;
  }
  j["giou"] = v.giou;
  if (v.has_nacc) j["n_acc"] = v.n_acc;
  return j;
}

nlohmann::json report_json(const MetricReport& rep) {
  return {{"all", metric_values_json(rep.all)},
          {"object_only", metric_values_json(rep.object_only)},
          {"part_only", metric_values_json(rep.part_only)},
          {"notes", rep.notes}};
}

void print_report_table(const MetricReport& rep, std::ostream& os) {
  auto row = [&](const char* name, const MetricValues& v) {
    auto cell = [](bool has, double x) {
      char buf[32];
      if (!has) return std::string("     --");
      std::snprintf(buf, sizeof(buf), "%7.4f", x);
      return std::string(buf);
    };
    os << name << " | " << cell(v.has_miou, v.miou) << " | " << cell(v.has_oiou, v.oiou)
       << " | " << cell(v.has_oiou, v.ciou) << " | " << cell(true, v.giou) << " | "
       << cell(v.has_nacc, v.n_acc) << " | " << v.n_records << "\n";
  };
  os << "split       |    mIoU |    oIoU |    cIoU |    gIoU |   N-acc | n\n";
  os << "------------+---------+---------+---------+---------+---------+----\n";
  row("all        ", rep.all);
  row("object-only", rep.object_only);
  row("part-only  ", rep.part_only);
}

nlohmann::json record_to_json(const EvalRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["granularity"] = r.granularity == Granularity::PART ? "part" : "object";
  j["gt_no_target"] = r.gt_no_target;
  j["pred"] = r.pred ? rle_to_json(*r.pred) : nlohmann::json();
  j["gt"] = r.gt ? rle_to_json(*r.gt) : nlohmann::json();
  return j;
}

EvalRecord record_from_json(const nlohmann::json& j) {
  EvalRecord r;
  r.id = j.at("id").get<std::string>();
  r.granularity = j.value("granularity", "object") == "part" ? Granularity::PART
                                                             : Granularity::OBJECT;
  r.gt_no_target = j.value("gt_no_target", false);
  if (!j.at("pred").is_null()) r.pred = rle_from_json(j.at("pred"));
  if (!j.at("gt").is_null()) r.gt = rle_from_json(j.at("gt"));
  return r;
}

std::vector<EvalRecord> load_records(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw parse_error("cannot open records file " + path);
  std::vector<EvalRecord> out;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(record_from_json(nlohmann::json::parse(line)));
  return out;
}

void write_overlay(const GroundingSample& s, const BinaryMask& pred,
                   const std::string& path) {
  ImageTensor img = s.image;
  for (int y = 0; y < img.height && y < pred.height; ++y)
    for (int x = 0; x < img.width && x < pred.width; ++x)
      if (pred.at(y, x)) {
        img.chan[0](y, x) = 0.5 * img.chan[0](y, x) + 0.5;
        img.chan[1](y, x) *= 0.5;
        img.chan[2](y, x) *= 0.5;
      }
  png_write_file(path, img);
}

std::vector<GroundingSample> dataset_for(const TrainConfig& cfg, std::uint64_t seed) {
  SynthConfig sc;
  sc.canvas = cfg.model.low_res;
  sc.min_size = std::max(6, cfg.model.low_res / 3);
  sc.max_size = std::max(sc.min_size + 2, cfg.model.low_res / 2);
  return generate_dataset(seed, cfg.dataset_n, cfg.mix, sc);
}

int run_grad_checks() {
  int failures = 0;
  auto report = [&](const std::string& name, const GradCheckResult& res) {
    bool ok = res.max_rel_err < 1e-4;
    if (!ok) ++failures;
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name
              << "  max_rel_err=" << res.max_rel_err
              << (res.worst_param.empty() ? "" : "  worst=" + res.worst_param) << "\n";
  };

  {  // losses through a sigmoid head
    ParamStore store(3);
    store.ensure("probe.logits", 4, 4, 0.5);
    Mat gt = Mat::Zero(4, 4);
    gt(0, 0) = gt(1, 1) = gt(2, 2) = 1;
    report("losses", grad_check(store, {"probe.logits"}, [&](Ctx& ctx) {
             ad::Var lg = ctx.param("probe.logits");
             ad::Var l_lm = ad::softmax_ce(lg, {0, 1, 2, 3}, {0, 2});
             ad::Var p = ad::sigmoid(lg);
             return combine_on_tape(l_lm, ad::bce_loss(p, gt), ad::dice_loss(p, gt),
                                    LossWeights{});
           }));
  }
  {  // attention block
    ParamStore store(5);
    Mat x = Mat::Random(3, 8);
    {
      Ctx ctx(store);
      nn::attention(ctx, ctx.tape.constant(x), ctx.tape.constant(x), "attn", 8, 2);
    }
    report("attention",
           grad_check(store, {"attn.wq", "attn.wk", "attn.wv", "attn.wo"},
                      [&](Ctx& ctx) {
                        ad::Var v = nn::attention(ctx, ctx.tape.constant(x),
                                                  ctx.tape.constant(x), "attn", 8, 2);
                        return ad::sum_all(ad::hadamard(v, v));
                      }));
  }
  {  // vision flow cascade
    FeatureMap fl, fh;
    fl.grid_h = fl.grid_w = 2;
    fl.channels = 4;
    fl.stride = 16;
    fl.values = Mat::Random(4, 4);
    fh.grid_h = fh.grid_w = 4;
    fh.channels = 4;
    fh.stride = 8;
    fh.values = Mat::Random(16, 4);
    ParamStore store(6);
    VisionFlowConfig cfg;
    ProposalSet s_o = ground_truth_proposals({{4, 4, 24, 24}}, ProposalLevel::OBJECT);
    ProposalSet s_p = ground_truth_proposals({{6, 6, 16, 16}}, ProposalLevel::PART);
    {
      Ctx ctx(store);
      run_vision_flow(ctx, ctx.tape.constant(fl.values), fl,
                      ctx.tape.constant(fh.values), fh, s_o, s_p, cfg);
    }
    report("vision-flow",
           grad_check(store, {"mgvf.obj.wq", "mgvf.part.wv"}, [&](Ctx& ctx) {
             VisionFlowOutput out =
                 run_vision_flow(ctx, ctx.tape.constant(fl.values), fl,
                                 ctx.tape.constant(fh.values), fh, s_o, s_p, cfg);
             ad::Var cat = ad::concat_rows({out.f_o_enh, out.f_p_enh});
             return ad::sum_all(ad::hadamard(cat, cat));
           }));
  }
  {  // pixel decoder
    DecoderConfig cfg;
    cfg.grid_h = cfg.grid_w = 4;
    cfg.upsample_factor = 4;
    cfg.channels = 6;
    cfg.seg_dim = 8;
    ParamStore store(7);
    Mat f_r = Mat::Random(16, cfg.channels);
    Mat seg = Mat::Random(1, cfg.seg_dim);
    {
      Ctx ctx(store);
      decode(ctx, ctx.tape.constant(f_r), ctx.tape.constant(seg), cfg);
    }
    report("pixel-decoder",
           grad_check(store, {"dec.segproj.w", "dec.upk", "dec.upb"}, [&](Ctx& ctx) {
             MaskLogits out =
                 decode(ctx, ctx.tape.constant(f_r), ctx.tape.constant(seg), cfg);
             return ad::bce_loss(ad::sigmoid(out.var), Mat::Constant(16, 16, 1.0));
           }));
  }
  {  // end-to-end model loss wrt a few parameters
    ModelConfig mc;
    mc.low_res = 16;
    mc.high_res = 32;
    mc.ground_res = 16;
    mc.stride_low = 8;
    mc.stride_high = 8;
    mc.stride_ground = 4;
    mc.dim = 16;
    mc.channels = 8;
    mc.enc_depth = 1;
    mc.llm_layers = 1;
    mc.llm_heads = 2;
    UniResModel model(mc, builtin_vocabulary(), 42);
    SynthConfig sc;
    sc.canvas = 16;
    sc.min_size = 6;
    sc.max_size = 9;
    auto data = generate_dataset(3, 1, MixRatios{1.0, 0.0, 0.0, 0.0}, sc);
    report("model",
           grad_check(model.params(), {"mgfe.proj.w", "dec.segproj.w", "llm.emb"},
                      [&](Ctx& ctx) {
                        return model.forward_train(ctx, data[0], LossWeights{}).total;
                      },
                      1e-4));
  }
  std::cout << (failures == 0 ? "all gradient checks passed"
                              : "gradient checks FAILED")
            << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-granularity referring-segmentation toolkit"};
  app.require_subcommand(1);

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::uint64_t gen_seed = 0;
  int gen_n = 64;
  int gen_canvas = 64;
  std::string gen_out = "dataset.jsonl";
  MixRatios gen_mix;
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--n", gen_n, "number of samples");
  gen->add_option("--canvas", gen_canvas, "image side length");
  gen->add_option("--out", gen_out, "output annotation file (JSONL)");
  gen->add_option("--mix-single", gen_mix.single_object, "single-object ratio");
  gen->add_option("--mix-multi", gen_mix.multi_object, "multi-object ratio");
  gen->add_option("--mix-part", gen_mix.part, "part ratio");
  gen->add_option("--mix-no-target", gen_mix.no_target, "no-target ratio");

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_config, train_data, train_out = "run";
  train->add_option("--config", train_config, "key=value config file");
  train->add_option("--data", train_data, "annotation file (default: synthesized)");
  train->add_option("--out", train_out, "output directory");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_config, eval_data, eval_report = "report.json";
  std::string eval_records, eval_overlays;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--config", eval_config, "config file used for training");
  eval->add_option("--data", eval_data, "annotation file (default: synthesized)");
  eval->add_option("--report", eval_report, "metric report output (JSON)");
  eval->add_option("--records", eval_records, "per-sample records output (JSONL)");
  eval->add_option("--overlay-dir", eval_overlays, "write PNG mask overlays here");

  // ---- report ----
  auto* rep = app.add_subcommand("report", "format metrics from eval records");
  std::string rep_from, rep_format = "table";
  rep->add_option("--from", rep_from, "records file from eval --records")->required();
  rep->add_option("--format", rep_format, "table or json")
      ->check(CLI::IsMember({"table", "json"}));

  // ---- engine-run ----
  auto* engine = app.add_subcommand("engine-run", "run the data-generation engine");
  std::uint64_t eng_seed = 0;
  int eng_images = 8;
  std::string eng_out = "pairs.jsonl", eng_backend_cmd;
  bool eng_resume = false;
  engine->add_option("--seed", eng_seed, "scene rng seed");
  engine->add_option("--images", eng_images, "number of mock images");
  engine->add_option("--out", eng_out, "output pair file (JSONL)");
  engine->add_option("--backend-cmd", eng_backend_cmd,
                     "external backend command speaking JSON over stdio");
  engine->add_flag("--resume", eng_resume, "resume after the last committed image");

  // ---- grad-check ----
  app.add_subcommand("grad-check", "finite-difference gradient verification");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      SynthConfig sc;
      sc.canvas = gen_canvas;
      sc.min_size = std::max(6, gen_canvas / 3);
      sc.max_size = std::max(sc.min_size + 2, gen_canvas / 2);
      auto data = generate_dataset(gen_seed, gen_n, gen_mix, sc);
      save_annotations(data, gen_out);
      std::cout << "wrote " << data.size() << " samples to " << gen_out << "\n";
    } else if (train->parsed()) {
      TrainConfig cfg = train_config.empty() ? TrainConfig{} : load_config(train_config);
      std::vector<GroundingSample> data = train_data.empty()
                                              ? dataset_for(cfg, cfg.seed)
                                              : load_refcoco_style(train_data);
      fs::create_directories(train_out);
      Vocabulary vocab = builtin_vocabulary();
      UniResModel model(cfg.model, vocab, cfg.seed);
      AdamW opt;
      std::ofstream log(train_out + "/loss_log.jsonl");
      run_training(model, data, cfg, opt, &log);
      save_checkpoint(train_out + "/model.ckpt", model, opt, cfg.total_steps(),
                      config_hash(cfg));
      vocab.save(train_out + "/vocab.txt");
      std::cout << "trained " << cfg.total_steps() << " steps; checkpoint at "
                << train_out << "/model.ckpt\n";
    } else if (eval->parsed()) {
      TrainConfig cfg = eval_config.empty() ? TrainConfig{} : load_config(eval_config);
      std::vector<GroundingSample> data = eval_data.empty()
                                              ? dataset_for(cfg, cfg.seed + 1)
                                              : load_refcoco_style(eval_data);
      UniResModel model(cfg.model, builtin_vocabulary(), cfg.seed);
      AdamW opt;
      load_checkpoint(eval_ckpt, model, opt);
      EvalResult ev = evaluate(model, data);
      nlohmann::json out = report_json(ev.report);
      out["granularity_accuracy"] = ev.granularity_accuracy;
      std::ofstream rf(eval_report);
      rf << out.dump(2) << "\n";
      if (!eval_records.empty()) {
        std::ofstream recf(eval_records);
        for (const auto& r : ev.records) recf << record_to_json(r).dump() << "\n";
      }
      if (!eval_overlays.empty()) {
        fs::create_directories(eval_overlays);
        for (size_t i = 0; i < data.size(); ++i) {
          Prediction p = model.predict(data[i]);
          write_overlay(data[i], p.mask, eval_overlays + "/" + data[i].id + ".png");
        }
      }
      print_report_table(ev.report, std::cout);
      std::cout << "report written to " << eval_report << "\n";
    } else if (rep->parsed()) {
      MetricReport r = compute_report(load_records(rep_from));
      if (rep_format == "json")
        std::cout << report_json(r).dump(2) << "\n";
      else
        print_report_table(r, std::cout);
    } else if (engine->parsed()) {
      std::vector<SceneSpec> scenes;
      std::mt19937_64 rng(eng_seed);
      SynthConfig sc;
      std::uniform_int_distribution<int> nobj(1, 3);
      for (int i = 0; i < eng_images; ++i) {
        std::vector<std::pair<ShapeKind, int>> kc;
        int n = nobj(rng);
        std::uniform_int_distribution<int> kind(0, 3), color(0, 5);
        while (static_cast<int>(kc.size()) < n) {
          std::pair<ShapeKind, int> cand{static_cast<ShapeKind>(kind(rng)), color(rng)};
          if (std::find(kc.begin(), kc.end(), cand) == kc.end()) kc.push_back(cand);
        }
        auto scene = detail::place_objects(rng, sc, kc);
        if (scene) scenes.push_back(*scene);
      }
      MockBackends mocks(std::move(scenes));
      BackendClients clients;
      std::shared_ptr<SubprocessBackend> proc;
      if (eng_backend_cmd.empty()) {
        clients = mocks.clients();
      } else {
        proc = std::make_shared<SubprocessBackend>(eng_backend_cmd);
        clients = make_subprocess_backends(proc);
      }
      std::optional<std::string> token;
      if (eng_resume) token = read_resume_token(eng_out);
      RunSummary sum = run_pipeline(mocks.images(), clients, eng_out, token);
      std::cout << "processed=" << sum.processed << " kept=" << sum.kept
                << " dropped=" << sum.dropped << " failed=" << sum.failed << "\n";
    } else {  // grad-check
      return run_grad_checks();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
