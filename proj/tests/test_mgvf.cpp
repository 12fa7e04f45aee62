// SPDX-License-Identifier: Apache-2.0

#include "unires/mgvf.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace unires;

namespace {

// A feature map filled from an rng, plus a matching tape constant.
FeatureMap random_map(int gh, int gw, long C, double stride, std::uint64_t seed) {
  FeatureMap fm;
  fm.grid_h = gh;
  fm.grid_w = gw;
  fm.channels = C;
  fm.stride = stride;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 1);
  fm.values = Mat(static_cast<long>(gh) * gw, C);
  for (long r = 0; r < fm.values.rows(); ++r)
    for (long c = 0; c < C; ++c) fm.values(r, c) = d(rng);
  return fm;
}

}  // namespace

TEST_CASE("grid proposals tile the image: 2x2 object, 4x4 part") {
  ProposalSet obj = grid_proposals(64, 64, ProposalLevel::OBJECT);
  ProposalSet part = grid_proposals(64, 64, ProposalLevel::PART);
  CHECK(obj.boxes.size() == 4);
  CHECK(part.boxes.size() == 16);
  CHECK(obj.source == ProposalSource::GRID);
  double area = 0;
  for (const auto& b : obj.boxes) area += (b.x1 - b.x0) * (b.y1 - b.y0);
  CHECK(area == Catch::Approx(64.0 * 64.0));
  CHECK(obj.boxes.front().x0 == 0.0);
  CHECK(obj.boxes.back().x1 == 64.0);
}

TEST_CASE("external proposal provider is called with image id and level") {
  std::string seen_id;
  ProposalLevel seen_level = ProposalLevel::OBJECT;
  ExternalProposalFn fn = [&](const std::string& id, ProposalLevel lvl) {
    seen_id = id;
    seen_level = lvl;
    return std::vector<BoundingBox>{{1, 2, 3, 4}};
  };
  ProposalSet s = external_proposals(fn, "img-7", ProposalLevel::PART);
  CHECK(seen_id == "img-7");
  CHECK(seen_level == ProposalLevel::PART);
  CHECK(s.source == ProposalSource::EXTERNAL);
  REQUIRE(s.boxes.size() == 1);
  CHECK(s.boxes[0].x1 == 3);
}

TEST_CASE("region features over a constant map are that constant") {
  FeatureMap fm = random_map(8, 8, 4, 8.0, 0);
  fm.values.setConstant(2.5);
  ParamStore store(1);
  Ctx ctx(store);
  ad::Var fv = ctx.tape.constant(fm.values);
  ProposalSet props = ground_truth_proposals({{4, 4, 36, 36}, {10, 20, 50, 60}},
                                             ProposalLevel::OBJECT);
  VisionFlowConfig cfg;
  ad::Var feats = extract_region_features(ctx, fv, fm, props, cfg);
  REQUIRE(feats.rows() == 2);
  REQUIRE(feats.cols() == 4);
  for (long r = 0; r < 2; ++r)
    for (long c = 0; c < 4; ++c)
      CHECK(feats.val()(r, c) == Catch::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("region features are linear in the feature map") {
  FeatureMap fm = random_map(8, 8, 4, 8.0, 3);
  ParamStore store(1);
  ProposalSet props = ground_truth_proposals({{2, 2, 30, 30}}, ProposalLevel::OBJECT);
  VisionFlowConfig cfg;
  auto run = [&](const Mat& values) {
    Ctx ctx(store);
    FeatureMap m = fm;
    m.values = values;
    return extract_region_features(ctx, ctx.tape.constant(values), m, props, cfg).val();
  };
  Mat a = run(fm.values);
  Mat b = run(2.0 * fm.values);
  CHECK((b - 2.0 * a).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("cascade disabled passes raw region features through") {
  FeatureMap fl = random_map(4, 4, 8, 16.0, 5);
  FeatureMap fh = random_map(8, 8, 8, 8.0, 6);
  ParamStore store(2);
  VisionFlowConfig cfg;
  cfg.adjacent_interaction = false;
  ProposalSet s_o = ground_truth_proposals({{4, 4, 40, 40}}, ProposalLevel::OBJECT);
  ProposalSet s_p = ground_truth_proposals({{8, 8, 20, 20}}, ProposalLevel::PART);

  Ctx ctx(store);
  ad::Var flv = ctx.tape.constant(fl.values);
  ad::Var fhv = ctx.tape.constant(fh.values);
  VisionFlowOutput out = run_vision_flow(ctx, flv, fl, fhv, fh, s_o, s_p, cfg);
  Mat raw_o = extract_region_features(ctx, fhv, fh, s_o, cfg).val();
  Mat raw_p = extract_region_features(ctx, fhv, fh, s_p, cfg).val();
  CHECK((out.f_o_enh.val() - raw_o).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out.f_p_enh.val() - raw_p).cwiseAbs().maxCoeff() == 0.0);
  // no cascade parameters should exist
  for (const auto& [name, m] : store.all())
    CHECK(name.rfind("mgvf.", 0) != 0);
}

TEST_CASE("part step attends to enhanced objects, not the raw image features") {
  FeatureMap fl = random_map(4, 4, 8, 16.0, 7);
  FeatureMap fh = random_map(8, 8, 8, 8.0, 8);
  ParamStore store(3);
  VisionFlowConfig cfg;
  ProposalSet s_p = ground_truth_proposals({{8, 8, 20, 20}}, ProposalLevel::PART);
  ProposalSet s_o1 = ground_truth_proposals({{4, 4, 40, 40}}, ProposalLevel::OBJECT);
  ProposalSet s_o2 = ground_truth_proposals({{24, 24, 60, 60}}, ProposalLevel::OBJECT);

  auto run = [&](const ProposalSet& s_o) {
    Ctx ctx(store);
    ad::Var flv = ctx.tape.constant(fl.values);
    ad::Var fhv = ctx.tape.constant(fh.values);
    return run_vision_flow(ctx, flv, fl, fhv, fh, s_o, s_p, cfg).f_p_enh.val();
  };
  Mat p1 = run(s_o1);
  Mat p2 = run(s_o2);
  // same part box, same image features; only the object proposals moved
  CHECK((p1 - p2).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("empty object set falls back to image features for the part step") {
  FeatureMap fl = random_map(4, 4, 8, 16.0, 9);
  FeatureMap fh = random_map(8, 8, 8, 8.0, 10);
  ParamStore store(4);
  VisionFlowConfig cfg;
  ProposalSet s_o;
  s_o.level = ProposalLevel::OBJECT;
  ProposalSet s_p = ground_truth_proposals({{8, 8, 20, 20}}, ProposalLevel::PART);

  Ctx ctx(store);
  ad::Var flv = ctx.tape.constant(fl.values);
  ad::Var fhv = ctx.tape.constant(fh.values);
  VisionFlowOutput out = run_vision_flow(ctx, flv, fl, fhv, fh, s_o, s_p, cfg);
  CHECK(out.n_obj == 0);
  CHECK(out.f_o_enh.rows() == 0);
  CHECK(out.f_p_enh.rows() == 1);
  // object-step parameters were never needed
  CHECK_FALSE(store.has("mgvf.obj.wq"));
  CHECK(store.has("mgvf.part.wq"));
}

TEST_CASE("output row counts match proposal counts") {
  FeatureMap fl = random_map(4, 4, 8, 16.0, 11);
  FeatureMap fh = random_map(8, 8, 8, 8.0, 12);
  ParamStore store(5);
  VisionFlowConfig cfg;
  ProposalSet s_o = grid_proposals(64, 64, ProposalLevel::OBJECT);
  ProposalSet s_p = grid_proposals(64, 64, ProposalLevel::PART);
  Ctx ctx(store);
  ad::Var flv = ctx.tape.constant(fl.values);
  ad::Var fhv = ctx.tape.constant(fh.values);
  VisionFlowOutput out = run_vision_flow(ctx, flv, fl, fhv, fh, s_o, s_p, cfg);
  CHECK(out.f_o_enh.rows() == 4);
  CHECK(out.f_p_enh.rows() == 16);
  CHECK(out.f_o_enh.cols() == 8);
}

TEST_CASE("gradients flow through the full cascade") {
  FeatureMap fl = random_map(2, 2, 4, 16.0, 13);
  FeatureMap fh = random_map(4, 4, 4, 8.0, 14);
  ParamStore store(6);
  VisionFlowConfig cfg;
  ProposalSet s_o = ground_truth_proposals({{4, 4, 24, 24}}, ProposalLevel::OBJECT);
  ProposalSet s_p = ground_truth_proposals({{6, 6, 16, 16}}, ProposalLevel::PART);
  {  // materialize
    Ctx ctx(store);
    ad::Var flv = ctx.tape.constant(fl.values);
    ad::Var fhv = ctx.tape.constant(fh.values);
    run_vision_flow(ctx, flv, fl, fhv, fh, s_o, s_p, cfg);
  }
  auto res = grad_check(store, {"mgvf.obj.wq", "mgvf.part.wv", "mgvf.part.wo"},
                        [&](Ctx& ctx) {
                          ad::Var flv = ctx.tape.constant(fl.values);
                          ad::Var fhv = ctx.tape.constant(fh.values);
                          VisionFlowOutput out =
                              run_vision_flow(ctx, flv, fl, fhv, fh, s_o, s_p, cfg);
                          ad::Var cat = ad::concat_rows({out.f_o_enh, out.f_p_enh});
                          return ad::sum_all(ad::hadamard(cat, cat));
                        });
  INFO(res.worst_param);
  CHECK(res.max_rel_err < 1e-4);
}
