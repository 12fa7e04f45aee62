// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-granularity dataset: simple shape scenes whose parts are
// exact geometric functions of the scene spec, templated referring
// expressions, and RefCOCO-style annotation file IO.

#pragma once

#include "unires/geometry.hpp"
#include "unires/metrics.hpp"
#include "unires/mgfe.hpp"
#include "unires/png.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace unires {

enum class ShapeKind { HOUSE, CAR, TREE, PERSON };

inline const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> names = {"house", "car", "tree", "person"};
  return names;
}

inline const std::vector<std::string>& color_names() {
  static const std::vector<std::string> names = {"red",    "green", "blue",
                                                 "yellow", "orange", "cyan"};
  return names;
}

inline std::array<double, 3> color_rgb(int color) {
  static const std::array<std::array<double, 3>, 6> rgb = {{{0.85, 0.15, 0.15},
                                                            {0.15, 0.7, 0.2},
                                                            {0.2, 0.3, 0.85},
                                                            {0.9, 0.85, 0.2},
                                                            {0.95, 0.55, 0.1},
                                                            {0.15, 0.8, 0.8}}};
  return rgb[color];
}

inline const std::vector<std::string>& part_names(ShapeKind kind) {
  static const std::vector<std::string> house = {"roof", "door", "window"};
  static const std::vector<std::string> car = {"roof", "wheel"};
  static const std::vector<std::string> tree = {"trunk", "crown"};
  static const std::vector<std::string> person = {"head"};
  switch (kind) {
    case ShapeKind::HOUSE: return house;
    case ShapeKind::CAR: return car;
    case ShapeKind::TREE: return tree;
    default: return person;
  }
}

struct ObjectSpec {
  ShapeKind kind = ShapeKind::HOUSE;
  int color = 0;  // index into color_names()
  int x = 0, y = 0;  // top-left of the bounding square
  int size = 24;     // side length in pixels
};

struct SceneSpec {
  int canvas = 64;
  std::vector<ObjectSpec> objects;
};

namespace render {

inline void fill_rect(BinaryMask& m, int x0, int y0, int x1, int y1) {
  for (int y = std::max(0, y0); y < std::min(m.height, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(m.width, x1); ++x) m.at(y, x) = 1;
}

// isosceles triangle with apex at top-center of [x0,x1) x [y0,y1)
inline void fill_triangle(BinaryMask& m, int x0, int y0, int x1, int y1) {
  int h = y1 - y0;
  double cx = (x0 + x1) / 2.0;
  double half = (x1 - x0) / 2.0;
  for (int y = std::max(0, y0); y < std::min(m.height, y1); ++y) {
    double t = h <= 1 ? 1.0 : static_cast<double>(y - y0 + 1) / h;
    int lo = static_cast<int>(std::ceil(cx - half * t));
    int hi = static_cast<int>(std::floor(cx + half * t));
    for (int x = std::max(0, lo); x <= std::min(m.width - 1, hi); ++x) m.at(y, x) = 1;
  }
}

inline BinaryMask part_mask(int canvas, const ObjectSpec& o, const std::string& part) {
  BinaryMask m(canvas, canvas);
  int s = o.size, x = o.x, y = o.y;
  auto px = [&](double f) { return x + static_cast<int>(std::lround(f * s)); };
  auto py = [&](double f) { return y + static_cast<int>(std::lround(f * s)); };
  switch (o.kind) {
    case ShapeKind::HOUSE:
      if (part == "roof") fill_triangle(m, px(0.0), py(0.0), px(1.0), py(0.4));
      else if (part == "door") fill_rect(m, px(0.4), py(0.7), px(0.6), py(1.0));
      else if (part == "window") fill_rect(m, px(0.1), py(0.5), px(0.3), py(0.65));
      break;
    case ShapeKind::CAR:
      if (part == "roof") fill_rect(m, px(0.25), py(0.15), px(0.75), py(0.4));
      else if (part == "wheel") {
        fill_rect(m, px(0.1), py(0.75), px(0.3), py(1.0));
        fill_rect(m, px(0.7), py(0.75), px(0.9), py(1.0));
      }
      break;
    case ShapeKind::TREE:
      if (part == "trunk") fill_rect(m, px(0.4), py(0.5), px(0.6), py(1.0));
      else if (part == "crown") fill_triangle(m, px(0.0), py(0.0), px(1.0), py(0.55));
      break;
    case ShapeKind::PERSON:
      if (part == "head") fill_rect(m, px(0.3), py(0.0), px(0.7), py(0.3));
      break;
  }
  return m;
}

inline BinaryMask object_mask(int canvas, const ObjectSpec& o) {
  BinaryMask m(canvas, canvas);
  int s = o.size, x = o.x, y = o.y;
  auto px = [&](double f) { return x + static_cast<int>(std::lround(f * s)); };
  auto py = [&](double f) { return y + static_cast<int>(std::lround(f * s)); };
  switch (o.kind) {
    case ShapeKind::HOUSE:
      fill_rect(m, px(0.0), py(0.4), px(1.0), py(1.0));
      fill_triangle(m, px(0.0), py(0.0), px(1.0), py(0.4));
      break;
    case ShapeKind::CAR:
      fill_rect(m, px(0.0), py(0.4), px(1.0), py(0.75));
      fill_rect(m, px(0.25), py(0.15), px(0.75), py(0.4));
      fill_rect(m, px(0.1), py(0.75), px(0.3), py(1.0));
      fill_rect(m, px(0.7), py(0.75), px(0.9), py(1.0));
      break;
    case ShapeKind::TREE:
      fill_triangle(m, px(0.0), py(0.0), px(1.0), py(0.55));
      fill_rect(m, px(0.4), py(0.5), px(0.6), py(1.0));
      break;
    case ShapeKind::PERSON:
      fill_rect(m, px(0.3), py(0.0), px(0.7), py(0.3));
      fill_rect(m, px(0.35), py(0.3), px(0.65), py(1.0));
      break;
  }
  return m;
}

inline ImageTensor render_scene(const SceneSpec& scene) {
  ImageTensor img(scene.canvas, scene.canvas);
  for (auto& c : img.chan) c.setConstant(0.92);
  for (const auto& o : scene.objects) {
    BinaryMask m = object_mask(scene.canvas, o);
    auto rgb = color_rgb(o.color);
    for (int y = 0; y < scene.canvas; ++y)
      for (int x = 0; x < scene.canvas; ++x)
        if (m.at(y, x))
          for (int k = 0; k < 3; ++k) img.chan[k](y, x) = rgb[k];
    // parts get a darker shade of the object color so they are visible
    for (const auto& part : part_names(o.kind)) {
      BinaryMask pm = part_mask(scene.canvas, o, part);
      double shade = 0.55 + 0.12 * (&part - part_names(o.kind).data());
      for (int y = 0; y < scene.canvas; ++y)
        for (int x = 0; x < scene.canvas; ++x)
          if (pm.at(y, x))
            for (int k = 0; k < 3; ++k) img.chan[k](y, x) = rgb[k] * shade;
    }
  }
  return img;
}

}  // namespace render

inline BoundingBox object_box(const ObjectSpec& o) {
  BoundingBox b;
  b.x0 = o.x;
  b.y0 = o.y;
  b.x1 = o.x + o.size;
  b.y1 = o.y + o.size;
  return b;
}

inline BoundingBox mask_bbox(const BinaryMask& m) {
  int x0 = m.width, y0 = m.height, x1 = -1, y1 = -1;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  BoundingBox b;
  if (x1 < 0) return b;
  b.x0 = x0;
  b.y0 = y0;
  b.x1 = x1 + 1;
  b.y1 = y1 + 1;
  return b;
}

struct GroundingSample {
  std::string id;
  ImageTensor image;
  std::string expression;
  std::vector<BinaryMask> gt_masks;  // union is the supervision target
  Granularity granularity = Granularity::OBJECT;
  bool no_target = false;
  std::vector<BoundingBox> object_boxes;  // all scene objects (proposals)
  std::vector<BoundingBox> part_boxes;    // all parts of all objects
  std::optional<SceneSpec> scene;         // present for synthetic samples

  BinaryMask gt_union() const {
    if (gt_masks.empty()) {
      return BinaryMask(image.height, image.width);
    }
    BinaryMask u = gt_masks[0];
    for (size_t i = 1; i < gt_masks.size(); ++i)
      for (size_t j = 0; j < u.bits.size(); ++j) u.bits[j] |= gt_masks[i].bits[j];
    return u;
  }
};

inline Vocabulary builtin_vocabulary() {
  std::vector<std::string> words = {"the", "of", "all", "describe"};
  for (const auto& c : color_names()) words.push_back(c);
  for (const auto& s : shape_names()) {
    words.push_back(s);
    words.push_back(s + "s");
  }
  for (int k = 0; k < 4; ++k)
    for (const auto& p : part_names(static_cast<ShapeKind>(k)))
      if (std::find(words.begin(), words.end(), p) == words.end()) words.push_back(p);
  return Vocabulary(std::move(words));
}

struct SynthConfig {
  int canvas = 64;
  int min_size = 20, max_size = 30;
  std::vector<ShapeKind> kinds = {ShapeKind::HOUSE, ShapeKind::CAR, ShapeKind::TREE,
                                  ShapeKind::PERSON};
};

struct MixRatios {
  double single_object = 0.4;
  double multi_object = 0.2;
  double part = 0.3;
  double no_target = 0.1;
};

namespace detail {

// largest-remainder apportionment of n over the four classes
inline std::array<int, 4> apportion(int n, const MixRatios& mix) {
  std::array<double, 4> r = {mix.single_object, mix.multi_object, mix.part,
                             mix.no_target};
  double total = r[0] + r[1] + r[2] + r[3];
  if (std::abs(total - 1.0) > 1e-9)
    throw config_error("generate_dataset: mix ratios must sum to 1");
  std::array<int, 4> counts{};
  std::array<double, 4> rem{};
  int assigned = 0;
  for (int i = 0; i < 4; ++i) {
    double exact = r[i] * n;
    counts[i] = static_cast<int>(std::floor(exact));
    rem[i] = exact - counts[i];
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 4; ++i)
      if (rem[i] > rem[best]) best = i;
    ++counts[best];
    rem[best] = -1;
    ++assigned;
  }
  return counts;
}

inline bool boxes_overlap(const BoundingBox& a, const BoundingBox& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

// Places `n` non-overlapping objects; kinds/colors supplied by the caller.
inline std::optional<SceneSpec> place_objects(std::mt19937_64& rng,
                                              const SynthConfig& cfg,
                                              const std::vector<std::pair<ShapeKind, int>>&
                                                  kind_colors) {
  SceneSpec scene;
  scene.canvas = cfg.canvas;
  for (auto [kind, color] : kind_colors) {
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      ObjectSpec o;
      o.kind = kind;
      o.color = color;
      std::uniform_int_distribution<int> sz(cfg.min_size, cfg.max_size);
      o.size = sz(rng);
      std::uniform_int_distribution<int> px(0, cfg.canvas - o.size);
      o.x = px(rng);
      o.y = px(rng);
      BoundingBox b = object_box(o);
      bool ok = true;
      for (const auto& other : scene.objects)
        if (boxes_overlap(b, object_box(other))) ok = false;
      if (ok) {
        scene.objects.push_back(o);
        placed = true;
      }
    }
    if (!placed) return std::nullopt;
  }
  return scene;
}

}  // namespace detail

inline void finalize_sample(GroundingSample& s) {
  const SceneSpec& scene = *s.scene;
  s.image = render::render_scene(scene);
  for (const auto& o : scene.objects) {
    s.object_boxes.push_back(object_box(o));
    for (const auto& p : part_names(o.kind)) {
      BinaryMask pm = render::part_mask(scene.canvas, o, p);
      if (!pm.empty_mask()) s.part_boxes.push_back(mask_bbox(pm));
    }
  }
}

// Deterministic given seed. Expression templates:
//   "the {color} {kind}" / "all {kind}s" / "{part} of the {color} {kind}"
// plus no-target phrases referencing an absent color+kind combination.
inline std::vector<GroundingSample> generate_dataset(std::uint64_t seed, int n_samples,
                                                     const MixRatios& mix,
                                                     const SynthConfig& cfg = {}) {
  if (n_samples < 1) throw config_error("generate_dataset: n_samples must be >= 1");
  bool any_parts = false;
  for (auto k : cfg.kinds)
    if (!part_names(k).empty()) any_parts = true;
  if (mix.part > 0 && !any_parts)
    throw config_error("generate_dataset: part ratio > 0 but no kind has parts");

  auto counts = detail::apportion(n_samples, mix);
  std::vector<int> classes;
  for (int cls = 0; cls < 4; ++cls)
    for (int i = 0; i < counts[cls]; ++i) classes.push_back(cls);
  std::mt19937_64 order_rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::shuffle(classes.begin(), classes.end(), order_rng);

  std::vector<GroundingSample> out;
  for (int idx = 0; idx < n_samples; ++idx) {
    std::mt19937_64 rng(seed * 0x100000001b3ull + static_cast<std::uint64_t>(idx));
    int cls = classes[idx];
    GroundingSample s;
    s.id = "synth-" + std::to_string(seed) + "-" + std::to_string(idx);

    std::uniform_int_distribution<int> kind_pick(0, static_cast<int>(cfg.kinds.size()) - 1);
    std::uniform_int_distribution<int> color_pick(0, static_cast<int>(color_names().size()) - 1);

    for (int attempt = 0;; ++attempt) {
      if (attempt > 200)
        throw config_error("generate_dataset: could not place a feasible scene");
      std::vector<std::pair<ShapeKind, int>> kc;
      int target_idx = 0;
      if (cls == 1) {
        // multi-object: 2-3 same-kind objects with distinct colors
        ShapeKind kind = cfg.kinds[kind_pick(rng)];
        std::uniform_int_distribution<int> cnt(2, 3);
        int n = cnt(rng);
        std::vector<int> colors;
        while (static_cast<int>(colors.size()) < n) {
          int c = color_pick(rng);
          if (std::find(colors.begin(), colors.end(), c) == colors.end())
            colors.push_back(c);
        }
        for (int c : colors) kc.emplace_back(kind, c);
      } else {
        // one target plus 0-2 distractors with distinct (kind,color) pairs
        std::uniform_int_distribution<int> extra(0, 2);
        int n = 1 + extra(rng);
        while (static_cast<int>(kc.size()) < n) {
          std::pair<ShapeKind, int> cand{cfg.kinds[kind_pick(rng)], color_pick(rng)};
          if (std::find(kc.begin(), kc.end(), cand) == kc.end()) kc.push_back(cand);
        }
        // the expression must be unambiguous: no duplicate kinds for MULTI-free
        bool dup_kind_color = false;
        for (size_t a = 0; a < kc.size(); ++a)
          for (size_t b = a + 1; b < kc.size(); ++b)
            if (kc[a] == kc[b]) dup_kind_color = true;
        if (dup_kind_color) continue;
      }
      auto scene = detail::place_objects(rng, cfg, kc);
      if (!scene) continue;
      s.scene = *scene;

      const auto& objs = s.scene->objects;
      if (cls == 0) {
        const ObjectSpec& o = objs[target_idx];
        s.expression = "the " + color_names()[o.color] + " " + shape_names()[static_cast<int>(o.kind)];
        s.gt_masks = {render::object_mask(cfg.canvas, o)};
        s.granularity = Granularity::OBJECT;
      } else if (cls == 1) {
        ShapeKind kind = objs[0].kind;
        s.expression = "all " + shape_names()[static_cast<int>(kind)] + "s";
        for (const auto& o : objs)
          if (o.kind == kind) s.gt_masks.push_back(render::object_mask(cfg.canvas, o));
        s.granularity = Granularity::OBJECT;
      } else if (cls == 2) {
        const ObjectSpec& o = objs[target_idx];
        const auto& parts = part_names(o.kind);
        if (parts.empty()) continue;
        std::uniform_int_distribution<int> pp(0, static_cast<int>(parts.size()) - 1);
        const std::string& part = parts[pp(rng)];
        BinaryMask pm = render::part_mask(cfg.canvas, o, part);
        if (pm.empty_mask()) continue;
        s.expression = part + " of the " + color_names()[o.color] + " " +
                       shape_names()[static_cast<int>(o.kind)];
        s.gt_masks = {pm};
        s.granularity = Granularity::PART;
      } else {
        // expression for a (color,kind) pair not in the scene
        ShapeKind kind = cfg.kinds[kind_pick(rng)];
        int color = color_pick(rng);
        bool present = false;
        for (const auto& o : objs)
          if (o.kind == kind && o.color == color) present = true;
        if (present) continue;
        s.expression = "the " + color_names()[color] + " " + shape_names()[static_cast<int>(kind)];
        s.no_target = true;
        s.granularity = Granularity::OBJECT;
      }
      break;
    }
    finalize_sample(s);
    out.push_back(std::move(s));
  }
  return out;
}

// ---- annotation file IO (line-delimited JSON) ----

inline nlohmann::json rle_to_json(const RleMask& rle) {
  return nlohmann::json{{"size", {rle.height, rle.width}}, {"counts", rle.counts}};
}

inline RleMask rle_from_json(const nlohmann::json& j) {
  RleMask rle;
  rle.height = j.at("size").at(0).get<int>();
  rle.width = j.at("size").at(1).get<int>();
  rle.counts = j.at("counts").get<std::vector<long>>();
  return rle;
}

inline void save_annotations(const std::vector<GroundingSample>& samples,
                             const std::string& path) {
  std::ofstream f(path);
  if (!f) throw invalid_state_error("save_annotations: cannot open " + path);
  for (const auto& s : samples) {
    nlohmann::json j;
    j["id"] = s.id;
    j["image"] = "base64:" + base64_encode(png_encode(s.image));
    j["expression"] = s.expression;
    j["granularity"] = s.granularity == Granularity::PART ? "part" : "object";
    j["no_target"] = s.no_target;
    nlohmann::json masks = nlohmann::json::array();
    for (const auto& m : s.gt_masks) masks.push_back(rle_to_json(rle_encode(m)));
    j["masks"] = masks;
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : s.object_boxes)
      boxes.push_back(nlohmann::json::array({b.x0, b.y0, b.x1, b.y1}));
    j["boxes"] = boxes;
    nlohmann::json pboxes = nlohmann::json::array();
    for (const auto& b : s.part_boxes)
      pboxes.push_back(nlohmann::json::array({b.x0, b.y0, b.x1, b.y1}));
    j["part_boxes"] = pboxes;  // extension field; ignored by plain readers
    f << j.dump() << "\n";
  }
}

inline std::vector<GroundingSample> load_refcoco_style(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw parse_error("load_refcoco_style: cannot open " + path);
  std::vector<GroundingSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      GroundingSample s;
      s.id = j.at("id").get<std::string>();
      std::string image = j.at("image").get<std::string>();
      if (image.rfind("base64:", 0) == 0) {
        s.image = png_decode(base64_decode(image.substr(7)));
      } else {
        s.image = png_read_file(image);
      }
      s.expression = j.at("expression").get<std::string>();
      std::string gran = j.value("granularity", "object");
      s.granularity = gran == "part" ? Granularity::PART : Granularity::OBJECT;
      s.no_target = j.value("no_target", false);
      for (const auto& mj : j.at("masks")) {
        RleMask rle = rle_from_json(mj);
        BinaryMask m = rle_decode(rle);
        if (!m.empty_mask() || !s.no_target) s.gt_masks.push_back(std::move(m));
      }
      if (s.no_target) s.gt_masks.clear();
      auto read_boxes = [&](const char* key, std::vector<BoundingBox>& dst) {
        if (!j.contains(key)) return;
        for (const auto& bj : j.at(key)) {
          BoundingBox b;
          b.x0 = bj.at(0).get<double>();
          b.y0 = bj.at(1).get<double>();
          b.x1 = bj.at(2).get<double>();
          b.y1 = bj.at(3).get<double>();
          dst.push_back(b);
        }
      };
      read_boxes("boxes", s.object_boxes);
      read_boxes("part_boxes", s.part_boxes);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw parse_error("load_refcoco_style: line " + std::to_string(lineno) + ": " +
                        e.what());
    } catch (const parse_error& e) {
      throw parse_error("load_refcoco_style: line " + std::to_string(lineno) + ": " +
                        e.what());
    } catch (const corrupt_mask_error& e) {
      throw parse_error("load_refcoco_style: line " + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  return out;
}

}  // namespace unires
