// SPDX-License-Identifier: Apache-2.0
//
// Data-generation engine over pluggable backends: multi-grained captioner,
// promptable segmenter, part-vocabulary provider and similarity scorer,
// with strict >0.5 filtering and resumable streaming output.

#pragma once

#include "unires/data_synth.hpp"
#include "unires/geometry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace unires {

struct EngineImage;

struct BackendClients {
  // caption for a normalized-box prompt
  std::function<std::string(const EngineImage&, const BoundingBox& /*NORM999*/)> captioner;
  // mask for a pixel-box prompt
  std::function<BinaryMask(const EngineImage&, const BoundingBox&)> segmenter;
  // object label -> customized part vocabulary
  std::function<std::vector<std::string>(const std::string&)> part_vocab;
  // similarity of (image crop, caption) in [0,1]
  std::function<double(const EngineImage&, const BoundingBox&, const std::string&)> scorer;
  // part localization: (image, object box, part label) -> pixel box
  std::function<std::optional<BoundingBox>(const EngineImage&, const BoundingBox&,
                                           const std::string&)> part_locator;
};

enum class PairLevel { OBJECT, PART };

struct GeneratedPair {
  std::string image_id;
  int box_index = 0;
  BoundingBox box_pixel;
  BoundingBox box_norm;
  RleMask mask;
  std::string caption;
  PairLevel level = PairLevel::OBJECT;
  double score = 0.0;
  bool kept = false;
  bool failed = false;
  bool inconsistent = false;  // part box not contained in its parent object box
  int parent_index = -1;      // for part pairs: index of the parent object pair
  std::string error;
};

struct EngineImage {
  std::string id;
  ImageTensor image;
  std::vector<std::pair<BoundingBox, std::string>> objects;  // pixel box + label
};

inline bool box_contains(const BoundingBox& outer, const BoundingBox& inner) {
  return inner.x0 >= outer.x0 && inner.y0 >= outer.y0 && inner.x1 <= outer.x1 &&
         inner.y1 <= outer.y1;
}

// Kept iff score > 0.5, strictly.
inline bool pair_kept(double score) { return score > 0.5; }

inline std::vector<GeneratedPair> generate_object_pairs(const EngineImage& img,
                                                        const BackendClients& clients) {
  std::vector<GeneratedPair> out;
  int idx = 0;
  for (const auto& [box, label] : img.objects) {
    GeneratedPair p;
    p.image_id = img.id;
    p.box_index = idx++;
    p.box_pixel = box;
    p.level = PairLevel::OBJECT;
    try {
      p.box_norm = normalize_box(box, img.image.width, img.image.height);
      p.caption = clients.captioner(img, p.box_norm);
      BinaryMask m = clients.segmenter(img, box);
      p.mask = rle_encode(m);
      p.score = clients.scorer(img, box, p.caption);
      p.kept = pair_kept(p.score);
    } catch (const std::exception& e) {
      p.failed = true;
      p.error = e.what();
    }
    out.push_back(std::move(p));
  }
  return out;
}

// Part captions use the fine-tuning template "{part} of {object}".
inline std::string part_caption_template(const std::string& part,
                                         const std::string& object) {
  return part + " of " + object;
}

inline std::vector<GeneratedPair> generate_part_pairs(const EngineImage& img,
                                                      const std::string& object_label,
                                                      const BoundingBox& object_box,
                                                      int parent_index,
                                                      const BackendClients& clients) {
  std::vector<GeneratedPair> out;
  std::vector<std::string> vocab = clients.part_vocab(object_label);
  int idx = 0;
  for (const auto& part : vocab) {
    GeneratedPair p;
    p.image_id = img.id;
    p.box_index = idx++;
    p.level = PairLevel::PART;
    p.parent_index = parent_index;
    try {
      auto part_box = clients.part_locator(img, object_box, part);
      if (!part_box) continue;  // part not found in this instance
      p.box_pixel = *part_box;
      p.box_norm = normalize_box(p.box_pixel, img.image.width, img.image.height);
      p.inconsistent = !box_contains(object_box, p.box_pixel);
      p.caption = part_caption_template(part, object_label);
      BinaryMask m = clients.segmenter(img, p.box_pixel);
      p.mask = rle_encode(m);
      // filtering score uses the part crop (recorded choice)
      p.score = clients.scorer(img, p.box_pixel, p.caption);
      p.kept = pair_kept(p.score);
    } catch (const std::exception& e) {
      p.failed = true;
      p.error = e.what();
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<GeneratedPair> filter_pairs(const std::vector<GeneratedPair>& pairs) {
  std::vector<GeneratedPair> kept;
  for (const auto& p : pairs)
    if (!p.failed && p.kept) kept.push_back(p);
  return kept;
}

inline nlohmann::json pair_to_json(const GeneratedPair& p) {
  nlohmann::json j;
  j["image_id"] = p.image_id;
  j["box_index"] = p.box_index;
  j["level"] = p.level == PairLevel::PART ? "part" : "object";
  j["box"] = {p.box_pixel.x0, p.box_pixel.y0, p.box_pixel.x1, p.box_pixel.y1};
  j["box_norm"] = {p.box_norm.x0, p.box_norm.y0, p.box_norm.x1, p.box_norm.y1};
  j["caption"] = p.caption;
  j["score"] = p.score;
  j["kept"] = p.kept;
  j["failed"] = p.failed;
  j["inconsistent"] = p.inconsistent;
  j["crop_source"] = p.level == PairLevel::PART ? "part-crop" : "object-crop";
  if (p.parent_index >= 0) j["parent_index"] = p.parent_index;
  if (!p.failed) j["mask"] = rle_to_json(p.mask);
  if (!p.error.empty()) j["error"] = p.error;
  return j;
}

struct RunSummary {
  long processed = 0;  // images
  long kept = 0;
  long dropped = 0;
  long failed = 0;
};

// Streams pairs to line-delimited JSON, one image at a time; resumable by
// the last fully-written image id. Images are processed in id order so the
// output is deterministic.
inline RunSummary run_pipeline(std::vector<EngineImage> images,
                               const BackendClients& clients,
                               const std::string& out_path,
                               const std::optional<std::string>& resume_after = {}) {
  std::sort(images.begin(), images.end(),
            [](const EngineImage& a, const EngineImage& b) { return a.id < b.id; });
  std::ofstream f(out_path, resume_after ? std::ios::app : std::ios::trunc);
  if (!f) throw invalid_state_error("run_pipeline: cannot open output " + out_path);

  RunSummary sum;
  for (const auto& img : images) {
    if (resume_after && img.id <= *resume_after) continue;
    std::vector<GeneratedPair> pairs;
    try {
      pairs = generate_object_pairs(img, clients);
      size_t n_obj = pairs.size();
      for (size_t i = 0; i < n_obj; ++i) {
        if (pairs[i].failed) continue;
        auto parts = generate_part_pairs(img, img.objects[i].second,
                                         img.objects[i].first, static_cast<int>(i),
                                         clients);
        for (auto& pp : parts) pairs.push_back(std::move(pp));
      }
    } catch (const std::exception&) {
      // per-image failure is non-fatal; record nothing for this image
      ++sum.processed;
      continue;
    }
    for (const auto& p : pairs) {
      f << pair_to_json(p).dump() << "\n";
      if (p.failed) ++sum.failed;
      else if (p.kept) ++sum.kept;
      else ++sum.dropped;
    }
    f.flush();  // image committed; the resume token may advance past it
    ++sum.processed;
  }
  return sum;
}

// Last fully-committed image id in an existing output file (resume token).
inline std::optional<std::string> read_resume_token(const std::string& path) {
  std::ifstream f(path);
  if (!f) return std::nullopt;
  std::string line, last_id;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    last_id = j.at("image_id").get<std::string>();
  }
  if (last_id.empty()) return std::nullopt;
  return last_id;
}

// ---- deterministic mock backends over synthetic scenes ----

struct MockBackendConfig {
  double score_override = -1.0;  // >= 0 forces every score to this value
};

// Builds EngineImages plus clients that answer from the scene geometry:
// template captioner, exact geometric segmenter, lexical-overlap scorer.
class MockBackends {
 public:
  explicit MockBackends(std::vector<SceneSpec> scenes, MockBackendConfig cfg = {})
      : cfg_(cfg) {
    for (size_t i = 0; i < scenes.size(); ++i) {
      std::string id = "img-" + pad(i);
      scenes_[id] = scenes[i];
      EngineImage img;
      img.id = id;
      img.image = render::render_scene(scenes[i]);
      for (const auto& o : scenes[i].objects)
        img.objects.emplace_back(object_box(o),
                                 color_names()[o.color] + " " +
                                     shape_names()[static_cast<int>(o.kind)]);
      images_.push_back(std::move(img));
    }
  }

  const std::vector<EngineImage>& images() const { return images_; }

  BackendClients clients() const {
    BackendClients c;
    c.captioner = [this](const EngineImage& img, const BoundingBox& nb) {
      // echoes the label of the scene object whose normalized box matches,
      // falling back to a coordinate template
      const SceneSpec& scene = scenes_.at(img.id);
      for (const auto& o : scene.objects) {
        BoundingBox n = normalize_box(object_box(o), img.image.width, img.image.height);
        if (n.x0 == nb.x0 && n.y0 == nb.y0 && n.x1 == nb.x1 && n.y1 == nb.y1)
          return "the " + color_names()[o.color] + " " +
                 shape_names()[static_cast<int>(o.kind)];
      }
      return "object at (" + std::to_string(static_cast<int>(nb.x0)) + "," +
             std::to_string(static_cast<int>(nb.y0)) + "),(" +
             std::to_string(static_cast<int>(nb.x1)) + "," +
             std::to_string(static_cast<int>(nb.y1)) + ")";
    };
    c.segmenter = [this](const EngineImage& img, const BoundingBox& box) {
      const SceneSpec& scene = scenes_.at(img.id);
      for (const auto& o : scene.objects) {
        BoundingBox ob = object_box(o);
        if (ob.x0 == box.x0 && ob.y0 == box.y0 && ob.x1 == box.x1 && ob.y1 == box.y1)
          return render::object_mask(scene.canvas, o);
        for (const auto& part : part_names(o.kind)) {
          BinaryMask pm = render::part_mask(scene.canvas, o, part);
          BoundingBox pb = mask_bbox(pm);
          if (pb.x0 == box.x0 && pb.y0 == box.y0 && pb.x1 == box.x1 && pb.y1 == box.y1)
            return pm;
        }
      }
      // unknown box: rectangular mask over the box
      BinaryMask m(img.image.height, img.image.width);
      render::fill_rect(m, static_cast<int>(box.x0), static_cast<int>(box.y0),
                        static_cast<int>(box.x1), static_cast<int>(box.y1));
      return m;
    };
    c.part_vocab = [](const std::string& label) {
      for (int k = 0; k < 4; ++k)
        if (label.find(shape_names()[k]) != std::string::npos)
          return part_names(static_cast<ShapeKind>(k));
      return std::vector<std::string>{};
    };
    c.part_locator = [this](const EngineImage& img, const BoundingBox& obox,
                            const std::string& part) -> std::optional<BoundingBox> {
      const SceneSpec& scene = scenes_.at(img.id);
      for (const auto& o : scene.objects) {
        BoundingBox ob = object_box(o);
        if (ob.x0 != obox.x0 || ob.y0 != obox.y0) continue;
        BinaryMask pm = render::part_mask(scene.canvas, o, part);
        if (pm.empty_mask()) return std::nullopt;
        return mask_bbox(pm);
      }
      return std::nullopt;
    };
    c.scorer = [this](const EngineImage& img, const BoundingBox& box,
                      const std::string& caption) {
      if (cfg_.score_override >= 0.0) return cfg_.score_override;
      // lexical overlap between the caption and the scene's vocabulary
      const SceneSpec& scene = scenes_.at(img.id);
      std::vector<std::string> words;
      std::istringstream ss(caption);
      std::string w;
      int hit = 0, total = 0;
      while (ss >> w) {
        ++total;
        bool known = w == "the" || w == "of";
        for (const auto& o : scene.objects) {
          if (w == color_names()[o.color] ||
              w == shape_names()[static_cast<int>(o.kind)])
            known = true;
          for (const auto& p : part_names(o.kind))
            if (w == p) known = true;
        }
        if (known) ++hit;
      }
      return total == 0 ? 0.0 : static_cast<double>(hit) / total;
    };
    return c;
  }

 private:
  static std::string pad(size_t i) {
    std::string s = std::to_string(i);
    while (s.size() < 4) s = "0" + s;
    return s;
  }

  MockBackendConfig cfg_;
  std::map<std::string, SceneSpec> scenes_;
  std::vector<EngineImage> images_;
};

}  // namespace unires
