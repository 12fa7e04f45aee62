// SPDX-License-Identifier: Apache-2.0
//
// RES / GRES / MRES evaluation: mIoU, oIoU (== cIoU), gIoU, N-acc, the
// 50-pixel no-target rule, and the per-granularity breakdown.

#pragma once

#include "unires/geometry.hpp"

#include <optional>
#include <string>
#include <vector>

namespace unires {

enum class Granularity { OBJECT, PART };

struct EvalRecord {
  std::string id;
  std::optional<RleMask> pred;  // empty optional = explicit no-target prediction
  std::optional<RleMask> gt;    // empty optional only when gt_no_target
  bool gt_no_target = false;
  Granularity granularity = Granularity::OBJECT;
};

struct MetricValues {
  double miou = 0.0;
  double oiou = 0.0;
  double ciou = 0.0;
  double giou = 0.0;
  double n_acc = 0.0;
  bool has_miou = false, has_oiou = false, has_nacc = false;
  long n_records = 0;
};

struct MetricReport {
  MetricValues all;      // object & part combined
  MetricValues object_only;
  MetricValues part_only;
  std::string notes =
      "gIoU no-target scoring follows the gRefCOCO convention (correct "
      "rejection = 1, miss/false-alarm = 0)";
};

// Prediction with fewer than 50 foreground pixels counts as "no target".
inline bool no_target_decision(const BinaryMask& pred) { return pred.area() < 50; }

namespace detail {

struct ScoredRecord {
  bool gt_no_target;
  bool pred_no_target;
  double iou;  // only meaningful when both sides have targets
  Granularity granularity;
};

inline ScoredRecord score_record(const EvalRecord& r) {
  ScoredRecord s;
  s.granularity = r.granularity;
  s.gt_no_target = r.gt_no_target;
  BinaryMask pred_mask;
  if (r.pred.has_value()) {
    pred_mask = rle_decode(*r.pred);
    s.pred_no_target = no_target_decision(pred_mask);
  } else {
    s.pred_no_target = true;  // no-SEG generations count as no-target
  }
  s.iou = 0.0;
  if (!s.gt_no_target) {
    BinaryMask gt_mask = rle_decode(*r.gt);
    if (!r.pred.has_value()) pred_mask = BinaryMask(gt_mask.height, gt_mask.width);
    s.iou = mask_iou(pred_mask, gt_mask);
  }
  return s;
}

}  // namespace detail

inline double compute_miou(const std::vector<EvalRecord>& records) {
  double sum = 0.0;
  long n = 0;
  for (const auto& r : records) {
    if (r.gt_no_target) continue;
    sum += detail::score_record(r).iou;
    ++n;
  }
  if (n == 0) throw undefined_metric_error("compute_miou: no targeted samples");
  return sum / n;
}

inline double compute_oiou_ciou(const std::vector<EvalRecord>& records) {
  long inter = 0, uni = 0;
  for (const auto& r : records) {
    if (r.gt_no_target) continue;
    BinaryMask gt_mask = rle_decode(*r.gt);
    BinaryMask pred_mask = r.pred.has_value()
                               ? rle_decode(*r.pred)
                               : BinaryMask(gt_mask.height, gt_mask.width);
    long i, u;
    intersection_union(pred_mask, gt_mask, i, u);
    inter += i;
    uni += u;
  }
  if (uni == 0) throw undefined_metric_error("compute_oiou: zero total union");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Mean over ALL samples: a no-target sample scores 1 when predicted
// no-target, else 0; a targeted sample with a no-target prediction scores 0.
inline double compute_giou(const std::vector<EvalRecord>& records) {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : records) {
    auto s = detail::score_record(r);
    if (s.gt_no_target) {
      sum += s.pred_no_target ? 1.0 : 0.0;
    } else if (s.pred_no_target) {
      sum += 0.0;
    } else {
      sum += s.iou;
    }
  }
  return sum / records.size();
}

inline double compute_nacc(const std::vector<EvalRecord>& records) {
  long total = 0, correct = 0;
  for (const auto& r : records) {
    if (!r.gt_no_target) continue;
    ++total;
    if (detail::score_record(r).pred_no_target) ++correct;
  }
  if (total == 0) throw undefined_metric_error("compute_nacc: no negative samples");
  return static_cast<double>(correct) / static_cast<double>(total);
}

inline MetricValues compute_metrics(const std::vector<EvalRecord>& records) {
  MetricValues v;
  v.n_records = static_cast<long>(records.size());
  try {
    v.miou = compute_miou(records);
    v.has_miou = true;
  } catch (const undefined_metric_error&) {
  }
  try {
    v.oiou = compute_oiou_ciou(records);
    v.ciou = v.oiou;
    v.has_oiou = true;
  } catch (const undefined_metric_error&) {
  }
  v.giou = compute_giou(records);
  try {
    v.n_acc = compute_nacc(records);
    v.has_nacc = true;
  } catch (const undefined_metric_error&) {
  }
  return v;
}

inline MetricReport compute_report(const std::vector<EvalRecord>& records) {
  MetricReport rep;
  rep.all = compute_metrics(records);
  std::vector<EvalRecord> obj, part;
  for (const auto& r : records)
    (r.granularity == Granularity::OBJECT ? obj : part).push_back(r);
  rep.object_only = compute_metrics(obj);
  rep.part_only = compute_metrics(part);
  return rep;
}

}  // namespace unires
