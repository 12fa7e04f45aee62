// SPDX-License-Identifier: Apache-2.0
//
// Training objective: autoregressive text cross-entropy, per-pixel BCE,
// DICE, and their weighted combination.

#pragma once

#include "unires/autodiff.hpp"
#include "unires/common.hpp"

#include <cmath>
#include <vector>

namespace unires {

struct LossWeights {
  double lambda_lm = 1.0;
  double lambda_mask = 1.0;
  double lambda_bce = 2.0;
  double lambda_dice = 0.5;
};

struct LossBundle {
  double l_lm = 0.0;
  double l_bce = 0.0;
  double l_dice = 0.0;
  double l_mask = 0.0;
  double total = 0.0;
};

// Plain (non-tape) versions used by evaluation and as oracles' counterparts.

inline double text_ce(const Mat& logits, const std::vector<int>& targets,
                      const std::vector<int>& positions) {
  if (positions.empty()) throw invalid_input_error("text_ce: empty supervision mask");
  double loss = 0.0;
  for (int r : positions) {
    Eigen::RowVectorXd row = logits.row(r);
    double m = row.maxCoeff();
    double z = (row.array() - m).exp().sum();
    loss -= (logits(r, targets[r]) - m) - std::log(z);
  }
  return loss / positions.size();
}

inline double bce(const Mat& pred, const Mat& gt, double eps = 1e-7) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw invalid_input_error("bce: shape mismatch");
  double loss = 0.0;
  for (long r = 0; r < pred.rows(); ++r)
    for (long c = 0; c < pred.cols(); ++c) {
      double p = std::clamp(pred(r, c), eps, 1.0 - eps);
      loss -= gt(r, c) * std::log(p) + (1.0 - gt(r, c)) * std::log(1.0 - p);
    }
  return loss / (pred.rows() * pred.cols());
}

inline double dice(const Mat& pred, const Mat& gt, double smooth = 1e-6) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw invalid_input_error("dice: shape mismatch");
  double inter = pred.cwiseProduct(gt).sum();
  return 1.0 - (2.0 * inter + smooth) / (pred.sum() + gt.sum() + smooth);
}

inline LossBundle combine(double l_lm, double l_bce, double l_dice,
                          const LossWeights& w) {
  LossBundle b;
  b.l_lm = l_lm;
  b.l_bce = l_bce;
  b.l_dice = l_dice;
  b.l_mask = w.lambda_bce * l_bce + w.lambda_dice * l_dice;
  b.total = w.lambda_lm * l_lm + w.lambda_mask * b.l_mask;
  return b;
}

// Tape-side combination for training; returns the total-loss Var.
inline ad::Var combine_on_tape(ad::Var l_lm, ad::Var l_bce, ad::Var l_dice,
                               const LossWeights& w) {
  ad::Var mask = ad::add(ad::scale(l_bce, w.lambda_bce), ad::scale(l_dice, w.lambda_dice));
  return ad::add(ad::scale(l_lm, w.lambda_lm), ad::scale(mask, w.lambda_mask));
}

}  // namespace unires
