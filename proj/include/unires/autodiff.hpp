// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode autodiff over dense double matrices. A Tape records
// operation nodes; Var is a lightweight handle into it. Scalars are 1x1.
// Every op stores a backward closure; backward() walks the tape in reverse.

#pragma once

#include "unires/common.hpp"

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace unires::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int idx = -1;

  bool valid() const { return tape != nullptr && idx >= 0; }
  const Mat& val() const;
  const Mat& grad() const;
  long rows() const { return val().rows(); }
  long cols() const { return val().cols(); }
  double scalar() const { return val()(0, 0); }
};

class Tape {
 public:
  struct Node {
    Mat val;
    Mat grad;
    bool needs_grad = true;
    std::function<void()> back;  // accumulates into parent grads
  };

  Var push(Mat value, bool needs_grad, std::function<void()> back = nullptr) {
    Node n;
    n.val = std::move(value);
    n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var leaf(Mat value) { return push(std::move(value), true); }
  Var constant(Mat value) { return push(std::move(value), false); }

  Node& node(int i) { return nodes_[i]; }
  const Node& node(int i) const { return nodes_[i]; }
  size_t size() const { return nodes_.size(); }

  // Seeds d(out)/d(out)=1 and propagates to every reachable node.
  void backward(const Var& out) {
    if (out.rows() != 1 || out.cols() != 1)
      throw invalid_state_error("backward: output must be scalar");
    nodes_[out.idx].grad(0, 0) = 1.0;
    for (int i = out.idx; i >= 0; --i) {
      if (nodes_[i].back && nodes_[i].grad.cwiseAbs().sum() != 0.0) nodes_[i].back();
    }
  }

 private:
  std::vector<Node> nodes_;
};

inline const Mat& Var::val() const { return tape->node(idx).val; }
inline const Mat& Var::grad() const { return tape->node(idx).grad; }

// Helper so ops can reference their own node grad: push with a builder that
// receives the fresh Var.
inline Var make_op(Tape* t, Mat value,
                   std::function<std::function<void()>(Var)> make_back) {
  Var v = t->push(std::move(value), true);
  t->node(v.idx).back = make_back(v);
  return v;
}

inline Var mm(Var a, Var b) {
  Tape* t = a.tape;
  return make_op(t, a.val() * b.val(), [t, a, b](Var out) {
    return [t, a, b, out]() {
      const Mat& g = out.grad();
      if (t->node(a.idx).needs_grad) t->node(a.idx).grad += g * b.val().transpose();
      if (t->node(b.idx).needs_grad) t->node(b.idx).grad += a.val().transpose() * g;
    };
  });
}

inline Var add(Var a, Var b) {
  Tape* t = a.tape;
  return make_op(t, a.val() + b.val(), [t, a, b](Var out) {
    return [t, a, b, out]() {
      t->node(a.idx).grad += out.grad();
      t->node(b.idx).grad += out.grad();
    };
  });
}

inline Var sub(Var a, Var b) {
  Tape* t = a.tape;
  return make_op(t, a.val() - b.val(), [t, a, b](Var out) {
    return [t, a, b, out]() {
      t->node(a.idx).grad += out.grad();
      t->node(b.idx).grad -= out.grad();
    };
  });
}

inline Var hadamard(Var a, Var b) {
  Tape* t = a.tape;
  return make_op(t, a.val().cwiseProduct(b.val()), [t, a, b](Var out) {
    return [t, a, b, out]() {
      t->node(a.idx).grad += out.grad().cwiseProduct(b.val());
      t->node(b.idx).grad += out.grad().cwiseProduct(a.val());
    };
  });
}

inline Var scale(Var a, double s) {
  Tape* t = a.tape;
  return make_op(t, a.val() * s, [t, a, s](Var out) {
    return [t, a, s, out]() { t->node(a.idx).grad += out.grad() * s; };
  });
}

// adds a non-differentiated constant matrix (mask / offset)
inline Var addc(Var a, const Mat& c) {
  Tape* t = a.tape;
  return make_op(t, a.val() + c, [t, a](Var out) {
    return [t, a, out]() { t->node(a.idx).grad += out.grad(); };
  });
}

// broadcast a 1xN row (bias) over every row of a
inline Var add_row(Var a, Var row) {
  Tape* t = a.tape;
  Mat v = a.val();
  v.rowwise() += Eigen::RowVectorXd(row.val().row(0));
  return make_op(t, std::move(v), [t, a, row](Var out) {
    return [t, a, row, out]() {
      t->node(a.idx).grad += out.grad();
      t->node(row.idx).grad.row(0) += out.grad().colwise().sum();
    };
  });
}

inline Var transpose(Var a) {
  Tape* t = a.tape;
  return make_op(t, a.val().transpose(), [t, a](Var out) {
    return [t, a, out]() { t->node(a.idx).grad += out.grad().transpose(); };
  });
}

inline Var sigmoid(Var a) {
  Tape* t = a.tape;
  Mat y = (1.0 / (1.0 + (-a.val().array()).exp())).matrix();
  return make_op(t, std::move(y), [t, a](Var out) {
    return [t, a, out]() {
      const Mat& y = out.val();
      t->node(a.idx).grad +=
          out.grad().cwiseProduct(y.cwiseProduct((Mat::Ones(y.rows(), y.cols()) - y)));
    };
  });
}

inline Var tanh_op(Var a) {
  Tape* t = a.tape;
  Mat y = a.val().array().tanh().matrix();
  return make_op(t, std::move(y), [t, a](Var out) {
    return [t, a, out]() {
      const Mat& y = out.val();
      t->node(a.idx).grad += out.grad().cwiseProduct(
          (Mat::Ones(y.rows(), y.cols()) - y.cwiseProduct(y)));
    };
  });
}

inline Var rowwise_softmax(Var a) {
  Tape* t = a.tape;
  Mat y = a.val();
  for (long r = 0; r < y.rows(); ++r) {
    double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return make_op(t, std::move(y), [t, a](Var out) {
    return [t, a, out]() {
      const Mat& y = out.val();
      const Mat& g = out.grad();
      Mat& da = t->node(a.idx).grad;
      for (long r = 0; r < y.rows(); ++r) {
        double dot = g.row(r).dot(y.row(r));
        da.row(r) += (g.row(r).array() - dot).matrix().cwiseProduct(y.row(r));
      }
    };
  });
}

inline Var slice_rows(Var a, long r0, long n) {
  Tape* t = a.tape;
  return make_op(t, a.val().middleRows(r0, n), [t, a, r0, n](Var out) {
    return [t, a, r0, n, out]() {
      t->node(a.idx).grad.middleRows(r0, n) += out.grad();
    };
  });
}

inline Var slice_cols(Var a, long c0, long n) {
  Tape* t = a.tape;
  return make_op(t, a.val().middleCols(c0, n), [t, a, c0, n](Var out) {
    return [t, a, c0, n, out]() {
      t->node(a.idx).grad.middleCols(c0, n) += out.grad();
    };
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  Tape* t = parts.front().tape;
  long rows = 0;
  long cols = parts.front().cols();
  for (const Var& p : parts) rows += p.rows();
  Mat v(rows, cols);
  long r = 0;
  for (const Var& p : parts) {
    if (p.rows() > 0) v.middleRows(r, p.rows()) = p.val();
    r += p.rows();
  }
  return make_op(t, std::move(v), [t, parts](Var out) {
    return [t, parts, out]() {
      long r = 0;
      for (const Var& p : parts) {
        if (p.rows() > 0) t->node(p.idx).grad += out.grad().middleRows(r, p.rows());
        r += p.rows();
      }
    };
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  Tape* t = parts.front().tape;
  long cols = 0;
  long rows = parts.front().rows();
  for (const Var& p : parts) cols += p.cols();
  Mat v(rows, cols);
  long c = 0;
  for (const Var& p : parts) {
    if (p.cols() > 0) v.middleCols(c, p.cols()) = p.val();
    c += p.cols();
  }
  return make_op(t, std::move(v), [t, parts](Var out) {
    return [t, parts, out]() {
      long c = 0;
      for (const Var& p : parts) {
        if (p.cols() > 0) t->node(p.idx).grad += out.grad().middleCols(c, p.cols());
        c += p.cols();
      }
    };
  });
}

inline Var sum_all(Var a) {
  Tape* t = a.tape;
  Mat v(1, 1);
  v(0, 0) = a.val().sum();
  return make_op(t, std::move(v), [t, a](Var out) {
    return [t, a, out]() {
      t->node(a.idx).grad.array() += out.grad()(0, 0);
    };
  });
}

inline Var mean_all(Var a) { return scale(sum_all(a), 1.0 / (a.rows() * a.cols())); }

// Per-row layer normalization with learned gain/bias rows (1xN each).
inline Var layernorm_rows(Var x, Var gain, Var bias, double eps = 1e-5) {
  Tape* t = x.tape;
  long R = x.rows(), N = x.cols();
  Mat xhat(R, N);
  Vec inv_sigma(R);
  for (long r = 0; r < R; ++r) {
    double mu = x.val().row(r).mean();
    double var = (x.val().row(r).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(r) = is;
    xhat.row(r) = (x.val().row(r).array() - mu) * is;
  }
  Mat y = xhat;
  for (long r = 0; r < R; ++r)
    y.row(r) = y.row(r).cwiseProduct(gain.val().row(0)) + bias.val().row(0);
  return make_op(t, std::move(y), [t, x, gain, bias, xhat, inv_sigma](Var out) {
    return [t, x, gain, bias, xhat, inv_sigma, out]() {
      const Mat& g = out.grad();
      long R = xhat.rows(), N = xhat.cols();
      for (long r = 0; r < R; ++r) {
        Eigen::RowVectorXd h = g.row(r).cwiseProduct(gain.val().row(0));
        double mh = h.mean();
        double mhx = h.cwiseProduct(xhat.row(r)).mean();
        t->node(x.idx).grad.row(r) +=
            ((h.array() - mh - xhat.row(r).array() * mhx) * inv_sigma(r)).matrix();
        t->node(gain.idx).grad.row(0) += g.row(r).cwiseProduct(xhat.row(r));
        t->node(bias.idx).grad.row(0) += g.row(r);
        (void)N;
      }
    };
  });
}

// Mean autoregressive cross-entropy over the supervised positions:
// loss = -(1/K) sum_{t in pos} log softmax(logits.row(t))[targets[t]]
inline Var softmax_ce(Var logits, const std::vector<int>& targets,
                      const std::vector<int>& positions) {
  if (positions.empty())
    throw invalid_input_error("softmax_ce: empty supervision mask");
  Tape* t = logits.tape;
  long V = logits.cols();
  Mat probs(positions.size(), V);
  double loss = 0.0;
  for (size_t k = 0; k < positions.size(); ++k) {
    long r = positions[k];
    Eigen::RowVectorXd row = logits.val().row(r);
    double m = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - m).exp();
    double z = e.sum();
    probs.row(k) = e / z;
    loss -= std::log(probs(k, targets[r]));
  }
  Mat v(1, 1);
  v(0, 0) = loss / positions.size();
  return make_op(t, std::move(v), [t, logits, targets, positions, probs](Var out) {
    return [t, logits, targets, positions, probs, out]() {
      double go = out.grad()(0, 0) / positions.size();
      Mat& dl = t->node(logits.idx).grad;
      for (size_t k = 0; k < positions.size(); ++k) {
        long r = positions[k];
        dl.row(r) += go * probs.row(k);
        dl(r, targets[r]) -= go;
      }
    };
  });
}

// Per-pixel BCE over probabilities (already in (0,1)); probabilities are
// clamped to [eps, 1-eps] and the gradient is zero in the clamped region.
inline Var bce_loss(Var probs, const Mat& gt, double eps = 1e-7) {
  if (probs.rows() != gt.rows() || probs.cols() != gt.cols())
    throw invalid_input_error("bce_loss: shape mismatch");
  Tape* t = probs.tape;
  long N = gt.rows() * gt.cols();
  double loss = 0.0;
  for (long r = 0; r < gt.rows(); ++r)
    for (long c = 0; c < gt.cols(); ++c) {
      double p = std::clamp(probs.val()(r, c), eps, 1.0 - eps);
      double m = gt(r, c);
      loss -= m * std::log(p) + (1.0 - m) * std::log(1.0 - p);
    }
  Mat v(1, 1);
  v(0, 0) = loss / N;
  return make_op(t, std::move(v), [t, probs, gt, eps, N](Var out) {
    return [t, probs, gt, eps, N, out]() {
      double go = out.grad()(0, 0) / N;
      Mat& dp = t->node(probs.idx).grad;
      for (long r = 0; r < gt.rows(); ++r)
        for (long c = 0; c < gt.cols(); ++c) {
          double p = probs.val()(r, c);
          if (p <= eps || p >= 1.0 - eps) continue;
          double m = gt(r, c);
          dp(r, c) += go * (-(m / p) + (1.0 - m) / (1.0 - p));
        }
    };
  });
}

// DICE = 1 - (2*sum(p*m)+eps) / (sum(p)+sum(m)+eps)
inline Var dice_loss(Var probs, const Mat& gt, double eps = 1e-6) {
  if (probs.rows() != gt.rows() || probs.cols() != gt.cols())
    throw invalid_input_error("dice_loss: shape mismatch");
  Tape* t = probs.tape;
  double inter = probs.val().cwiseProduct(gt).sum();
  double denom = probs.val().sum() + gt.sum() + eps;
  double num = 2.0 * inter + eps;
  Mat v(1, 1);
  v(0, 0) = 1.0 - num / denom;
  return make_op(t, std::move(v), [t, probs, gt, num, denom](Var out) {
    return [t, probs, gt, num, denom, out]() {
      double go = out.grad()(0, 0);
      // d/dp_i [ -num/denom ] = -(2*m_i*denom - num) / denom^2
      Mat d = -(2.0 * gt.array() * denom - num).matrix() / (denom * denom);
      t->node(probs.idx).grad += go * d;
    };
  });
}

// Transposed convolution of a single-channel grid: kernel k x k, stride f,
// symmetric padding p. Output is ((G_h-1)*f + k - 2p) x ((G_w-1)*f + k - 2p).
inline Var tconv2d(Var grid, Var kernel, Var bias, int f, int p) {
  Tape* t = grid.tape;
  long gh = grid.rows(), gw = grid.cols();
  long k = kernel.rows();
  long oh = (gh - 1) * f + k - 2 * p;
  long ow = (gw - 1) * f + k - 2 * p;
  Mat out = Mat::Constant(oh, ow, bias.val()(0, 0));
  for (long gy = 0; gy < gh; ++gy)
    for (long gx = 0; gx < gw; ++gx) {
      double gv = grid.val()(gy, gx);
      for (long dy = 0; dy < k; ++dy) {
        long oy = gy * f + dy - p;
        if (oy < 0 || oy >= oh) continue;
        for (long dx = 0; dx < k; ++dx) {
          long ox = gx * f + dx - p;
          if (ox < 0 || ox >= ow) continue;
          out(oy, ox) += gv * kernel.val()(dy, dx);
        }
      }
    }
  return make_op(t, std::move(out), [t, grid, kernel, bias, f, p](Var o) {
    return [t, grid, kernel, bias, f, p, o]() {
      const Mat& g = o.grad();
      long gh = grid.rows(), gw = grid.cols(), k = kernel.rows();
      long oh = g.rows(), ow = g.cols();
      Mat& dgrid = t->node(grid.idx).grad;
      Mat& dker = t->node(kernel.idx).grad;
      t->node(bias.idx).grad(0, 0) += g.sum();
      for (long gy = 0; gy < gh; ++gy)
        for (long gx = 0; gx < gw; ++gx) {
          double acc = 0.0;
          for (long dy = 0; dy < k; ++dy) {
            long oy = gy * f + dy - p;
            if (oy < 0 || oy >= oh) continue;
            for (long dx = 0; dx < k; ++dx) {
              long ox = gx * f + dx - p;
              if (ox < 0 || ox >= ow) continue;
              acc += g(oy, ox) * kernel.val()(dy, dx);
              dker(dy, dx) += g(oy, ox) * grid.val()(gy, gx);
            }
          }
          dgrid(gy, gx) += acc;
        }
    };
  });
}

}  // namespace unires::ad
