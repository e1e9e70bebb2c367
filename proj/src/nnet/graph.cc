// Copyright 2026  The lidkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "lidkit/nnet/graph.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lidkit::nnet {

Segments::Segments(const std::vector<int> &lengths) {
  offset_.reserve(lengths.size());
  length_.reserve(lengths.size());
  for (size_t b = 0; b < lengths.size(); ++b) {
    if (lengths[b] < 1) throw DataError("empty segment in minibatch");
    offset_.push_back(total_);
    length_.push_back(lengths[b]);
    total_ += lengths[b];
  }
  column_segment_.resize(total_);
  for (size_t b = 0; b < lengths.size(); ++b)
    std::fill_n(column_segment_.begin() + offset_[b], length_[b], static_cast<int>(b));
}

Var Graph::Constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::Parameter(Param &p) {
  Node n;
  n.value = p.value;
  n.needs_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix &Graph::grad(Var v) {
  Node &n = nodes_[v.id];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Var Graph::Add(Matrix value, std::vector<Var> inputs,
               std::function<void(Graph &, int)> backward) {
  Node n;
  n.value = std::move(value);
  for (Var v : inputs) n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Graph::Backward(Var root) {
  if (value(root).size() != 1) throw UsageError("Backward needs a scalar root");
  grad(root)(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node &n = nodes_[i];
    if (!n.has_grad || !n.needs_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols())
        n.param->grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.param->grad += n.grad;
    }
    // Release what is no longer needed.
    n.grad.resize(0, 0);
    n.has_grad = false;
  }
}

namespace {

void CheckSegments(const Matrix &x, const Segments &segs) {
  if (x.cols() != segs.total())
    throw UsageError("frame count does not match minibatch segments");
}

}  // namespace

Var Affine(Graph &g, Var x, Var w, Var b) {
  const Matrix &xv = g.value(x), &wv = g.value(w), &bv = g.value(b);
  if (wv.cols() != xv.rows() || bv.rows() != wv.rows() || bv.cols() != 1)
    throw UsageError("affine: shape mismatch");
  Matrix y = wv * xv;
  y.colwise() += bv.col(0);
  return g.Add(std::move(y), {x, w, b}, [x, w, b](Graph &g, int self) {
    const Matrix &gy = g.grad(Var{self});
    if (g.needs_grad(w)) g.grad(w).noalias() += gy * g.value(x).transpose();
    if (g.needs_grad(b)) g.grad(b) += gy.rowwise().sum();
    if (g.needs_grad(x)) g.grad(x).noalias() += g.value(w).transpose() * gy;
  });
}

Var ShiftStack(Graph &g, Var x, const Segments &segs, int kernel, int dilation) {
  const Matrix &xv = g.value(x);
  CheckSegments(xv, segs);
  if (kernel < 1 || dilation < 1) throw UsageError("shift stack: bad kernel");
  const int c = static_cast<int>(xv.rows());
  const int half = (kernel - 1) / 2;
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(kernel) * c, xv.cols());
  for (int b = 0; b < segs.size(); ++b) {
    const int off = segs.offset(b), len = segs.length(b);
    for (int k = 0; k < kernel; ++k) {
      const int shift = (k - half) * dilation;
      // y[k-block, t] = x[t + shift]
      const int t0 = std::max(0, -shift), t1 = std::min(len, len - shift);
      if (t1 > t0)
        y.block(k * c, off + t0, c, t1 - t0) = xv.block(0, off + t0 + shift, c, t1 - t0);
    }
  }
  return g.Add(std::move(y), {x}, [x, segs, kernel, dilation, c, half](Graph &g, int self) {
    const Matrix &gy = g.grad(Var{self});
    Matrix &gx = g.grad(x);
    for (int b = 0; b < segs.size(); ++b) {
      const int off = segs.offset(b), len = segs.length(b);
      for (int k = 0; k < kernel; ++k) {
        const int shift = (k - half) * dilation;
        const int t0 = std::max(0, -shift), t1 = std::min(len, len - shift);
        if (t1 > t0)
          gx.block(0, off + t0 + shift, c, t1 - t0) += gy.block(k * c, off + t0, c, t1 - t0);
      }
    }
  });
}

Var Relu(Graph &g, Var x) {
  Matrix y = g.value(x).cwiseMax(0.0);
  return g.Add(std::move(y), {x}, [x](Graph &g, int self) {
    const Matrix &gy = g.grad(Var{self});
    g.grad(x).array() += (g.value(x).array() > 0.0).select(gy.array(), 0.0);
  });
}

Var Sigmoid(Graph &g, Var x) {
  Matrix y = (1.0 + (-g.value(x).array()).exp()).inverse().matrix();
  return g.Add(std::move(y), {x}, [x](Graph &g, int self) {
    const Matrix &y = g.value(Var{self});
    g.grad(x).array() += g.grad(Var{self}).array() * y.array() * (1.0 - y.array());
  });
}

Var Tanh(Graph &g, Var x) {
  Matrix y = g.value(x).array().tanh().matrix();
  return g.Add(std::move(y), {x}, [x](Graph &g, int self) {
    const Matrix &y = g.value(Var{self});
    g.grad(x).array() += g.grad(Var{self}).array() * (1.0 - y.array().square());
  });
}

Var Sum(Graph &g, Var a, Var b) {
  if (g.value(a).rows() != g.value(b).rows() || g.value(a).cols() != g.value(b).cols())
    throw UsageError("sum: shape mismatch");
  Matrix y = g.value(a) + g.value(b);
  return g.Add(std::move(y), {a, b}, [a, b](Graph &g, int self) {
    const Matrix &gy = g.grad(Var{self});
    if (g.needs_grad(a)) g.grad(a) += gy;
    if (g.needs_grad(b)) g.grad(b) += gy;
  });
}

Var Difference(Graph &g, Var a, Var b) {
  if (g.value(a).rows() != g.value(b).rows() || g.value(a).cols() != g.value(b).cols())
    throw UsageError("difference: shape mismatch");
  Matrix y = g.value(a) - g.value(b);
  return g.Add(std::move(y), {a, b}, [a, b](Graph &g, int self) {
    const Matrix &gy = g.grad(Var{self});
    if (g.needs_grad(a)) g.grad(a) += gy;
    if (g.needs_grad(b)) g.grad(b) -= gy;
  });
}

Var Product(Graph &g, Var a, Var b) {
  if (g.value(a).rows() != g.value(b).rows() || g.value(a).cols() != g.value(b).cols())
    throw UsageError("product: shape mismatch");
  Matrix y = g.value(a).cwiseProduct(g.value(b));
  return g.Add(std::move(y), {a, b}, [a, b](Graph &g, int self) {
    const Matrix &gy = g.grad(Var{self});
    if (g.needs_grad(a)) g.grad(a) += gy.cwiseProduct(g.value(b));
    if (g.needs_grad(b)) g.grad(b) += gy.cwiseProduct(g.value(a));
  });
}

Var Square(Graph &g, Var x) {
  Matrix y = g.value(x).array().square().matrix();
  return g.Add(std::move(y), {x}, [x](Graph &g, int self) {
    g.grad(x).array() += 2.0 * g.grad(Var{self}).array() * g.value(x).array();
  });
}

Var SqrtFloor(Graph &g, Var x, double floor) {
  Matrix y = g.value(x).cwiseMax(floor).cwiseSqrt();
  return g.Add(std::move(y), {x}, [x, floor](Graph &g, int self) {
    const Matrix &y = g.value(Var{self});
    g.grad(x).array() +=
        (g.value(x).array() >= floor).select(g.grad(Var{self}).array() / (2.0 * y.array()), 0.0);
  });
}

Var RowSlice(Graph &g, Var x, int row, int rows) {
  const Matrix &xv = g.value(x);
  if (row < 0 || rows < 0 || row + rows > xv.rows()) throw UsageError("row slice out of range");
  Matrix y = xv.middleRows(row, rows);
  return g.Add(std::move(y), {x}, [x, row, rows](Graph &g, int self) {
    g.grad(x).middleRows(row, rows) += g.grad(Var{self});
  });
}

Var ConcatRows(Graph &g, const std::vector<Var> &parts) {
  if (parts.empty()) throw UsageError("concat of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = g.value(parts[0]).cols();
  for (Var p : parts) {
    if (g.value(p).cols() != cols) throw UsageError("concat: column mismatch");
    rows += g.value(p).rows();
  }
  Matrix y(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    y.middleRows(r, g.value(p).rows()) = g.value(p);
    r += g.value(p).rows();
  }
  return g.Add(std::move(y), parts, [parts](Graph &g, int self) {
    const Matrix &gy = g.grad(Var{self});
    Eigen::Index r = 0;
    for (Var p : parts) {
      const Eigen::Index n = g.value(p).rows();
      if (g.needs_grad(p)) g.grad(p) += gy.middleRows(r, n);
      r += n;
    }
  });
}

Var SegmentSum(Graph &g, Var x, const Segments &segs) {
  const Matrix &xv = g.value(x);
  CheckSegments(xv, segs);
  Matrix y(xv.rows(), segs.size());
  for (int b = 0; b < segs.size(); ++b)
    y.col(b) = xv.middleCols(segs.offset(b), segs.length(b)).rowwise().sum();
  return g.Add(std::move(y), {x}, [x, segs](Graph &g, int self) {
    const Matrix &gy = g.grad(Var{self});
    Matrix &gx = g.grad(x);
    for (int b = 0; b < segs.size(); ++b)
      gx.middleCols(segs.offset(b), segs.length(b)).colwise() += gy.col(b);
  });
}

Var SegmentMean(Graph &g, Var x, const Segments &segs) {
  const Matrix &xv = g.value(x);
  CheckSegments(xv, segs);
  Matrix y(xv.rows(), segs.size());
  for (int b = 0; b < segs.size(); ++b)
    y.col(b) = xv.middleCols(segs.offset(b), segs.length(b)).rowwise().mean();
  return g.Add(std::move(y), {x}, [x, segs](Graph &g, int self) {
    const Matrix &gy = g.grad(Var{self});
    Matrix &gx = g.grad(x);
    for (int b = 0; b < segs.size(); ++b)
      gx.middleCols(segs.offset(b), segs.length(b)).colwise() += gy.col(b) / segs.length(b);
  });
}

Var Expand(Graph &g, Var x, const Segments &segs) {
  const Matrix &xv = g.value(x);
  if (xv.cols() != segs.size()) throw UsageError("expand: segment count mismatch");
  Matrix y(xv.rows(), segs.total());
  for (int b = 0; b < segs.size(); ++b)
    y.middleCols(segs.offset(b), segs.length(b)).colwise() = xv.col(b);
  return g.Add(std::move(y), {x}, [x, segs](Graph &g, int self) {
    const Matrix &gy = g.grad(Var{self});
    Matrix &gx = g.grad(x);
    for (int b = 0; b < segs.size(); ++b)
      gx.col(b) += gy.middleCols(segs.offset(b), segs.length(b)).rowwise().sum();
  });
}

Var SegmentSoftmax(Graph &g, Var x, const Segments &segs) {
  const Matrix &xv = g.value(x);
  CheckSegments(xv, segs);
  Matrix y(xv.rows(), xv.cols());
  for (int b = 0; b < segs.size(); ++b) {
    auto in = xv.middleCols(segs.offset(b), segs.length(b));
    auto out = y.middleCols(segs.offset(b), segs.length(b));
    Vector mx = in.rowwise().maxCoeff();
    out = (in.colwise() - mx).array().exp().matrix();
    Vector z = out.rowwise().sum();
    out.array().colwise() /= z.array();
  }
  return g.Add(std::move(y), {x}, [x, segs](Graph &g, int self) {
    const Matrix &y = g.value(Var{self});
    const Matrix &gy = g.grad(Var{self});
    Matrix &gx = g.grad(x);
    for (int b = 0; b < segs.size(); ++b) {
      auto yb = y.middleCols(segs.offset(b), segs.length(b));
      auto gb = gy.middleCols(segs.offset(b), segs.length(b));
      Vector dot = yb.cwiseProduct(gb).rowwise().sum();
      gx.middleCols(segs.offset(b), segs.length(b)).array() +=
          yb.array() * (gb.colwise() - dot).array();
    }
  });
}

Var BatchNorm(Graph &g, Var x, Var gamma, Var beta, const BnState &running, bool training,
              BnState *update, double momentum, double eps) {
  const Matrix &xv = g.value(x);
  const Eigen::Index c = xv.rows(), n = xv.cols();
  if (g.value(gamma).rows() != c || g.value(beta).rows() != c)
    throw UsageError("batch norm: channel mismatch");
  Vector mean, var;
  if (training) {
    if (n < 1) throw UsageError("batch norm on empty batch");
    mean = xv.rowwise().mean();
    var = (xv.colwise() - mean).array().square().rowwise().mean();
    if (update != nullptr) {
      if (update->mean.size() != c) {
        update->mean = Vector::Zero(c);
        update->var = Vector::Ones(c);
      }
      update->mean = (1.0 - momentum) * update->mean + momentum * mean;
      update->var = (1.0 - momentum) * update->var + momentum * var;
    }
  } else {
    if (running.mean.size() != c) throw UsageError("batch norm: missing running statistics");
    mean = running.mean;
    var = running.var;
  }
  Vector inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = ((xv.colwise() - mean).array().colwise() * inv_std.array()).matrix();
  Matrix y = (xhat.array().colwise() * g.value(gamma).col(0).array()).matrix();
  y.colwise() += g.value(beta).col(0);
  return g.Add(std::move(y), {x, gamma, beta},
               [x, gamma, beta, training, xhat = std::move(xhat), inv_std](Graph &g, int self) {
                 const Matrix &gy = g.grad(Var{self});
                 if (g.needs_grad(gamma)) g.grad(gamma) += gy.cwiseProduct(xhat).rowwise().sum();
                 if (g.needs_grad(beta)) g.grad(beta) += gy.rowwise().sum();
                 if (!g.needs_grad(x)) return;
                 const Vector &gam = g.value(gamma).col(0);
                 Matrix gxhat = (gy.array().colwise() * gam.array()).matrix();
                 if (!training) {
                   g.grad(x).array() += gxhat.array().colwise() * inv_std.array();
                   return;
                 }
                 const double n = static_cast<double>(gy.cols());
                 Vector m1 = gxhat.rowwise().sum() / n;
                 Vector m2 = gxhat.cwiseProduct(xhat).rowwise().sum() / n;
                 Matrix d = gxhat.colwise() - m1;
                 d -= (xhat.array().colwise() * m2.array()).matrix();
                 g.grad(x).array() += d.array().colwise() * inv_std.array();
               });
}

Var StatsPool(Graph &g, Var x, const Segments &segs) {
  Var mean = SegmentMean(g, x, segs);
  Var sq = SegmentMean(g, Square(g, x), segs);
  Var var = Difference(g, sq, Square(g, mean));
  return ConcatRows(g, {mean, SqrtFloor(g, var, 1e-10)});
}

Var AttentiveStatsFromLogits(Graph &g, Var x, Var logits, const Segments &segs) {
  Var alpha = SegmentSoftmax(g, logits, segs);
  Var mean = SegmentSum(g, Product(g, alpha, x), segs);
  Var sq = SegmentSum(g, Product(g, alpha, Square(g, x)), segs);
  Var var = Difference(g, sq, Square(g, mean));
  return ConcatRows(g, {mean, SqrtFloor(g, var, 1e-10)});
}

namespace {

// Column-normalises m; returns the norms.
Vector NormaliseColumns(Matrix *m) {
  Vector norms = m->colwise().norm().transpose();
  for (Eigen::Index j = 0; j < m->cols(); ++j) {
    if (!(norms(j) > 0.0)) throw NumericError("zero-length embedding or class weight");
    m->col(j) /= norms(j);
  }
  return norms;
}

// Backpropagates through x / |x| column-wise.
Matrix NormaliseBackward(const Matrix &unit, const Vector &norms, const Matrix &gunit) {
  Matrix gx = gunit;
  for (Eigen::Index j = 0; j < unit.cols(); ++j) {
    const double proj = unit.col(j).dot(gunit.col(j));
    gx.col(j) = (gunit.col(j) - proj * unit.col(j)) / norms(j);
  }
  return gx;
}

}  // namespace

AamOutput AamSoftmax(const Matrix &emb, const Matrix &weight, const std::vector<int> &labels,
                     double scale, double margin) {
  const Eigen::Index e = emb.rows(), b = emb.cols(), k = weight.rows();
  if (weight.cols() != e) throw UsageError("aam: embedding/class weight dimension mismatch");
  if (static_cast<Eigen::Index>(labels.size()) != b) throw UsageError("aam: label count mismatch");
  if (!(scale > 0.0)) throw UsageError("aam: scale must be positive");
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) throw UsageError("aam: margin out of range");
  for (int y : labels)
    if (y < 0 || y >= k) throw DataError("aam: label out of range");
  Matrix eu = emb;
  Vector enorm = NormaliseColumns(&eu);
  Matrix wu = weight.transpose();  // E x K
  Vector wnorm = NormaliseColumns(&wu);
  Matrix cosine = wu.transpose() * eu;  // K x B
  const double cm = std::cos(margin), sm = std::sin(margin);

  AamOutput out;
  out.logits = scale * cosine;
  for (Eigen::Index j = 0; j < b; ++j) {
    const double c = std::clamp(cosine(labels[j], j), -1.0, 1.0);
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    out.logits(labels[j], j) = scale * (c * cm - s * sm);
  }
  Matrix logp = LogSoftmaxColumns(out.logits);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < b; ++j) loss -= logp(labels[j], j);
  out.loss = loss / static_cast<double>(b);

  // d loss / d logits, then through the margin to cosines.
  Matrix gcos = logp.array().exp().matrix();
  for (Eigen::Index j = 0; j < b; ++j) gcos(labels[j], j) -= 1.0;
  gcos *= scale / static_cast<double>(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const double c = std::clamp(cosine(labels[j], j), -1.0, 1.0);
    const double s = std::sqrt(std::max(1e-12, 1.0 - c * c));
    gcos(labels[j], j) *= cm + sm * c / s;
  }
  out.grad_emb = NormaliseBackward(eu, enorm, wu * gcos);
  out.grad_weight = NormaliseBackward(wu, wnorm, eu * gcos.transpose()).transpose();
  return out;
}

Var AamLoss(Graph &g, Var emb, Var weight, const std::vector<int> &labels, double scale,
            double margin, Matrix *logits) {
  AamOutput out = AamSoftmax(g.value(emb), g.value(weight), labels, scale, margin);
  if (logits != nullptr) *logits = out.logits;
  Matrix y(1, 1);
  y(0, 0) = out.loss;
  return g.Add(std::move(y), {emb, weight},
               [emb, weight, ge = std::move(out.grad_emb),
                gw = std::move(out.grad_weight)](Graph &g, int self) {
                 const double gy = g.grad(Var{self})(0, 0);
                 if (g.needs_grad(emb)) g.grad(emb) += gy * ge;
                 if (g.needs_grad(weight)) g.grad(weight) += gy * gw;
               });
}

Matrix CosineLogits(const Matrix &emb, const Matrix &weight, double scale) {
  if (weight.cols() != emb.rows()) throw UsageError("cosine logits: dimension mismatch");
  Matrix eu = emb;
  NormaliseColumns(&eu);
  Matrix wu = weight.transpose();
  NormaliseColumns(&wu);
  return scale * (wu.transpose() * eu);
}

Matrix LogSoftmaxColumns(const Matrix &logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    const double lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

}  // namespace lidkit::nnet
