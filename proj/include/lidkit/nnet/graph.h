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

#ifndef LIDKIT_NNET_GRAPH_H_
#define LIDKIT_NNET_GRAPH_H_

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "lidkit/common.h"

namespace lidkit::nnet {

// Trainable tensor with its accumulated gradient.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
};

// A minibatch of variable-length sequences is packed column-wise into one
// channels x total_frames matrix; Segments records where each sequence lives.
class Segments {
 public:
  Segments() = default;
  explicit Segments(const std::vector<int> &lengths);

  int size() const { return static_cast<int>(offset_.size()); }
  int total() const { return total_; }
  int offset(int b) const { return offset_[b]; }
  int length(int b) const { return length_[b]; }
  // Segment index of every column.
  const std::vector<int> &column_segment() const { return column_segment_; }

 private:
  std::vector<int> offset_, length_, column_segment_;
  int total_ = 0;
};

struct Var {
  int id = -1;
};

// Running statistics of a batch-norm layer.
struct BnState {
  Vector mean;
  Vector var;
};

// Records a forward computation and replays it backwards. Values and
// gradients are column-major matrices; rows are channels.
class Graph {
 public:
  Var Constant(Matrix value);
  // Gradients reaching this node are added to `p.grad` by Backward.
  Var Parameter(Param &p);

  const Matrix &value(Var v) const { return nodes_[v.id].value; }
  // Gradient buffer; zero-initialised on first access.
  Matrix &grad(Var v);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void Backward(Var root);

  // Generic node constructor for ops.
  Var Add(Matrix value, std::vector<Var> inputs, std::function<void(Graph &, int)> backward);

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool needs_grad = false;
    Param *param = nullptr;
    std::function<void(Graph &, int)> backward;
  };
  std::deque<Node> nodes_;  // stable addresses, no relocation on growth
};

// ----- operations -----------------------------------------------------------

// W x + b, W: out x in, b: out x 1.
Var Affine(Graph &g, Var x, Var w, Var b);
// Stacks `kernel` copies of x shifted by (k - (kernel-1)/2) * dilation
// frames, zero-padded at segment edges: (kernel * C) x N.
Var ShiftStack(Graph &g, Var x, const Segments &segs, int kernel, int dilation);
Var Relu(Graph &g, Var x);
Var Sigmoid(Graph &g, Var x);
Var Tanh(Graph &g, Var x);
Var Sum(Graph &g, Var a, Var b);
Var Difference(Graph &g, Var a, Var b);
Var Product(Graph &g, Var a, Var b);
Var Square(Graph &g, Var x);
// sqrt(max(x, floor)); no gradient where x < floor.
Var SqrtFloor(Graph &g, Var x, double floor);
Var RowSlice(Graph &g, Var x, int row, int rows);
Var ConcatRows(Graph &g, const std::vector<Var> &parts);
// C x N -> C x B
Var SegmentSum(Graph &g, Var x, const Segments &segs);
Var SegmentMean(Graph &g, Var x, const Segments &segs);
// C x B -> C x N, repeating each column over its segment.
Var Expand(Graph &g, Var x, const Segments &segs);
// Softmax over frames within each segment, independently per row.
Var SegmentSoftmax(Graph &g, Var x, const Segments &segs);

// Batch normalisation over columns. In training mode batch statistics are
// used, and folded into `*update` with the given momentum when it is
// non-null; otherwise the running statistics `running` are used.
Var BatchNorm(Graph &g, Var x, Var gamma, Var beta, const BnState &running, bool training,
              BnState *update, double momentum = 0.1, double eps = 1e-5);

// Per-segment mean and standard deviation (variance floored at 1e-10),
// stacked: 2C x B.
Var StatsPool(Graph &g, Var x, const Segments &segs);
// Attention-weighted mean and standard deviation given per-channel
// attention logits (same shape as x): 2C x B.
Var AttentiveStatsFromLogits(Graph &g, Var x, Var logits, const Segments &segs);

struct AamOutput {
  double loss = 0.0;
  Matrix logits;       // classes x B, margin applied to targets
  Matrix grad_emb;     // E x B
  Matrix grad_weight;  // classes x E
};

// Additive angular margin softmax. Embeddings (E x B) and class weights
// (classes x E) are length-normalised; logits are s cos(theta_y + m) for the
// target and s cos(theta_j) otherwise; loss is the batch mean cross-entropy.
AamOutput AamSoftmax(const Matrix &emb, const Matrix &weight, const std::vector<int> &labels,
                     double scale, double margin);

// Scalar loss node wrapping AamSoftmax.
Var AamLoss(Graph &g, Var emb, Var weight, const std::vector<int> &labels, double scale,
            double margin, Matrix *logits = nullptr);

// s cos(theta_j) for every class and column, no margin.
Matrix CosineLogits(const Matrix &emb, const Matrix &weight, double scale);

// Column-wise log-softmax.
Matrix LogSoftmaxColumns(const Matrix &logits);

}  // namespace lidkit::nnet

#endif  // LIDKIT_NNET_GRAPH_H_
