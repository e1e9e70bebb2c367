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

#include "lidkit/nnet/model.h"

#include <cmath>

namespace lidkit::nnet {

std::string ArchName(Arch a) {
  switch (a) {
    case Arch::kXvector: return "xvector";
    case Arch::kResnetTdnn: return "resnet_tdnn";
    case Arch::kEcapa: return "ecapa";
  }
  return "?";
}

Arch ParseArch(std::string_view s) {
  if (s == "xvector") return Arch::kXvector;
  if (s == "resnet_tdnn") return Arch::kResnetTdnn;
  if (s == "ecapa") return Arch::kEcapa;
  throw UsageError("unknown architecture '" + std::string(s) + "'");
}

void ModelSpec::Validate() const {
  if (feat_dim < 1 || channels < 1 || pre_pool_channels < 1 || embed_dim < 1)
    throw UsageError("model dimensions must be positive");
  if (num_classes < 2) throw UsageError("model needs at least two classes");
  if (!(logit_scale > 0.0)) throw UsageError("logit scale must be positive");
  if (arch == Arch::kEcapa) {
    if (res2_scale < 2 || channels % res2_scale != 0)
      throw UsageError("ECAPA channels must be a multiple of the Res2 scale (>= 2)");
    if (se_bottleneck < 1 || attention_bottleneck < 1)
      throw UsageError("bottleneck sizes must be positive");
  }
}

const std::vector<TdnnLayerSpec> &XvectorLayers() {
  static const std::vector<TdnnLayerSpec> layers = {{5, 1}, {3, 2}, {3, 3}, {1, 1}, {1, 1}};
  return layers;
}

namespace {
const int kEcapaDilations[] = {2, 3, 4};
}

int ReceptiveField(const ModelSpec &spec) {
  int span = 0;
  if (spec.arch == Arch::kEcapa) {
    span += 4;  // stem, kernel 5
    // The Res2 cascade chains scale-1 kernel-3 convolutions.
    for (int d : kEcapaDilations) span += (spec.res2_scale - 1) * 2 * d;
  } else {
    for (const auto &l : XvectorLayers()) span += (l.kernel - 1) * l.dilation;
  }
  return span + 1;
}

// Per-call binding of parameters to graph nodes. Trainable forwards bind
// Param objects of a mutable model; inference binds constant copies.
struct TdnnModel::Ctx {
  Graph &g;
  const Segments &segs;
  ForwardOptions opts;
  TdnnModel *train_model;  // null in inference
  const TdnnModel &model;
  std::vector<Var> vars;

  Ctx(Graph &graph, const Segments &s, const ForwardOptions &o, TdnnModel *tm,
      const TdnnModel &m)
      : g(graph), segs(s), opts(o), train_model(tm), model(m), vars(m.params_.size()) {}

  Var P(int idx) {
    if (vars[idx].id < 0)
      vars[idx] = train_model != nullptr ? g.Parameter(train_model->params_[idx])
                                         : g.Constant(model.params_[idx].value);
    return vars[idx];
  }
};

TdnnModel::Dense TdnnModel::MakeDense(const std::string &name, int out, int in, Rng &rng) {
  Dense d;
  const double a = std::sqrt(6.0 / in);
  Matrix w(out, in);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.Uniform(-a, a);
  d.w = static_cast<int>(params_.size());
  params_.push_back({name + ".w", std::move(w), Matrix()});
  d.b = static_cast<int>(params_.size());
  params_.push_back({name + ".b", Matrix::Zero(out, 1), Matrix()});
  return d;
}

TdnnModel::Norm TdnnModel::MakeNorm(const std::string &name, int channels) {
  Norm n;
  n.gamma = static_cast<int>(params_.size());
  params_.push_back({name + ".gamma", Matrix::Ones(channels, 1), Matrix()});
  n.beta = static_cast<int>(params_.size());
  params_.push_back({name + ".beta", Matrix::Zero(channels, 1), Matrix()});
  n.state = static_cast<int>(bn_.size());
  bn_.push_back({Vector::Zero(channels), Vector::Ones(channels)});
  return n;
}

TdnnModel::ConvUnit TdnnModel::MakeConv(const std::string &name, int out, int in, int kernel,
                                        int dilation, Rng &rng) {
  ConvUnit u;
  u.dense = MakeDense(name, out, in * kernel, rng);
  u.norm = MakeNorm(name + ".bn", out);
  u.kernel = kernel;
  u.dilation = dilation;
  return u;
}

TdnnModel::TdnnModel(const ModelSpec &spec, uint64_t seed) : spec_(spec) {
  spec.Validate();
  Rng rng = Rng::Derive(seed, "nnet/init");
  const int c = spec.channels;
  if (spec.arch == Arch::kEcapa) {
    stem_ = MakeConv("stem", c, spec.feat_dim, 5, 1, rng);
    const int width = c / spec.res2_scale;
    for (int b = 0; b < 3; ++b) {
      const std::string name = "block" + std::to_string(b + 1);
      SeRes2Block blk;
      blk.dilation = kEcapaDilations[b];
      blk.in = MakeConv(name + ".in", c, c, 1, 1, rng);
      for (int s = 1; s < spec.res2_scale; ++s)
        blk.branches.push_back(
            MakeConv(name + ".res2." + std::to_string(s), width, width, 3, blk.dilation, rng));
      blk.out = MakeConv(name + ".out", c, c, 1, 1, rng);
      blk.se1 = MakeDense(name + ".se1", spec.se_bottleneck, c, rng);
      blk.se2 = MakeDense(name + ".se2", c, spec.se_bottleneck, rng);
      blocks_.push_back(std::move(blk));
    }
    mfa_ = MakeConv("mfa", 3 * c, 3 * c, 1, 1, rng);
    att1_ = MakeDense("att1", spec.attention_bottleneck, 9 * c, rng);
    att2_ = MakeDense("att2", 3 * c, spec.attention_bottleneck, rng);
    pool_norm_ = MakeNorm("pool.bn", 6 * c);
    embed_ = MakeDense("embed", spec.embed_dim, 6 * c, rng);
  } else {
    const auto &layers = XvectorLayers();
    int in = spec.feat_dim;
    for (size_t l = 0; l < layers.size(); ++l) {
      const int out = l + 1 == layers.size() ? spec.pre_pool_channels : c;
      tdnn_.push_back(MakeConv("tdnn" + std::to_string(l + 1), out, in, layers[l].kernel,
                               layers[l].dilation, rng));
      in = out;
    }
    fc1_ = MakeConv("fc1", c, 2 * spec.pre_pool_channels, 1, 1, rng);
    embed_ = MakeDense("embed", spec.embed_dim, c, rng);
  }
  embed_norm_ = MakeNorm("embed.bn", spec.embed_dim);
  Matrix head(spec.num_classes, spec.embed_dim);
  for (Eigen::Index j = 0; j < head.cols(); ++j)
    for (Eigen::Index i = 0; i < head.rows(); ++i) head(i, j) = rng.Normal();
  head_ = static_cast<int>(params_.size());
  params_.push_back({"head", std::move(head), Matrix()});
}

Var TdnnModel::Apply(Ctx &c, const Dense &d, Var x) const {
  return Affine(c.g, x, c.P(d.w), c.P(d.b));
}

Var TdnnModel::Apply(Ctx &c, const Norm &n, Var x) const {
  BnState *update = nullptr;
  if (c.opts.training && c.opts.update_bn_state && c.train_model != nullptr)
    update = &c.train_model->bn_[n.state];
  return BatchNorm(c.g, x, c.P(n.gamma), c.P(n.beta), bn_[n.state], c.opts.training, update);
}

Var TdnnModel::Apply(Ctx &c, const ConvUnit &u, Var x) const {
  Var in = u.kernel == 1 ? x : ShiftStack(c.g, x, c.segs, u.kernel, u.dilation);
  return Apply(c, u.norm, Relu(c.g, Apply(c, u.dense, in)));
}

Var TdnnModel::ApplyBlock(Ctx &c, const SeRes2Block &blk, Var x, bool use_se) const {
  Var y = Apply(c, blk.in, x);
  const int width = spec_.channels / spec_.res2_scale;
  std::vector<Var> outs;
  outs.push_back(RowSlice(c.g, y, 0, width));
  for (int s = 1; s < spec_.res2_scale; ++s) {
    Var part = RowSlice(c.g, y, s * width, width);
    if (s > 1) part = Sum(c.g, part, outs.back());
    outs.push_back(Apply(c, blk.branches[s - 1], part));
  }
  Var z = Apply(c, blk.out, ConcatRows(c.g, outs));
  if (use_se && !c.opts.force_se_ones) {
    Var squeeze = SegmentMean(c.g, z, c.segs);
    Var gate = Sigmoid(c.g, Apply(c, blk.se2, Relu(c.g, Apply(c, blk.se1, squeeze))));
    z = Product(c.g, z, Expand(c.g, gate, c.segs));
  }
  return Sum(c.g, z, x);
}

Var TdnnModel::FrameLevel(Ctx &c, Var x, Var *mfa) const {
  if (spec_.arch == Arch::kEcapa) {
    Var h = Apply(c, stem_, x);
    std::vector<Var> outs;
    for (const auto &blk : blocks_) {
      h = ApplyBlock(c, blk, h, true);
      outs.push_back(h);
    }
    Var agg = Apply(c, mfa_, ConcatRows(c.g, outs));
    if (mfa != nullptr) *mfa = agg;
    return agg;
  }
  Var h = x;
  for (size_t l = 0; l < tdnn_.size(); ++l) {
    Var out = Apply(c, tdnn_[l], h);
    if (spec_.arch == Arch::kResnetTdnn && l >= 1 && l + 1 < tdnn_.size())
      out = Sum(c.g, out, h);
    h = out;
  }
  return h;
}

Var TdnnModel::Attention(Ctx &c, Var h) const {
  Var mean = SegmentMean(c.g, h, c.segs);
  Var var = Difference(c.g, SegmentMean(c.g, Square(c.g, h), c.segs), Square(c.g, mean));
  Var std = SqrtFloor(c.g, var, 1e-10);
  Var ctx = ConcatRows(c.g, {h, Expand(c.g, mean, c.segs), Expand(c.g, std, c.segs)});
  return Apply(c, att2_, Tanh(c.g, Apply(c, att1_, ctx)));
}

Var TdnnModel::EmbedImpl(Ctx &c, Var x) const {
  Var h = FrameLevel(c, x, nullptr);
  Var e;
  if (spec_.arch == Arch::kEcapa) {
    Var pooled = AttentiveStatsFromLogits(c.g, h, Attention(c, h), c.segs);
    e = Apply(c, embed_, Apply(c, pool_norm_, pooled));
  } else {
    Var pooled = StatsPool(c.g, h, c.segs);
    e = Apply(c, embed_, Apply(c, fc1_, pooled));
  }
  return Apply(c, embed_norm_, e);
}

namespace {
void CheckInput(const ModelSpec &spec, const Matrix &feats, const Segments &segs) {
  if (feats.rows() != spec.feat_dim)
    throw DataError("feature dimension " + std::to_string(feats.rows()) +
                    " does not match model input " + std::to_string(spec.feat_dim));
  if (feats.cols() != segs.total()) throw UsageError("frame count does not match segments");
  if (segs.size() < 1) throw UsageError("empty minibatch");
}
}  // namespace

Var TdnnModel::Embed(Graph &g, const Matrix &feats, const Segments &segs,
                     const ForwardOptions &opts, Var *class_weights) {
  CheckInput(spec_, feats, segs);
  Ctx c(g, segs, opts, this, *this);
  Var e = EmbedImpl(c, g.Constant(feats));
  if (class_weights != nullptr) *class_weights = c.P(head_);
  return e;
}

Matrix TdnnModel::Logits(const Matrix &feats, const Segments &segs) const {
  CheckInput(spec_, feats, segs);
  Graph g;
  Ctx c(g, segs, ForwardOptions{}, nullptr, *this);
  Var e = EmbedImpl(c, g.Constant(feats));
  return CosineLogits(g.value(e), params_[head_].value, spec_.logit_scale);
}

Matrix TdnnModel::FrameOutput(const Matrix &feats, const Segments &segs,
                              bool force_se_ones) const {
  CheckInput(spec_, feats, segs);
  Graph g;
  ForwardOptions o;
  o.force_se_ones = force_se_ones;
  Ctx c(g, segs, o, nullptr, *this);
  return g.value(FrameLevel(c, g.Constant(feats), nullptr));
}

Matrix TdnnModel::RunEcapaBlock(int block, const Matrix &x, const Segments &segs, bool use_se,
                                bool force_se_ones) const {
  if (spec_.arch != Arch::kEcapa || block < 0 || block >= static_cast<int>(blocks_.size()))
    throw UsageError("no such ECAPA block");
  if (x.rows() != spec_.channels || x.cols() != segs.total())
    throw UsageError("block input shape mismatch");
  Graph g;
  ForwardOptions o;
  o.force_se_ones = force_se_ones;
  Ctx c(g, segs, o, nullptr, *this);
  return g.value(ApplyBlock(c, blocks_[block], g.Constant(x), use_se));
}

Matrix TdnnModel::AttentionLogits(const Matrix &h, const Segments &segs) const {
  if (spec_.arch != Arch::kEcapa) throw UsageError("attention logits need an ECAPA model");
  Graph g;
  Ctx c(g, segs, ForwardOptions{}, nullptr, *this);
  return g.value(Attention(c, g.Constant(h)));
}

size_t TdnnModel::NumWeights() const {
  size_t n = 0;
  for (const auto &p : params_) n += p.value.size();
  for (const auto &s : bn_) n += s.mean.size() + s.var.size();
  return n;
}

Vector TdnnModel::Flatten() const {
  Vector flat(NumWeights());
  Eigen::Index k = 0;
  for (const auto &p : params_) {
    flat.segment(k, p.value.size()) = p.value.reshaped();
    k += p.value.size();
  }
  for (const auto &s : bn_) {
    flat.segment(k, s.mean.size()) = s.mean;
    k += s.mean.size();
    flat.segment(k, s.var.size()) = s.var;
    k += s.var.size();
  }
  return flat;
}

void TdnnModel::Unflatten(const Vector &flat) {
  if (static_cast<size_t>(flat.size()) != NumWeights())
    throw DataError("weight vector length does not match the architecture");
  Eigen::Index k = 0;
  for (auto &p : params_) {
    p.value.reshaped() = flat.segment(k, p.value.size());
    k += p.value.size();
  }
  for (auto &s : bn_) {
    s.mean = flat.segment(k, s.mean.size());
    k += s.mean.size();
    s.var = flat.segment(k, s.var.size());
    k += s.var.size();
  }
}

}  // namespace lidkit::nnet
