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

#ifndef LIDKIT_NNET_MODEL_H_
#define LIDKIT_NNET_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lidkit/common.h"
#include "lidkit/nnet/graph.h"
#include "lidkit/rng.h"

namespace lidkit::nnet {

enum class Arch { kXvector, kResnetTdnn, kEcapa };

std::string ArchName(Arch a);
Arch ParseArch(std::string_view s);

struct ModelSpec {
  Arch arch = Arch::kXvector;
  int feat_dim = 40;
  int channels = 512;
  // Width of the last frame-level layer of the x-vector family.
  int pre_pool_channels = 1500;
  int embed_dim = 192;
  int num_classes = 14;
  int res2_scale = 8;
  int se_bottleneck = 128;
  int attention_bottleneck = 128;
  // Scale s applied to cosine logits, both in the training loss and when
  // scoring.
  double logit_scale = 30.0;

  void Validate() const;
  bool operator==(const ModelSpec &) const = default;
};

// The two temporal-convolution settings of the x-vector family.
struct TdnnLayerSpec {
  int kernel;
  int dilation;
};
const std::vector<TdnnLayerSpec> &XvectorLayers();

// Number of input frames that can influence one output frame of the
// frame-level stack.
int ReceptiveField(const ModelSpec &spec);

struct ForwardOptions {
  bool training = false;
  // Fold batch statistics into running statistics (training only).
  bool update_bn_state = false;
  // Replace every squeeze-excitation gate by ones.
  bool force_se_ones = false;
};

class TdnnModel {
 public:
  TdnnModel() = default;
  TdnnModel(const ModelSpec &spec, uint64_t seed);

  const ModelSpec &spec() const { return spec_; }
  std::vector<Param> &params() { return params_; }
  const std::vector<Param> &params() const { return params_; }
  std::vector<BnState> &bn_states() { return bn_; }
  const std::vector<BnState> &bn_states() const { return bn_; }

  // Input: feat_dim x total frames, split by `segs`. Returns the embedding
  // (embed_dim x segments) and, optionally, the class weight node
  // (num_classes x embed_dim). Builds on `g`; the parameter nodes bind to
  // this model, so the graph must not outlive it.
  Var Embed(Graph &g, const Matrix &feats, const Segments &segs, const ForwardOptions &opts,
            Var *class_weights = nullptr);

  // Scaled cosine logits (num_classes x segments) in inference mode.
  Matrix Logits(const Matrix &feats, const Segments &segs) const;

  // All parameters and running statistics as one vector, in a fixed order.
  Vector Flatten() const;
  void Unflatten(const Vector &flat);
  size_t NumWeights() const;

  // Output of the frame-level encoder in inference mode: the last TDNN
  // layer for the x-vector family, the MFA output (3 x channels rows) for
  // ECAPA.
  Matrix FrameOutput(const Matrix &feats, const Segments &segs, bool force_se_ones = false) const;

  // Runs one SE-Res2 block (index 0..2) on `x` in inference mode; with
  // `use_se` false the squeeze-excitation stage is skipped altogether.
  Matrix RunEcapaBlock(int block, const Matrix &x, const Segments &segs, bool use_se,
                       bool force_se_ones) const;

  // Attention logits of the attentive pooling layer for frame-level input
  // `h` (3 x channels rows), inference mode.
  Matrix AttentionLogits(const Matrix &h, const Segments &segs) const;

 private:
  struct Dense {
    int w = -1, b = -1;
  };
  struct Norm {
    int gamma = -1, beta = -1, state = -1;
  };
  struct ConvUnit {  // conv -> relu -> batchnorm
    Dense dense;
    Norm norm;
    int kernel = 1, dilation = 1;
  };
  struct SeRes2Block {
    ConvUnit in, out;
    std::vector<ConvUnit> branches;  // scale - 1
    Dense se1, se2;
    int dilation = 1;
  };

  struct Ctx;

  Dense MakeDense(const std::string &name, int out, int in, Rng &rng);
  Norm MakeNorm(const std::string &name, int channels);
  ConvUnit MakeConv(const std::string &name, int out, int in, int kernel, int dilation,
                    Rng &rng);

  Var Apply(Ctx &c, const Dense &d, Var x) const;
  Var Apply(Ctx &c, const Norm &n, Var x) const;
  Var Apply(Ctx &c, const ConvUnit &u, Var x) const;
  Var ApplyBlock(Ctx &c, const SeRes2Block &blk, Var x, bool use_se) const;
  Var Attention(Ctx &c, Var h) const;
  Var FrameLevel(Ctx &c, Var x, Var *mfa) const;
  Var EmbedImpl(Ctx &c, Var x) const;

  ModelSpec spec_;
  std::vector<Param> params_;
  std::vector<BnState> bn_;

  // x-vector family
  std::vector<ConvUnit> tdnn_;
  ConvUnit fc1_;
  // ECAPA
  ConvUnit stem_, mfa_;
  std::vector<SeRes2Block> blocks_;
  Dense att1_, att2_;
  Norm pool_norm_;
  Dense embed_;
  Norm embed_norm_;
  int head_ = -1;
};

}  // namespace lidkit::nnet

#endif  // LIDKIT_NNET_MODEL_H_
