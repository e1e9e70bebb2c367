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

#include "lidkit/nnet/train.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "lidkit/binary_io.h"
#include "lidkit/rng.h"

namespace lidkit::nnet {

void TrainConfig::Validate() const {
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) throw UsageError("margin must lie in [0, pi/2)");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (weight_decay < 0.0) throw UsageError("weight decay must be >= 0");
  if (!(lr_factor > 0.0 && lr_factor <= 1.0)) throw UsageError("lr factor must lie in (0, 1]");
  if (patience < 1) throw UsageError("patience must be >= 1");
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
}

PlateauSchedule::PlateauSchedule(double lr, double factor, int patience)
    : lr_(lr), factor_(factor), patience_(patience) {}

double PlateauSchedule::Observe(double val_loss) {
  if (has_prev_ && val_loss > prev_) {
    if (++rises_ >= patience_) {
      lr_ *= factor_;
      rises_ = 0;
    }
  } else {
    rises_ = 0;
  }
  has_prev_ = true;
  prev_ = val_loss;
  return lr_;
}

AdamW::AdamW(const TrainConfig &cfg, const std::vector<Param> &params)
    : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps), wd_(cfg.weight_decay) {
  for (const auto &p : params) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamW::Step(std::vector<Param> *params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params->size(); ++i) {
    Param &p = (*params)[i];
    if (p.grad.size() != p.value.size()) continue;  // unused in this graph
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    p.value.array() -= lr * ((m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_) +
                             wd_ * p.value.array());
    p.grad.setZero();
  }
}

namespace {

// Packs chunks [begin, end) of `order` into a D x sum(T) matrix.
Matrix Pack(const std::vector<LabeledChunk> &chunks, const std::vector<size_t> &order,
            size_t begin, size_t end, Segments *segs, std::vector<int> *labels) {
  std::vector<int> lengths;
  labels->clear();
  for (size_t i = begin; i < end; ++i) {
    lengths.push_back(static_cast<int>(chunks[order[i]].frames.rows()));
    labels->push_back(chunks[order[i]].label);
  }
  *segs = Segments(lengths);
  Matrix feats(chunks[order[begin]].frames.cols(), segs->total());
  for (size_t i = begin; i < end; ++i)
    feats.middleCols(segs->offset(static_cast<int>(i - begin)), lengths[i - begin]) =
        chunks[order[i]].frames.transpose();
  return feats;
}

void CheckChunks(const TdnnModel &model, const std::vector<LabeledChunk> &chunks,
                 const char *what) {
  for (const auto &c : chunks) {
    if (c.frames.cols() != model.spec().feat_dim)
      throw DataError(std::string(what) + ": chunk dimension does not match the model");
    if (c.frames.rows() < 1) throw DataError(std::string(what) + ": empty chunk");
    if (c.label < 0 || c.label >= model.spec().num_classes)
      throw DataError(std::string(what) + ": label out of range");
  }
}

// Splits n items into ceil(n / batch) nearly equal batches, so that no
// batch-norm layer sees a lone straggler.
std::vector<size_t> BatchBounds(size_t n, int batch) {
  const size_t nb = (n + batch - 1) / batch;
  std::vector<size_t> bounds;
  for (size_t b = 0; b <= nb; ++b) bounds.push_back(b * n / nb);
  return bounds;
}

int ArgMax(const Matrix &m, Eigen::Index col) {
  Eigen::Index best;
  m.col(col).maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

std::vector<EpochRecord> Train(TdnnModel *model, const std::vector<LabeledChunk> &train,
                               const std::vector<LabeledChunk> &val, const TrainConfig &cfg) {
  cfg.Validate();
  std::vector<EpochRecord> log;
  if (cfg.epochs == 0) return log;
  if (train.empty()) throw DataError("no training chunks");
  if (val.empty()) throw DataError("no validation chunks");
  CheckChunks(*model, train, "training data");
  CheckChunks(*model, val, "validation data");

  auto &params = model->params();
  for (auto &p : params) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
  AdamW opt(cfg, params);
  PlateauSchedule schedule(cfg.learning_rate, cfg.lr_factor, cfg.patience);
  std::vector<size_t> order(train.size());
  const auto bounds = BatchBounds(train.size(), cfg.batch_size);
  ForwardOptions fwd;
  fwd.training = true;
  fwd.update_bn_state = true;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = schedule.lr();
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng = Rng::Derive(cfg.seed, static_cast<uint64_t>(epoch));
    rng.Shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    size_t correct = 0;
    for (size_t b = 0; b + 1 < bounds.size(); ++b) {
      Segments segs;
      std::vector<int> labels;
      Matrix feats = Pack(train, order, bounds[b], bounds[b + 1], &segs, &labels);
      Graph g;
      Var weights, emb, loss;
      try {
        emb = model->Embed(g, feats, segs, fwd, &weights);
        loss = AamLoss(g, emb, weights, labels, model->spec().logit_scale, cfg.margin);
      } catch (const NumericError &e) {
        throw NumericError("training diverged in epoch " + std::to_string(epoch) + ": " +
                           e.what());
      }
      const double l = g.value(loss)(0, 0);
      if (!std::isfinite(l))
        throw NumericError("training diverged (non-finite loss) in epoch " +
                           std::to_string(epoch));
      g.Backward(loss);
      opt.Step(&params, lr);
      loss_sum += l * static_cast<double>(labels.size());
      Matrix cos = CosineLogits(g.value(emb), g.value(weights), 1.0);
      for (size_t j = 0; j < labels.size(); ++j)
        if (ArgMax(cos, static_cast<Eigen::Index>(j)) == labels[j]) ++correct;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    rec.val_loss = EvalLoss(*model, val, cfg.margin, cfg.batch_size);
    if (!std::isfinite(rec.val_loss))
      throw NumericError("training diverged (non-finite validation loss) in epoch " +
                         std::to_string(epoch));
    log.push_back(rec);
    schedule.Observe(rec.val_loss);
  }
  for (auto &p : params) p.grad.resize(0, 0);
  return log;
}

void WriteTrainLog(const std::filesystem::path &path, const std::vector<EpochRecord> &log) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os.precision(17);
  os << "epoch\ttrain_loss\tval_loss\tlr\n";
  for (const auto &r : log)
    os << r.epoch << '\t' << r.train_loss << '\t' << r.val_loss << '\t' << r.lr << '\n';
  if (!os) throw DataError("failed writing " + path.string());
}

double EvalLoss(const TdnnModel &model, const std::vector<LabeledChunk> &chunks, double margin,
                int batch_size) {
  if (chunks.empty()) throw DataError("no chunks to evaluate");
  CheckChunks(model, chunks, "evaluation data");
  std::vector<size_t> order(chunks.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const auto bounds = BatchBounds(chunks.size(), batch_size);
  double sum = 0.0;
  for (size_t b = 0; b + 1 < bounds.size(); ++b) {
    Segments segs;
    std::vector<int> labels;
    Matrix feats = Pack(chunks, order, bounds[b], bounds[b + 1], &segs, &labels);
    // Inference-mode cosine logits with the margin put back on the targets.
    Matrix logits = model.Logits(feats, segs);
    const double s = model.spec().logit_scale;
    const double cm = std::cos(margin), sm = std::sin(margin);
    for (size_t j = 0; j < labels.size(); ++j) {
      const double c = std::clamp(logits(labels[j], j) / s, -1.0, 1.0);
      logits(labels[j], j) = s * (c * cm - std::sqrt(std::max(0.0, 1.0 - c * c)) * sm);
    }
    Matrix logp = LogSoftmaxColumns(logits);
    for (size_t j = 0; j < labels.size(); ++j) sum -= logp(labels[j], j);
  }
  return sum / static_cast<double>(chunks.size());
}

double Accuracy(const TdnnModel &model, const std::vector<LabeledChunk> &chunks) {
  if (chunks.empty()) throw DataError("no chunks to evaluate");
  CheckChunks(model, chunks, "evaluation data");
  std::vector<size_t> order(chunks.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const auto bounds = BatchBounds(chunks.size(), 64);
  size_t correct = 0;
  for (size_t b = 0; b + 1 < bounds.size(); ++b) {
    Segments segs;
    std::vector<int> labels;
    Matrix feats = Pack(chunks, order, bounds[b], bounds[b + 1], &segs, &labels);
    Matrix logits = model.Logits(feats, segs);
    for (size_t j = 0; j < labels.size(); ++j)
      if (ArgMax(logits, static_cast<Eigen::Index>(j)) == labels[j]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(chunks.size());
}

Vector AggregateChunkLogits(const Matrix &logits) {
  if (logits.cols() < 1) throw DataError("no chunks to score");
  return LogSoftmaxColumns(logits).rowwise().mean();
}

Vector ScoreUtterance(const TdnnModel &model, const std::vector<FeatureMatrix> &chunks) {
  Matrix scores = ScoreUtterances(model, {chunks});
  return scores.row(0).transpose();
}

Matrix ScoreUtterances(const TdnnModel &model,
                       const std::vector<std::vector<FeatureMatrix>> &utterances,
                       int max_chunks) {
  if (max_chunks < 1) throw UsageError("max_chunks must be >= 1");
  const int d = model.spec().feat_dim;
  // Flatten to a chunk list with owning utterance.
  std::vector<const FeatureMatrix *> chunks;
  std::vector<size_t> owner;
  for (size_t u = 0; u < utterances.size(); ++u) {
    if (utterances[u].empty()) throw DataError("utterance has no chunks to score");
    for (const auto &c : utterances[u]) {
      if (c.dims() != d)
        throw DataError("feature dimension " + std::to_string(c.dims()) +
                        " does not match model input " + std::to_string(d));
      if (c.frames() < 1) throw DataError("empty chunk");
      chunks.push_back(&c);
      owner.push_back(u);
    }
  }
  const int k = model.spec().num_classes;
  Matrix logits(k, static_cast<Eigen::Index>(chunks.size()));
  for (size_t begin = 0; begin < chunks.size(); begin += max_chunks) {
    const size_t end = std::min(chunks.size(), begin + max_chunks);
    std::vector<int> lengths;
    for (size_t i = begin; i < end; ++i) lengths.push_back(chunks[i]->frames());
    Segments segs(lengths);
    Matrix feats(d, segs.total());
    for (size_t i = begin; i < end; ++i)
      feats.middleCols(segs.offset(static_cast<int>(i - begin)), lengths[i - begin]) =
          chunks[i]->data.transpose();
    logits.middleCols(begin, end - begin) = model.Logits(feats, segs);
  }
  Matrix scores(static_cast<Eigen::Index>(utterances.size()), k);
  size_t col = 0;
  for (size_t u = 0; u < utterances.size(); ++u) {
    const size_t n = utterances[u].size();
    scores.row(u) = AggregateChunkLogits(logits.middleCols(col, n)).transpose();
    col += n;
  }
  return scores;
}

namespace {
constexpr char kMagic[9] = "LIDKNNT\x01";
constexpr uint32_t kVersion = 1;
}  // namespace

void SaveNnet(const std::filesystem::path &path, const NnetSystem &sys) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  const ModelSpec &s = sys.model.spec();
  os.write(kMagic, 8);
  io::WritePod(os, kVersion);
  io::WriteString(os, std::string(FeatureKindName(sys.kind)));
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(sys.labels.size()));
  for (const auto &c : sys.labels.codes()) io::WriteString(os, c);
  io::WriteString(os, ArchName(s.arch));
  for (int v : {s.feat_dim, s.channels, s.pre_pool_channels, s.embed_dim, s.num_classes,
                s.res2_scale, s.se_bottleneck, s.attention_bottleneck})
    io::WritePod<int32_t>(os, v);
  io::WritePod(os, s.logit_scale);
  Vector flat = sys.model.Flatten();
  io::WritePod<uint64_t>(os, static_cast<uint64_t>(flat.size()));
  io::WriteArray(os, flat.data(), static_cast<size_t>(flat.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

NnetSystem LoadNnet(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  io::ExpectMagic(is, kMagic, path.string());
  if (io::ReadPod<uint32_t>(is) != kVersion)
    throw DataError(path.string() + ": unsupported model version");
  NnetSystem sys;
  sys.kind = ParseFeatureKind(io::ReadString(is));
  const auto nlab = io::ReadPod<uint32_t>(is);
  std::vector<std::string> codes;
  for (uint32_t i = 0; i < nlab; ++i) codes.push_back(io::ReadString(is));
  sys.labels = LabelSet(std::move(codes));
  ModelSpec s;
  s.arch = ParseArch(io::ReadString(is));
  for (int *v : {&s.feat_dim, &s.channels, &s.pre_pool_channels, &s.embed_dim, &s.num_classes,
                 &s.res2_scale, &s.se_bottleneck, &s.attention_bottleneck})
    *v = io::ReadPod<int32_t>(is);
  s.logit_scale = io::ReadPod<double>(is);
  if (s.num_classes != sys.labels.size())
    throw DataError(path.string() + ": class count does not match label set");
  try {
    sys.model = TdnnModel(s, 0);
  } catch (const UsageError &e) {
    throw DataError(path.string() + ": invalid architecture: " + e.what());
  }
  const auto n = io::ReadPod<uint64_t>(is);
  if (n != sys.model.NumWeights())
    throw DataError(path.string() + ": weight count does not match the architecture");
  Vector flat(static_cast<Eigen::Index>(n));
  io::ReadArray(is, flat.data(), n);
  if (!flat.allFinite()) throw DataError(path.string() + ": non-finite weights");
  sys.model.Unflatten(flat);
  return sys;
}

}  // namespace lidkit::nnet
