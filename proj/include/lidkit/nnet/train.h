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

#ifndef LIDKIT_NNET_TRAIN_H_
#define LIDKIT_NNET_TRAIN_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lidkit/common.h"
#include "lidkit/features.h"
#include "lidkit/nnet/model.h"

namespace lidkit::nnet {

struct TrainConfig {
  int epochs = 30;
  // AAM-softmax margin; the scale lives in the model spec.
  double margin = 0.2;
  double learning_rate = 1e-3;
  double weight_decay = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Learning rate is multiplied by `lr_factor` after `patience` consecutive
  // validation-loss increases.
  double lr_factor = 0.5;
  int patience = 2;
  int batch_size = 32;
  uint64_t seed = 0;

  void Validate() const;
  bool operator==(const TrainConfig &) const = default;
};

// Halves (by lr_factor) the learning rate once the validation loss has risen
// in `patience` consecutive epochs; the count then starts over.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double factor, int patience);
  // Records the validation loss of the epoch just finished and returns the
  // learning rate for the next epoch.
  double Observe(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_, factor_;
  int patience_;
  int rises_ = 0;
  bool has_prev_ = false;
  double prev_ = 0.0;
};

// Decoupled weight decay Adam.
class AdamW {
 public:
  AdamW(const TrainConfig &cfg, const std::vector<Param> &params);
  // Applies one update from the accumulated gradients and clears them.
  void Step(std::vector<Param> *params, double lr);

 private:
  double beta1_, beta2_, eps_, wd_;
  long long t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct LabeledChunk {
  RowMatrix frames;  // T x D
  int label = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double train_accuracy = 0.0;
};

// Mini-batch training with AAM-softmax. Returns one record per epoch; the
// learning rate recorded is the one used during that epoch. Non-finite
// losses raise NumericError naming the epoch.
std::vector<EpochRecord> Train(TdnnModel *model, const std::vector<LabeledChunk> &train,
                               const std::vector<LabeledChunk> &val, const TrainConfig &cfg);

void WriteTrainLog(const std::filesystem::path &path, const std::vector<EpochRecord> &log);

// Fraction of chunks whose highest logit is the label (inference mode).
double Accuracy(const TdnnModel &model, const std::vector<LabeledChunk> &chunks);

// Mean AAM loss over chunks in inference mode.
double EvalLoss(const TdnnModel &model, const std::vector<LabeledChunk> &chunks, double margin,
                int batch_size);

// Mean over chunks (columns) of the column log-softmax.
Vector AggregateChunkLogits(const Matrix &logits);

// Utterance score: per-chunk log-softmax averaged over chunks.
Vector ScoreUtterance(const TdnnModel &model, const std::vector<FeatureMatrix> &chunks);

// Scores many utterances, packing chunks into minibatches of at most
// `max_chunks`. Rows follow the input order.
Matrix ScoreUtterances(const TdnnModel &model,
                       const std::vector<std::vector<FeatureMatrix>> &utterances,
                       int max_chunks = 64);

// Trained network plus the metadata needed to score with it.
struct NnetSystem {
  FeatureKind kind = FeatureKind::kMfcc40;
  LabelSet labels;
  TdnnModel model;
};

void SaveNnet(const std::filesystem::path &path, const NnetSystem &sys);
NnetSystem LoadNnet(const std::filesystem::path &path);

}  // namespace lidkit::nnet

#endif  // LIDKIT_NNET_TRAIN_H_
