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

#ifndef LIDKIT_FUSION_H_
#define LIDKIT_FUSION_H_

#include <filesystem>
#include <string>
#include <vector>

#include "lidkit/common.h"
#include "lidkit/scores.h"

namespace lidkit::fusion {

// Fused score: sum_i alpha_i S_i + beta, one scalar per system and one
// offset per language.
struct FusionWeights {
  std::vector<std::string> systems;
  std::vector<double> alpha;
  Vector beta;
};

struct FusionOptions {
  double l2 = 1e-4;  // penalty on alpha only
  double grad_tol = 1e-7;
  int max_iter = 200;
};

struct FitInfo {
  double objective = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

// Mean multiclass cross-entropy of softmax(row) against the labels.
double CrossEntropy(const Matrix &logits, const std::vector<int> &labels);

// Objective mean CE(softmax(sum alpha_i S_i + beta)) + l2 |alpha|^2 and,
// optionally, its gradient with respect to [alpha; beta].
double FusionObjective(const std::vector<const Matrix *> &scores, const std::vector<int> &labels,
                       const Vector &alpha, const Vector &beta, double l2,
                       Vector *grad = nullptr);

// Fits the weights by damped Newton iterations started from the best
// single system (alpha = unit vector, beta = 0). The offsets are kept at
// zero sum, which removes the softmax's shift invariance.
FusionWeights FitFusion(const std::vector<ScoreMatrix> &systems, const std::vector<int> &labels,
                        const FusionOptions &opts = {}, FitInfo *info = nullptr);

ScoreMatrix ApplyFusion(const FusionWeights &w, const std::vector<ScoreMatrix> &systems,
                        const std::string &name = "fused");

// TSV: "system<TAB>alpha" header, one row per system, then a "beta" row
// with one offset per score column.
void WriteFusionWeights(const std::filesystem::path &path, const FusionWeights &w);
FusionWeights ReadFusionWeights(const std::filesystem::path &path);

}  // namespace lidkit::fusion

#endif  // LIDKIT_FUSION_H_
