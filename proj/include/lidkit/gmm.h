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

#ifndef LIDKIT_GMM_H_
#define LIDKIT_GMM_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lidkit/common.h"
#include "lidkit/features.h"

namespace lidkit::gmm {

// Diagonal-covariance Gaussian mixture.
class DiagGmm {
 public:
  DiagGmm() = default;
  // weights: K, means/variances: K x D.
  DiagGmm(Vector weights, Matrix means, Matrix variances);

  int num_components() const { return static_cast<int>(weights_.size()); }
  int dim() const { return static_cast<int>(means_.cols()); }
  const Vector &weights() const { return weights_; }
  const Matrix &means() const { return means_; }
  const Matrix &variances() const { return variances_; }

  // log(w_k) + log N(x_t; mu_k, diag(var_k)) for every frame and component,
  // frames x K.
  Matrix ComponentLogLikes(const RowMatrix &frames) const;
  // log p(x_t), one entry per frame.
  Vector FrameLogLikes(const RowMatrix &frames) const;

  bool operator==(const DiagGmm &other) const;

 private:
  void Precompute();

  Vector weights_;
  Matrix means_;
  Matrix variances_;
  // Cached per-component terms.
  Vector gconst_;       // log w - 0.5 (D log 2pi + sum log var + sum mu^2/var)
  Matrix inv_var_;      // K x D
  Matrix mean_invvar_;  // K x D
};

// Log-sum-exp of each row.
Vector RowLogSumExp(const Matrix &m);

struct UbmOptions {
  int num_components = 2048;
  // EM iterations run after each mixture split, and after the final split.
  int iters_per_split = 4;
  int em_iters = 10;
  // Variance floor as a fraction of the global per-dimension variance.
  double var_floor_factor = 1e-3;
  uint64_t seed = 0;
};

// One record per EM iteration: the component count and the average
// per-frame log-likelihood of the parameters entering that iteration. The
// last entry for each K is the likelihood after the final update.
struct EmTrace {
  std::vector<int> num_components;
  std::vector<double> avg_loglike;
};

// Trains a UBM by binary mixture splitting from a single Gaussian up to
// `num_components`, with EM after each split.
DiagGmm TrainUbm(const RowMatrix &frames, const UbmOptions &opts,
                 EmTrace *trace = nullptr);

// One EM update on `frames`; returns the average log-likelihood of `gmm`
// before the update. Components with no posterior mass keep their
// parameters and get the minimum weight.
double EmStep(const RowMatrix &frames, const Vector &var_floor, DiagGmm *gmm);

struct MapConfig {
  double relevance = 16.0;
};

// Mean-only MAP adaptation: m_k' = (F_k + r m_k) / (n_k + r). Weights and
// variances are copied from the UBM. An empty adaptation set returns the UBM
// unchanged and emits a warning.
DiagGmm MapAdaptMeans(const DiagGmm &ubm, const RowMatrix &frames,
                      const MapConfig &cfg = {});

// Per-component zeroth/first order statistics, used by MapAdaptMeans and
// exposed for tests.
struct SufficientStats {
  Vector occupancy;  // K
  Matrix first;      // K x D, sum_t gamma_tk x_t
};
SufficientStats AccumulateStats(const DiagGmm &gmm, const RowMatrix &frames);

// UBM plus one adapted model per language, sharing the feature kind.
struct GmmSet {
  FeatureKind kind = FeatureKind::kMfcc16Sdc112;
  LabelSet labels;
  DiagGmm ubm;
  std::vector<DiagGmm> languages;  // aligned with labels
};

// Average per-frame log-likelihood ratio against the UBM for each language:
// (1/T) sum_t [log p(x_t | L) - log p(x_t | UBM)].
Vector GmmScore(const GmmSet &models, const FeatureMatrix &utt);

void SaveGmmSet(const std::filesystem::path &path, const GmmSet &set);
GmmSet LoadGmmSet(const std::filesystem::path &path);

}  // namespace lidkit::gmm

#endif  // LIDKIT_GMM_H_
