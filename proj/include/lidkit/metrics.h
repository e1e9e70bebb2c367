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

#ifndef LIDKIT_METRICS_H_
#define LIDKIT_METRICS_H_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lidkit/common.h"

namespace lidkit::metrics {

// Detection trials: one per (utterance, hypothesis language). The trial
// (u, L) is a target trial iff labels[u] == L.
struct TrialSet {
  Matrix llr;               // utterances x languages
  std::vector<int> labels;  // true language of every utterance

  int num_languages() const { return static_cast<int>(llr.cols()); }
  // Scores of target and nontarget trials, optionally restricted to one
  // hypothesis language.
  void Split(std::vector<double> *targets, std::vector<double> *nontargets,
             int hypothesis = -1) const;
};

// LLR(u, L) = S[u, L] - log mean_{L' != L} exp S[u, L'].
TrialSet MakeTrials(const Matrix &scores, const std::vector<int> &labels);

// Equal error rate in percent. Thresholds sweep the distinct scores plus
// +inf, a trial being accepted iff score >= threshold; between the two ROC
// vertices where P_miss - P_fa changes sign the rates are interpolated
// linearly.
double Eer(std::span<const double> targets, std::span<const double> nontargets);
double Eer(const TrialSet &trials);

struct CostParams {
  std::vector<double> target_priors = {0.5, 0.1};
  double c_miss = 1.0;
  double c_fa = 1.0;

  void Validate() const;
};

struct Cost {
  double act = 0.0;
  double min = 0.0;
};

// Primary cost averaged over the operating points. For each prior P_t,
// C = mean over languages with target trials of
// C_miss P_t P_miss(L) + C_fa (1 - P_t) P_fa(L), where P_fa(L) is pooled over
// the nontarget trials of hypothesis L. actC uses the Bayes threshold
// log(C_fa (1 - P_t) / (C_miss P_t)); minC one global threshold per
// operating point chosen by exhaustive sweep.
Cost CPrimary(const TrialSet &trials, const CostParams &params = {});

// Cost at a fixed threshold for one operating point, exposed for tests.
double CostAt(const TrialSet &trials, double target_prior, double threshold,
              const CostParams &params = {});

struct Report {
  std::vector<std::string> languages;
  std::vector<double> language_eer;   // NaN where a language has no targets
  Eigen::MatrixXi confusion;          // true x predicted (row argmax)
  double pooled_eer = 0.0;
  double mean_language_eer = 0.0;     // over languages with targets
  Cost cost;
};

// `scores` is utterances x languages; `labels` the true language indices.
Report MakeReport(const Matrix &scores, const std::vector<int> &labels,
                  const std::vector<std::string> &languages, const CostParams &params = {});

// Confusion matrix from row-argmax decisions.
Eigen::MatrixXi Confusion(const Matrix &scores, const std::vector<int> &labels);

// "metric<TAB>value" rows: pooled_eer, mean_language_eer, act_cprimary,
// min_cprimary, each in shortest round-trip form.
void WriteMetricsTsv(const std::filesystem::path &path, const Report &r);
void WriteLanguageEerTsv(const std::filesystem::path &path, const Report &r);
void WriteConfusionTsv(const std::filesystem::path &path, const Report &r);
// Plain-text rendering of a report.
std::string RenderReport(const Report &r);

}  // namespace lidkit::metrics

#endif  // LIDKIT_METRICS_H_
