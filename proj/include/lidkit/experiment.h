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

#ifndef LIDKIT_EXPERIMENT_H_
#define LIDKIT_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lidkit/common.h"
#include "lidkit/features.h"
#include "lidkit/fusion.h"
#include "lidkit/gmm.h"
#include "lidkit/nnet/model.h"
#include "lidkit/nnet/train.h"
#include "lidkit/scores.h"

namespace lidkit::experiment {

enum class Classifier { kXvector, kResnetTdnn, kEcapa, kGmm };
std::string_view ClassifierName(Classifier c);
Classifier ParseClassifier(std::string_view name);

enum class Profile { kDesk, kFull };
std::string_view ProfileName(Profile p);
Profile ParseProfile(std::string_view name);

struct AugmentFlags {
  bool non_speech = false;
  bool signal_perturb = false;
  bool enhancement = false;

  int count() const { return int(non_speech) + int(signal_perturb) + int(enhancement); }
  bool operator==(const AugmentFlags &) const = default;
};

// One row of the system matrix.
struct SystemRow {
  std::string id;
  Classifier classifier;
  FeatureKind features;
  AugmentFlags augment;
};
const std::vector<SystemRow> &SystemMatrix();

struct ExperimentConfig {
  // [system]
  std::string system = "S0";
  Profile profile = Profile::kDesk;
  // Allows combinations that are not a row of the system matrix.
  bool custom = false;

  // [augment]
  AugmentFlags augment;
  // With more than one category, pool_factor * |train| augmented records
  // are sampled across categories; a single category contributes one copy
  // of every training utterance.
  double pool_factor = 2.0;

  // [features]
  FeatureKind features = FeatureKind::kMfcc40;
  double chunk_s = 3.0;

  // [classifier]
  Classifier classifier = Classifier::kXvector;

  // [nnet]
  int channels = 512;
  int pre_pool_channels = 1500;
  int embed_dim = 192;
  int res2_scale = 8;
  int se_bottleneck = 128;
  int attention_bottleneck = 128;
  double logit_scale = 30.0;
  nnet::TrainConfig train;  // seed is taken from [run]

  // [gmm]
  int components = 2048;
  int iters_per_split = 4;
  int em_iters = 10;
  double var_floor_factor = 1e-3;
  double relevance = 16.0;
  int max_ubm_frames = 500000;

  // [data]
  std::filesystem::path manifest;
  std::filesystem::path noise_dir;
  std::filesystem::path rir_dir;
  std::string labels;  // comma separated; empty means the LRE22 set
  int train_sessions = 25;
  int val_sessions = 5;

  // [run]
  std::filesystem::path work_dir = "work";
  uint64_t seed = 0;
  int threads = 1;

  LabelSet label_set() const;
  nnet::ModelSpec model_spec(int num_classes) const;
  gmm::UbmOptions ubm_options() const;
  // Throws UsageError on invalid values or a combination outside the system
  // matrix when `custom` is false.
  void Validate() const;
  bool operator==(const ExperimentConfig &) const = default;
};

// Matrix row whose classifier, features and augmentation equal the config's.
std::optional<std::string> MatchSystemRow(const ExperimentConfig &cfg);

// Shipped configuration of a system at a profile. The desk profile divides
// every width by 8, and uses 64 mixtures and 8 epochs.
ExperimentConfig Preset(std::string_view system, Profile profile);

// Config file syntax: INI-like, one `key = value` per line under `[section]`
// headers, `#` starts a comment. Parsing starts from the preset named by
// [system] id/profile (S0 and desk when absent) and applies every key on top.
// Unknown sections or keys are usage errors.
ExperimentConfig ParseConfig(std::string_view text);
std::string SerializeConfig(const ExperimentConfig &cfg);
ExperimentConfig LoadConfig(const std::filesystem::path &path);
void SaveConfig(const std::filesystem::path &path, const ExperimentConfig &cfg);

// Hash of everything in the config that influences results.
std::string ConfigHash(const ExperimentConfig &cfg);

using Logger = std::function<void(std::string_view)>;
// Writes to stderr.
Logger DefaultLogger();

struct RunResult {
  std::filesystem::path run_dir;
  std::filesystem::path model;
  std::filesystem::path scores_val;
  std::filesystem::path scores_train;
  std::filesystem::path key_val;
  bool reused = false;  // an identical run was already complete
};

// split -> (augment) -> features -> train -> score, each stage cached under
// cfg.work_dir by content hash. The run directory holds config.ini,
// model.bin, train/val manifests and keys, score matrices, metrics.tsv and a
// DONE marker.
RunResult RunExperiment(const ExperimentConfig &cfg, const Logger &log = DefaultLogger());

// Per-utterance parallel loop; results written by index are independent of
// the worker count.
void ParallelFor(int n, int threads, const std::function<void(int)> &fn);

// ----- reporting ------------------------------------------------------------

struct MetricsRow {
  std::string name;
  std::vector<std::string> members;  // one entry for a single system
  std::vector<double> alpha;         // fusion weights, empty for singles
  double eer = 0.0;
  double mean_language_eer = 0.0;
  double act_c = 0.0;
  double min_c = 0.0;
};

struct BenchResult {
  std::string system;
  int files = 0;
  double seconds = 0.0;
  double seconds_per_100 = 0.0;
  double peak_rss_mb = 0.0;
};

struct RunReport {
  std::vector<MetricsRow> rows;
  std::vector<BenchResult> bench;
};

MetricsRow SystemMetrics(const ScoreMatrix &s, const Key &key);

// One row per system, then one fusion row per subset. Fusion is fit and
// evaluated on the given (validation) scores. An empty subset list means the
// fusion of all systems.
RunReport FusionReport(const std::vector<ScoreMatrix> &systems, const Key &key,
                       std::vector<std::vector<std::string>> subsets = {},
                       const fusion::FusionOptions &opts = {});

// Loads scores_val.tsv and key_val.tsv of completed run directories; the
// system name is the run's [system] id.
RunReport FusionReportFromRuns(const std::vector<std::filesystem::path> &run_dirs,
                               std::vector<std::vector<std::string>> subsets = {});

// Columns: name, members, eer, mean_language_eer, act_cprimary,
// min_cprimary, alpha; then a bench section.
void WriteRunReport(const std::filesystem::path &path, const RunReport &r);
std::string RenderRunReport(const RunReport &r);

// Times feature extraction plus scoring of the first `n_files` validation
// utterances of a completed run from their audio.
BenchResult Benchmark(const std::filesystem::path &run_dir, int n_files);

// Peak resident set size of this process in MiB.
double PeakRssMb();

}  // namespace lidkit::experiment

#endif  // LIDKIT_EXPERIMENT_H_
