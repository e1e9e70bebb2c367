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

#ifndef LIDKIT_CORPUS_H_
#define LIDKIT_CORPUS_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lidkit/common.h"

namespace lidkit {

enum class Origin { kOriginal, kAdditive, kSignal, kEnhance };

std::string_view OriginName(Origin o);
Origin ParseOrigin(std::string_view name);

struct UtteranceRecord {
  std::string id;
  std::filesystem::path path;
  std::string language;
  std::string session;
  double duration_s = 0.0;
  Origin origin = Origin::kOriginal;

  bool operator==(const UtteranceRecord &) const = default;
};

// Validated, id-unique list of utterances over a fixed label set.
//
// On disk it is a TSV with columns id, path, language, session, duration_s
// and an optional sixth column `origin`. A first line starting with "id\t"
// is treated as a header. Relative paths are resolved against the
// directory of the manifest file when loading.
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(LabelSet labels) : labels_(std::move(labels)) {}
  Manifest(LabelSet labels, std::vector<UtteranceRecord> records);

  const LabelSet &labels() const { return labels_; }
  const std::vector<UtteranceRecord> &records() const { return records_; }
  size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const UtteranceRecord &operator[](size_t i) const { return records_[i]; }

  // Validates and appends; throws DataError on a duplicate id, unknown
  // language or non-positive duration.
  void Add(UtteranceRecord record);

  std::optional<size_t> Find(const std::string &id) const;
  // Label index of each record, in record order.
  std::vector<int> LabelIndices() const;

 private:
  void Validate(const UtteranceRecord &r) const;

  LabelSet labels_;
  std::vector<UtteranceRecord> records_;
  std::unordered_map<std::string, size_t> index_;
};

Manifest LoadManifest(const std::filesystem::path &path, const LabelSet &labels);
void SaveManifest(const std::filesystem::path &path, const Manifest &manifest);

struct SplitSpec {
  int train_sessions_per_lang = 25;
  int val_sessions_per_lang = 5;
  uint64_t seed = 0;
};

struct SplitResult {
  Manifest train;
  Manifest val;
};

// Session-disjoint split: per language, sessions are drawn uniformly without
// replacement; the first `train_sessions_per_lang` go to train, the next
// `val_sessions_per_lang` to validation. Sessions beyond that are unused.
SplitResult SplitSessions(const Manifest &manifest, const SplitSpec &spec);

// Original training records plus `target_count` records sampled without
// replacement from the augmented manifests, stratified evenly across the
// categories and, within each category, across languages.
Manifest PoolAugmented(const Manifest &train,
                       const std::vector<Manifest> &augmented,
                       int target_count, uint64_t seed);

}  // namespace lidkit

#endif  // LIDKIT_CORPUS_H_
