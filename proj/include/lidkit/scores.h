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

#ifndef LIDKIT_SCORES_H_
#define LIDKIT_SCORES_H_

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "lidkit/common.h"

namespace lidkit {

// Per-utterance, per-language scores of one system. Rows follow `ids`,
// columns follow `labels`.
struct ScoreMatrix {
  std::string system;
  LabelSet labels;
  std::vector<std::string> ids;
  Matrix scores;

  int rows() const { return static_cast<int>(ids.size()); }
  // Throws DataError on shape mismatch or non-finite entries.
  void Validate() const;
};

// Score TSV: header "segmentid" followed by the language codes, one row per
// utterance. Values are written with enough digits to round-trip exactly.
void WriteScores(const std::filesystem::path &path, const ScoreMatrix &s);
ScoreMatrix ReadScores(const std::filesystem::path &path, const std::string &system = "");

// Key TSV: (segmentid, language) rows, with an optional
// "segmentid\tlanguage" header.
using Key = std::unordered_map<std::string, std::string>;
Key ReadKey(const std::filesystem::path &path);
void WriteKey(const std::filesystem::path &path, const std::vector<std::string> &ids,
              const std::vector<std::string> &languages);

// Label index of every row of `s`; throws DataError when an id has no
// entry in the key or its language is not among the score columns.
std::vector<int> LabelsFor(const ScoreMatrix &s, const Key &key);

// Throws DataError unless every matrix has the same ids (in the same order)
// and the same label set as the first.
void CheckAligned(const std::vector<ScoreMatrix> &systems);

}  // namespace lidkit

#endif  // LIDKIT_SCORES_H_
