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

#include "lidkit/scores.h"

#include <cstdio>
#include <fstream>

namespace lidkit {

void ScoreMatrix::Validate() const {
  if (scores.rows() != static_cast<Eigen::Index>(ids.size()) || scores.cols() != labels.size())
    throw DataError("score matrix '" + system + "': shape does not match ids/labels");
  if (!scores.allFinite()) throw DataError("score matrix '" + system + "': non-finite score");
}

void WriteScores(const std::filesystem::path &path, const ScoreMatrix &s) {
  s.Validate();
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "segmentid";
  for (const auto &c : s.labels.codes()) os << '\t' << c;
  os << '\n';
  char buf[32];
  for (int r = 0; r < s.rows(); ++r) {
    os << s.ids[r];
    for (Eigen::Index c = 0; c < s.scores.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.scores(r, c));
      os << '\t' << buf;
    }
    os << '\n';
  }
  if (!os) throw DataError("failed writing " + path.string());
}

ScoreMatrix ReadScores(const std::filesystem::path &path, const std::string &system) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open score file " + path.string());
  ScoreMatrix s;
  s.system = system.empty() ? path.stem().string() : system;
  std::string line;
  if (!std::getline(is, line)) throw DataError(path.string() + ": empty score file");
  auto head = SplitString(line, '\t');
  if (head.size() < 2 || Trim(head[0]) != "segmentid")
    throw DataError(path.string() + ":1: header must start with 'segmentid'");
  std::vector<std::string> codes;
  for (size_t i = 1; i < head.size(); ++i) codes.push_back(Trim(head[i]));
  try {
    s.labels = LabelSet(codes);
  } catch (const Error &e) {
    throw DataError(path.string() + ":1: " + e.what());
  }
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (Trim(line).empty()) continue;
    auto f = SplitString(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != head.size()) throw DataError(where + ": wrong number of columns");
    s.ids.push_back(Trim(f[0]));
    std::vector<double> row;
    for (size_t i = 1; i < f.size(); ++i) row.push_back(ParseDouble(Trim(f[i]), where + ": score"));
    rows.push_back(std::move(row));
  }
  s.scores.resize(static_cast<Eigen::Index>(rows.size()), s.labels.size());
  for (size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < s.labels.size(); ++c) s.scores(r, c) = rows[r][c];
  std::unordered_map<std::string, int> seen;
  for (const auto &id : s.ids)
    if (++seen[id] > 1) throw DataError(path.string() + ": duplicate segment id '" + id + "'");
  s.Validate();
  return s;
}

Key ReadKey(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open key file " + path.string());
  Key key;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (Trim(line).empty()) continue;
    auto f = SplitString(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() < 2) throw DataError(where + ": expected segmentid<TAB>language");
    std::string id = Trim(f[0]), lang = Trim(f[1]);
    if (lineno == 1 && id == "segmentid") continue;
    if (!key.emplace(id, lang).second) throw DataError(where + ": duplicate segment id '" + id + "'");
  }
  return key;
}

void WriteKey(const std::filesystem::path &path, const std::vector<std::string> &ids,
              const std::vector<std::string> &languages) {
  if (ids.size() != languages.size()) throw UsageError("key: ids and languages differ in length");
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "segmentid\tlanguage\n";
  for (size_t i = 0; i < ids.size(); ++i) os << ids[i] << '\t' << languages[i] << '\n';
  if (!os) throw DataError("failed writing " + path.string());
}

std::vector<int> LabelsFor(const ScoreMatrix &s, const Key &key) {
  std::vector<int> labels;
  labels.reserve(s.ids.size());
  for (const auto &id : s.ids) {
    auto it = key.find(id);
    if (it == key.end()) throw DataError("no key entry for segment '" + id + "'");
    const int l = s.labels.index_of(it->second);
    if (l < 0)
      throw DataError("segment '" + id + "' has language '" + it->second +
                      "' which is not a score column");
    labels.push_back(l);
  }
  return labels;
}

void CheckAligned(const std::vector<ScoreMatrix> &systems) {
  if (systems.empty()) throw UsageError("no score matrices given");
  for (const auto &s : systems) {
    s.Validate();
    if (!(s.labels == systems[0].labels))
      throw DataError("systems '" + systems[0].system + "' and '" + s.system +
                      "' have different language columns");
    if (s.ids != systems[0].ids)
      throw DataError("systems '" + systems[0].system + "' and '" + s.system +
                      "' cover different utterances or orders");
  }
}

}  // namespace lidkit
