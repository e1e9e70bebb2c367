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

#include "lidkit/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "lidkit/rng.h"

namespace lidkit {

std::string_view OriginName(Origin o) {
  switch (o) {
    case Origin::kOriginal: return "original";
    case Origin::kAdditive: return "additive";
    case Origin::kSignal: return "signal";
    case Origin::kEnhance: return "enhance";
  }
  return "original";
}

Origin ParseOrigin(std::string_view name) {
  if (name == "original") return Origin::kOriginal;
  if (name == "additive") return Origin::kAdditive;
  if (name == "signal") return Origin::kSignal;
  if (name == "enhance") return Origin::kEnhance;
  throw DataError("unknown origin '" + std::string(name) + "'");
}

Manifest::Manifest(LabelSet labels, std::vector<UtteranceRecord> records)
    : labels_(std::move(labels)) {
  for (auto &r : records) Add(std::move(r));
}

void Manifest::Validate(const UtteranceRecord &r) const {
  if (r.id.empty()) throw DataError("utterance with empty id");
  if (!(r.duration_s > 0.0) || !std::isfinite(r.duration_s))
    throw DataError("utterance " + r.id + ": duration must be positive");
  if (!labels_.contains(r.language))
    throw DataError("utterance " + r.id + ": unknown language code '" +
                    r.language + "'");
}

void Manifest::Add(UtteranceRecord record) {
  Validate(record);
  if (!index_.emplace(record.id, records_.size()).second)
    throw DataError("duplicate id '" + record.id + "'");
  records_.push_back(std::move(record));
}

std::optional<size_t> Manifest::Find(const std::string &id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Manifest::LabelIndices() const {
  std::vector<int> out;
  out.reserve(records_.size());
  for (const auto &r : records_) out.push_back(labels_.index_of(r.language));
  return out;
}

Manifest LoadManifest(const std::filesystem::path &path, const LabelSet &labels) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  Manifest m(labels);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.rfind("id\t", 0) == 0) continue;
    auto cols = SplitString(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cols.size() != 5 && cols.size() != 6)
      throw DataError(where + ": expected 5 or 6 tab-separated columns, got " +
                      std::to_string(cols.size()));
    UtteranceRecord r;
    r.id = cols[0];
    r.path = cols[1];
    if (r.path.is_relative() && !base.empty()) r.path = base / r.path;
    r.language = cols[2];
    r.session = cols[3];
    try {
      r.duration_s = ParseDouble(cols[4], "duration_s");
      if (cols.size() == 6) r.origin = ParseOrigin(cols[5]);
      m.Add(std::move(r));
    } catch (const DataError &e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return m;
}

void SaveManifest(const std::filesystem::path &path, const Manifest &manifest) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write manifest " + path.string());
  os.precision(17);
  for (const auto &r : manifest.records()) {
    os << r.id << '\t' << r.path.string() << '\t' << r.language << '\t'
       << r.session << '\t' << r.duration_s;
    if (r.origin != Origin::kOriginal) os << '\t' << OriginName(r.origin);
    os << '\n';
  }
  if (!os) throw DataError("write failed for " + path.string());
}

SplitResult SplitSessions(const Manifest &manifest, const SplitSpec &spec) {
  if (spec.train_sessions_per_lang <= 0 || spec.val_sessions_per_lang <= 0)
    throw UsageError("session counts must be positive");
  const LabelSet &labels = manifest.labels();
  const int need = spec.train_sessions_per_lang + spec.val_sessions_per_lang;

  // Sessions are keyed per language; the same session name under two
  // languages is two different sessions.
  std::vector<std::vector<std::string>> sessions(labels.size());
  for (const auto &r : manifest.records()) {
    auto &v = sessions[labels.index_of(r.language)];
    if (std::find(v.begin(), v.end(), r.session) == v.end())
      v.push_back(r.session);
  }
  std::vector<std::string> short_langs;
  for (int l = 0; l < labels.size(); ++l)
    if (static_cast<int>(sessions[l].size()) < need)
      short_langs.push_back(labels.code(l) + " (" +
                            std::to_string(sessions[l].size()) + ")");
  if (!short_langs.empty()) {
    std::string msg = "insufficient sessions (need " + std::to_string(need) +
                      ") for:";
    for (auto &s : short_langs) msg += " " + s;
    throw DataError(msg);
  }

  std::vector<std::set<std::string>> train_sessions(labels.size());
  std::vector<std::set<std::string>> val_sessions(labels.size());
  for (int l = 0; l < labels.size(); ++l) {
    auto v = sessions[l];
    std::sort(v.begin(), v.end());
    Rng rng = Rng::Derive(spec.seed, "split/" + labels.code(l));
    rng.Shuffle(v.begin(), v.end());
    for (int i = 0; i < spec.train_sessions_per_lang; ++i)
      train_sessions[l].insert(v[i]);
    for (int i = spec.train_sessions_per_lang; i < need; ++i)
      val_sessions[l].insert(v[i]);
  }

  SplitResult out{Manifest(labels), Manifest(labels)};
  for (const auto &r : manifest.records()) {
    int l = labels.index_of(r.language);
    if (train_sessions[l].count(r.session))
      out.train.Add(r);
    else if (val_sessions[l].count(r.session))
      out.val.Add(r);
  }
  return out;
}

namespace {

// Splits `total` over strata with the given capacities so that counts differ
// by at most one among strata that are not at capacity. Ties for the extra
// unit are broken by `order`.
std::vector<int> EvenAllocation(const std::vector<int> &capacity, int total,
                                 const std::vector<size_t> &order) {
  std::vector<int> count(capacity.size(), 0);
  int remaining = total;
  while (remaining > 0) {
    std::vector<size_t> open;
    for (size_t i : order)
      if (count[i] < capacity[i]) open.push_back(i);
    if (open.empty()) break;
    int share = remaining / static_cast<int>(open.size());
    if (share == 0) {
      for (size_t k = 0; k < open.size() && remaining > 0; ++k) {
        ++count[open[k]];
        --remaining;
      }
      break;
    }
    for (size_t i : open) {
      int add = std::min(share, capacity[i] - count[i]);
      count[i] += add;
      remaining -= add;
    }
  }
  return count;
}

}  // namespace

Manifest PoolAugmented(const Manifest &train,
                       const std::vector<Manifest> &augmented,
                       int target_count, uint64_t seed) {
  if (target_count < 0) throw UsageError("target_count must be non-negative");
  const LabelSet &labels = train.labels();
  const int n_cat = static_cast<int>(augmented.size());
  const int n_lang = labels.size();

  // strata[c][l] lists record indices of category c, language l.
  std::vector<std::vector<std::vector<size_t>>> strata(
      n_cat, std::vector<std::vector<size_t>>(n_lang));
  int supply = 0;
  for (int c = 0; c < n_cat; ++c) {
    if (!(augmented[c].labels() == labels))
      throw DataError("augmented manifest uses a different label set");
    for (size_t i = 0; i < augmented[c].size(); ++i)
      strata[c][labels.index_of(augmented[c][i].language)].push_back(i);
    supply += static_cast<int>(augmented[c].size());
  }
  if (target_count > supply)
    throw DataError("target_count " + std::to_string(target_count) +
                    " exceeds augmented supply " + std::to_string(supply));

  Rng rng = Rng::Derive(seed, "pool");
  std::vector<size_t> cat_order(n_cat);
  std::iota(cat_order.begin(), cat_order.end(), 0);
  rng.Shuffle(cat_order.begin(), cat_order.end());
  std::vector<int> cat_cap(n_cat);
  for (int c = 0; c < n_cat; ++c) cat_cap[c] = static_cast<int>(augmented[c].size());
  auto cat_count = EvenAllocation(cat_cap, target_count, cat_order);

  Manifest pooled = train;
  for (int c = 0; c < n_cat; ++c) {
    std::vector<size_t> lang_order(n_lang);
    std::iota(lang_order.begin(), lang_order.end(), 0);
    rng.Shuffle(lang_order.begin(), lang_order.end());
    std::vector<int> cap(n_lang);
    for (int l = 0; l < n_lang; ++l) cap[l] = static_cast<int>(strata[c][l].size());
    auto counts = EvenAllocation(cap, cat_count[c], lang_order);
    for (int l = 0; l < n_lang; ++l) {
      auto idx = strata[c][l];
      rng.Shuffle(idx.begin(), idx.end());
      idx.resize(counts[l]);
      std::sort(idx.begin(), idx.end());
      for (size_t i : idx) pooled.Add(augmented[c][i]);
    }
  }
  return pooled;
}

}  // namespace lidkit
