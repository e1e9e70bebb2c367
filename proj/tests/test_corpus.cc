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

#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <string>

#include "lidkit/corpus.h"
#include "test_util.h"

namespace lidkit {
namespace {

UtteranceRecord Rec(const std::string &id, const std::string &lang, const std::string &session,
                    Origin origin = Origin::kOriginal) {
  return {id, "/data/" + id + ".sph", lang, session, 3.0, origin};
}

// languages x sessions x utterances, ids "<lang>-s<session>-u<utt>".
Manifest Grid(const LabelSet &labels, int sessions, int utts,
              const std::string &prefix = "", Origin origin = Origin::kOriginal) {
  Manifest m(labels);
  for (const auto &lang : labels.codes())
    for (int s = 0; s < sessions; ++s)
      for (int u = 0; u < utts; ++u)
        m.Add(Rec(prefix + lang + "-s" + std::to_string(s) + "-u" + std::to_string(u), lang,
                  "s" + std::to_string(s), origin));
  return m;
}

std::map<std::string, std::set<std::string>> SessionsByLanguage(const Manifest &m) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto &r : m.records()) out[r.language].insert(r.session);
  return out;
}

TEST_SUITE("corpus") {

TEST_CASE("manifest loads a well-formed file") {
  test::TempDir dir;
  std::ofstream(dir.path() / "m.tsv") << "id\tpath\tlanguage\tsession\tduration_s\n"
                                      << "a1\twav/a1.wav\teng\tS1\t3.5\n"
                                      << "b1\t/abs/b1.sph\tfra\tS2\t10\tsignal\n";
  auto m = LoadManifest(dir.path() / "m.tsv", LabelSet({"eng", "fra"}));
  REQUIRE(m.size() == 2);
  CHECK(m[0].path == dir.path() / "wav/a1.wav");
  CHECK(m[0].duration_s == 3.5);
  CHECK(m[0].origin == Origin::kOriginal);
  CHECK(m[1].path == "/abs/b1.sph");
  CHECK(m[1].origin == Origin::kSignal);
  CHECK(m.LabelIndices() == std::vector<int>{0, 1});
}

TEST_CASE("manifest errors name the offending row") {
  test::TempDir dir;
  LabelSet labels({"eng"});
  auto load = [&](const std::string &body) {
    std::ofstream(dir.path() / "m.tsv") << body;
    return LoadManifest(dir.path() / "m.tsv", labels);
  };
  CHECK_THROWS_WITH_AS(load("a\tp\teng\tS\t1\nb\tp\teng\tS\t-3\n"), doctest::Contains("m.tsv:2"),
                       DataError);
  CHECK_THROWS_WITH_AS(load("a\tp\teng\tS\t1\na\tq\teng\tT\t2\n"),
                       doctest::Contains("duplicate id"), DataError);
  CHECK_THROWS_AS(load("a\tp\teng\tS\n"), DataError);
  CHECK_THROWS_AS(load("a\tp\tdeu\tS\t1\n"), DataError);
  CHECK_THROWS_AS(load("a\tp\teng\tS\tlong\n"), DataError);
  CHECK_THROWS_AS(LoadManifest(dir.path() / "none.tsv", labels), DataError);
}

TEST_CASE("manifest save and load round trip") {
  test::TempDir dir;
  LabelSet labels({"x", "y"});
  Manifest m(labels);
  m.Add(Rec("u1", "x", "s1"));
  m.Add(Rec("u2", "y", "s2", Origin::kEnhance));
  m.Add({"u3", "/p/u3.wav", "x", "s3", 1.0 / 3.0, Origin::kAdditive});
  SaveManifest(dir.path() / "m.tsv", m);
  auto back = LoadManifest(dir.path() / "m.tsv", labels);
  CHECK(back.records() == m.records());
}

TEST_CASE("split gives 250 train and 50 validation utterances per language") {
  LabelSet labels = LabelSet::Lre22();
  Manifest m = Grid(labels, 30, 10);
  auto s = SplitSessions(m, {25, 5, 7});
  std::map<std::string, int> ntrain, nval;
  for (const auto &r : s.train.records()) ++ntrain[r.language];
  for (const auto &r : s.val.records()) ++nval[r.language];
  for (const auto &lang : labels.codes()) {
    CHECK(ntrain[lang] == 250);
    CHECK(nval[lang] == 50);
  }
  CHECK(s.train.size() + s.val.size() == m.size());
}

TEST_CASE("split is deterministic, disjoint and exhaustive for every seed") {
  LabelSet labels({"a", "b", "c"});
  Manifest m = Grid(labels, 12, 3);
  for (uint64_t seed = 0; seed < 30; ++seed) {
    auto x = SplitSessions(m, {7, 3, seed}), y = SplitSessions(m, {7, 3, seed});
    CHECK(x.train.records() == y.train.records());
    CHECK(x.val.records() == y.val.records());
    auto tr = SessionsByLanguage(x.train), va = SessionsByLanguage(x.val);
    for (const auto &lang : labels.codes()) {
      CHECK(tr[lang].size() == 7);
      CHECK(va[lang].size() == 3);
      for (const auto &s : va[lang]) CHECK(tr[lang].count(s) == 0);
    }
    std::set<std::string> ids;
    for (const auto *part : {&x.train, &x.val})
      for (const auto &r : part->records()) CHECK(ids.insert(r.id).second);
    for (const auto &r : m.records()) {
      bool selected = tr[r.language].count(r.session) || va[r.language].count(r.session);
      CHECK(ids.count(r.id) == (selected ? 1u : 0u));
    }
  }
  auto a = SplitSessions(m, {7, 3, 1}), b = SplitSessions(m, {7, 3, 2});
  CHECK_FALSE(SessionsByLanguage(a.val) == SessionsByLanguage(b.val));
}

TEST_CASE("split reports languages with too few sessions") {
  LabelSet labels({"aa", "bb"});
  Manifest m(labels);
  for (int s = 0; s < 30; ++s) m.Add(Rec("a" + std::to_string(s), "aa", std::to_string(s)));
  for (int s = 0; s < 20; ++s) m.Add(Rec("b" + std::to_string(s), "bb", std::to_string(s)));
  CHECK_THROWS_WITH_AS(SplitSessions(m, {}), doctest::Contains("bb (20)"), DataError);
  CHECK_THROWS_AS(SplitSessions(m, {0, 5, 0}), UsageError);
}

TEST_CASE("pooling 7000 of 3x3500 augmented utterances") {
  LabelSet labels = LabelSet::Lre22();
  Manifest train = Grid(labels, 25, 10);
  REQUIRE(train.size() == 3500);
  std::vector<Manifest> aug = {Grid(labels, 25, 10, "add-", Origin::kAdditive),
                               Grid(labels, 25, 10, "sig-", Origin::kSignal),
                               Grid(labels, 25, 10, "enh-", Origin::kEnhance)};
  auto pooled = PoolAugmented(train, aug, 7000, 3);
  CHECK(pooled.size() == 10500);
  std::map<Origin, std::map<std::string, int>> counts;
  std::map<Origin, int> per_cat;
  for (const auto &r : pooled.records()) {
    ++counts[r.origin][r.language];
    ++per_cat[r.origin];
  }
  CHECK(per_cat[Origin::kOriginal] == 3500);
  for (Origin o : {Origin::kAdditive, Origin::kSignal, Origin::kEnhance}) {
    CHECK(std::abs(per_cat[o] - 7000.0 / 3.0) <= 1.0);
    for (const auto &lang : labels.codes())
      CHECK(std::abs(counts[o][lang] - per_cat[o] / 14.0) <= 1.0);
  }
  CHECK(PoolAugmented(train, aug, 7000, 3).records() == pooled.records());
}

TEST_CASE("pooling edge cases") {
  LabelSet labels({"a", "b"});
  Manifest train = Grid(labels, 2, 2);
  std::vector<Manifest> aug = {Grid(labels, 2, 2, "x-", Origin::kSignal)};
  CHECK(PoolAugmented(train, aug, 0, 1).records() == train.records());
  CHECK(PoolAugmented(train, aug, 8, 1).size() == 16);
  CHECK_THROWS_AS(PoolAugmented(train, aug, 9, 1), DataError);
  CHECK_THROWS_AS(PoolAugmented(train, aug, -1, 1), UsageError);
}

TEST_CASE("pooling redistributes around a short category") {
  LabelSet labels({"a", "b"});
  Manifest train = Grid(labels, 2, 5);
  std::vector<Manifest> aug = {Grid(labels, 1, 1, "x-", Origin::kAdditive),
                               Grid(labels, 2, 5, "y-", Origin::kSignal)};
  auto pooled = PoolAugmented(train, aug, 12, 4);
  int x = 0, y = 0;
  for (const auto &r : pooled.records()) {
    x += r.origin == Origin::kAdditive;
    y += r.origin == Origin::kSignal;
  }
  CHECK(x == 2);
  CHECK(y == 10);
}

TEST_CASE("manifest validation") {
  Manifest m(LabelSet({"a"}));
  m.Add(Rec("u", "a", "s"));
  CHECK_THROWS_AS(m.Add(Rec("u", "a", "s")), DataError);
  CHECK_THROWS_AS(m.Add(Rec("v", "b", "s")), DataError);
  auto bad = Rec("w", "a", "s");
  bad.duration_s = 0.0;
  CHECK_THROWS_AS(m.Add(bad), DataError);
  CHECK(m.Find("u") == std::optional<size_t>(0));
  CHECK_FALSE(m.Find("v").has_value());
  for (Origin o : {Origin::kOriginal, Origin::kAdditive, Origin::kSignal, Origin::kEnhance})
    CHECK(ParseOrigin(OriginName(o)) == o);
}

}  // TEST_SUITE

}  // namespace
}  // namespace lidkit
