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

#include <set>
#include <string>

#include "lidkit/common.h"
#include "lidkit/rng.h"

namespace lidkit {
namespace {

std::vector<std::string> g_messages;
void Capture(std::string_view m) { g_messages.emplace_back(m); }

TEST_SUITE("common") {

TEST_CASE("label sets") {
  LabelSet lre = LabelSet::Lre22();
  CHECK(lre.size() == 14);
  CHECK(lre.index_of("afr-afr") == 0);
  CHECK(lre.index_of("zul-zul") == 13);
  CHECK(lre.index_of("deu-deu") == -1);
  CHECK(lre.contains("tir-tir"));
  LabelSet p = ParseLabelSet(" a, b ,c,");
  CHECK(p.codes() == std::vector<std::string>{"a", "b", "c"});
  CHECK_THROWS_AS(ParseLabelSet("a,b,a"), UsageError);
  CHECK_THROWS_AS(ParseLabelSet(" , "), UsageError);
  CHECK_THROWS_AS(LabelSet({"x", ""}), UsageError);
}

TEST_CASE("string helpers") {
  CHECK(SplitString("a\t\tb", '\t') == std::vector<std::string>{"a", "", "b"});
  CHECK(SplitString("", ',') == std::vector<std::string>{""});
  CHECK(Trim("  x y \t\n") == "x y");
  CHECK(Trim("   ").empty());
}

TEST_CASE("strict numeric parsing") {
  CHECK(ParseDouble(" 2.5 ", "x") == 2.5);
  CHECK(ParseDouble("-3e-2", "x") == -0.03);
  CHECK(ParseInt("42", "n") == 42);
  CHECK(ParseInt("-7", "n") == -7);
  for (const char *bad : {"", "1.5x", "abc", "1,5", "--1"})
    CHECK_THROWS_AS(ParseDouble(bad, "x"), DataError);
  for (const char *bad : {"", "1.5", "12a", "99999999999999999999"})
    CHECK_THROWS_AS(ParseInt(bad, "n"), DataError);
  CHECK_THROWS_WITH_AS(ParseDouble("zz", "duration_s"), doctest::Contains("duration_s"),
                       DataError);
}

TEST_CASE("warning handler can be replaced and restored") {
  g_messages.clear();
  auto old = SetWarningHandler(Capture);
  Warn("first");
  Warn("second");
  auto mine = SetWarningHandler(old);
  CHECK(mine == &Capture);
  CHECK(g_messages == std::vector<std::string>{"first", "second"});
}

TEST_CASE("FNV-1a reference values") {
  CHECK(Fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(Fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(Fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(HexDigest(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");
  CHECK(HexDigest(1) == "0000000000000001");
}

TEST_CASE("random streams") {
  Rng a(5), b(5), c(6);
  for (int i = 0; i < 10; ++i) CHECK(a.NextU64() == b.NextU64());
  CHECK(Rng(5).NextU64() != c.NextU64());
  CHECK(Rng::Derive(5, "x").NextU64() == Rng::Derive(5, "x").NextU64());
  CHECK(Rng::Derive(5, "x").NextU64() != Rng::Derive(5, "y").NextU64());
  Rng r(7);
  std::set<uint64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    double u = r.Uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    double v = r.Uniform(-2.0, 3.0);
    REQUIRE(v >= -2.0);
    REQUIRE(v <= 3.0);
    uint64_t k = r.Index(7);
    REQUIRE(k < 7);
    seen.insert(k);
  }
  CHECK(seen.size() == 7);
  std::vector<int> v = {1, 2, 3, 4, 5, 6};
  r.Shuffle(v.begin(), v.end());
  CHECK(std::multiset<int>(v.begin(), v.end()) == std::multiset<int>{1, 2, 3, 4, 5, 6});
}

}  // TEST_SUITE

}  // namespace
}  // namespace lidkit
