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

#include "lidkit/common.h"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <set>

namespace lidkit {

LabelSet::LabelSet(std::vector<std::string> codes) : codes_(std::move(codes)) {
  if (codes_.empty()) throw UsageError("label set is empty");
  std::set<std::string> seen;
  for (const auto &c : codes_) {
    if (c.empty()) throw UsageError("empty language code in label set");
    if (!seen.insert(c).second)
      throw UsageError("duplicate language code in label set: " + c);
  }
}

LabelSet LabelSet::Lre22() {
  return LabelSet({"afr-afr", "ara-aeb", "ara-arq", "ara-ayl", "eng-ens",
                   "eng-iaf", "fra-ntf", "nbl-nbl", "orm-orm", "tir-tir",
                   "tso-tso", "ven-ven", "xho-xho", "zul-zul"});
}

int LabelSet::index_of(std::string_view code) const {
  for (size_t i = 0; i < codes_.size(); ++i)
    if (codes_[i] == code) return static_cast<int>(i);
  return -1;
}

LabelSet ParseLabelSet(std::string_view comma_separated) {
  std::vector<std::string> codes;
  for (auto &c : SplitString(comma_separated, ',')) {
    std::string t = Trim(c);
    if (!t.empty()) codes.push_back(t);
  }
  return LabelSet(std::move(codes));
}

std::vector<std::string> SplitString(std::string_view s, char delim) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string Trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double ParseDouble(std::string_view s, std::string_view what) {
  std::string t = Trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw DataError("bad number '" + t + "' for " + std::string(what));
  return v;
}

long long ParseInt(std::string_view s, std::string_view what) {
  std::string t = Trim(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw DataError("bad integer '" + t + "' for " + std::string(what));
  return v;
}

namespace {

void StderrWarning(std::string_view message) {
  std::fprintf(stderr, "WARNING: %.*s\n", static_cast<int>(message.size()),
               message.data());
}

std::atomic<WarningHandler> g_warning_handler{&StderrWarning};

}  // namespace

WarningHandler SetWarningHandler(WarningHandler handler) {
  return g_warning_handler.exchange(handler ? handler : &StderrWarning);
}

void Warn(std::string_view message) { g_warning_handler.load()(message); }

uint64_t Fnv1a64(std::string_view data, uint64_t seed) {
  uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string HexDigest(uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

void TuneAllocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace lidkit
