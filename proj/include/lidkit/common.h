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

#ifndef LIDKIT_COMMON_H_
#define LIDKIT_COMMON_H_

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lidkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Error taxonomy. The CLI maps these onto its exit codes:
// UsageError -> 1, DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Ordered set of language codes. Column order of every score matrix follows
// the order of the label set it was produced with.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> codes);

  // The 14 target languages of the LRE22 evaluation.
  static LabelSet Lre22();

  int size() const { return static_cast<int>(codes_.size()); }
  const std::string &code(int i) const { return codes_.at(i); }
  const std::vector<std::string> &codes() const { return codes_; }

  // -1 when the code is not part of the set.
  int index_of(std::string_view code) const;
  bool contains(std::string_view code) const { return index_of(code) >= 0; }

  bool operator==(const LabelSet &other) const = default;

 private:
  std::vector<std::string> codes_;
};

// Parses "a,b,c" into a label set.
LabelSet ParseLabelSet(std::string_view comma_separated);

std::vector<std::string> SplitString(std::string_view s, char delim);
std::string Trim(std::string_view s);

// Strict numeric parsing; throws DataError naming `what` on failure.
double ParseDouble(std::string_view s, std::string_view what);
long long ParseInt(std::string_view s, std::string_view what);

// Non-fatal diagnostics go through a process-wide handler (stderr by
// default) so that tests can capture them.
using WarningHandler = void (*)(std::string_view message);
WarningHandler SetWarningHandler(WarningHandler handler);
void Warn(std::string_view message);

// 64-bit FNV-1a, used for content addressing of cached stage outputs.
uint64_t Fnv1a64(std::string_view data, uint64_t seed = 14695981039346656037ULL);
std::string HexDigest(uint64_t value);

// Keeps large freed blocks in the heap instead of returning them to the OS;
// training allocates many short-lived matrices. No-op outside glibc.
void TuneAllocator();

}  // namespace lidkit

#endif  // LIDKIT_COMMON_H_
