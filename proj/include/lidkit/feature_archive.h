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

#ifndef LIDKIT_FEATURE_ARCHIVE_H_
#define LIDKIT_FEATURE_ARCHIVE_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lidkit/features.h"

namespace lidkit {

// Feature archive. Byte layout of <name> (little-endian):
//
//   header:  "LIDKFEAT" (8 bytes), uint32 version (= 1)
//   record:  uint32 id_len, id bytes,
//            uint32 kind_len, kind name bytes (e.g. "mfcc40"),
//            uint32 frames, uint32 dims,
//            float32[frames * dims] row-major (frame after frame)
//
// <name>.idx is a TSV with one line per record:
//   id <TAB> byte offset of the record <TAB> frames <TAB> dims
class FeatureArchiveWriter {
 public:
  explicit FeatureArchiveWriter(const std::filesystem::path &path);
  ~FeatureArchiveWriter();

  void Write(const std::string &id, const FeatureMatrix &feats);
  // Flushes both files; called by the destructor if needed.
  void Close();

 private:
  std::filesystem::path path_;
  std::ofstream data_, index_;
  bool closed_ = false;
};

class FeatureArchiveReader {
 public:
  explicit FeatureArchiveReader(const std::filesystem::path &path);

  const std::vector<std::string> &ids() const { return ids_; }
  bool contains(const std::string &id) const { return entries_.count(id) > 0; }
  FeatureMatrix Read(const std::string &id);

 private:
  struct Entry {
    uint64_t offset;
    uint32_t frames, dims;
  };
  std::filesystem::path path_;
  std::ifstream data_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, Entry> entries_;
};

}  // namespace lidkit

#endif  // LIDKIT_FEATURE_ARCHIVE_H_
