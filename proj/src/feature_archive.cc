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

#include "lidkit/feature_archive.h"

#include "lidkit/binary_io.h"

namespace lidkit {

namespace {
constexpr char kMagic[9] = "LIDKFEAT";
constexpr uint32_t kVersion = 1;

std::filesystem::path IndexPath(const std::filesystem::path &p) {
  return std::filesystem::path(p.string() + ".idx");
}
}  // namespace

FeatureArchiveWriter::FeatureArchiveWriter(const std::filesystem::path &path)
    : path_(path),
      data_(path, std::ios::binary | std::ios::trunc),
      index_(IndexPath(path), std::ios::trunc) {
  if (!data_ || !index_) throw DataError("cannot create feature archive " + path.string());
  data_.write(kMagic, 8);
  io::WritePod(data_, kVersion);
}

FeatureArchiveWriter::~FeatureArchiveWriter() {
  if (!closed_) {
    try {
      Close();
    } catch (...) {
    }
  }
}

void FeatureArchiveWriter::Write(const std::string &id, const FeatureMatrix &feats) {
  if (closed_) throw UsageError("feature archive already closed");
  if (id.empty() || id.find_first_of("\t\n") != std::string::npos)
    throw DataError("invalid utterance id for feature archive");
  feats.Validate();
  const uint64_t offset = static_cast<uint64_t>(data_.tellp());
  io::WriteString(data_, id);
  io::WriteString(data_, std::string(FeatureKindName(feats.kind)));
  io::WritePod<uint32_t>(data_, static_cast<uint32_t>(feats.frames()));
  io::WritePod<uint32_t>(data_, static_cast<uint32_t>(feats.dims()));
  std::vector<float> buf(static_cast<size_t>(feats.data.size()));
  for (Eigen::Index t = 0, k = 0; t < feats.data.rows(); ++t)
    for (Eigen::Index d = 0; d < feats.data.cols(); ++d) buf[k++] = static_cast<float>(feats.data(t, d));
  io::WriteArray(data_, buf.data(), buf.size());
  index_ << id << '\t' << offset << '\t' << feats.frames() << '\t' << feats.dims() << '\n';
  if (!data_ || !index_) throw DataError("failed writing feature archive " + path_.string());
}

void FeatureArchiveWriter::Close() {
  if (closed_) return;
  closed_ = true;
  data_.close();
  index_.close();
  if (data_.fail() || index_.fail())
    throw DataError("failed closing feature archive " + path_.string());
}

FeatureArchiveReader::FeatureArchiveReader(const std::filesystem::path &path)
    : path_(path), data_(path, std::ios::binary) {
  if (!data_) throw DataError("cannot open feature archive " + path.string());
  io::ExpectMagic(data_, kMagic, path.string());
  if (io::ReadPod<uint32_t>(data_) != kVersion)
    throw DataError(path.string() + ": unsupported feature archive version");
  std::ifstream idx(IndexPath(path));
  if (!idx) throw DataError("missing index for feature archive " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(idx, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = SplitString(line, '\t');
    const std::string where = IndexPath(path).string() + ":" + std::to_string(lineno);
    if (f.size() != 4) throw DataError(where + ": expected 4 columns");
    Entry e{static_cast<uint64_t>(ParseInt(f[1], where)), static_cast<uint32_t>(ParseInt(f[2], where)),
            static_cast<uint32_t>(ParseInt(f[3], where))};
    if (!entries_.emplace(f[0], e).second) throw DataError(where + ": duplicate id " + f[0]);
    ids_.push_back(f[0]);
  }
}

FeatureMatrix FeatureArchiveReader::Read(const std::string &id) {
  auto it = entries_.find(id);
  if (it == entries_.end())
    throw DataError("utterance '" + id + "' not in feature archive " + path_.string());
  data_.clear();
  data_.seekg(static_cast<std::streamoff>(it->second.offset));
  const std::string got = io::ReadString(data_);
  if (got != id) throw DataError(path_.string() + ": index does not match record for " + id);
  FeatureMatrix fm;
  fm.kind = ParseFeatureKind(io::ReadString(data_));
  const auto frames = io::ReadPod<uint32_t>(data_);
  const auto dims = io::ReadPod<uint32_t>(data_);
  if (frames != it->second.frames || dims != it->second.dims)
    throw DataError(path_.string() + ": index shape does not match record for " + id);
  std::vector<float> buf(static_cast<size_t>(frames) * dims);
  io::ReadArray(data_, buf.data(), buf.size());
  fm.data.resize(frames, dims);
  for (uint32_t t = 0, k = 0; t < frames; ++t)
    for (uint32_t d = 0; d < dims; ++d) fm.data(t, d) = buf[k++];
  return fm;
}

}  // namespace lidkit
