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

#include "lidkit/audio.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

#include "lidkit/common.h"

namespace lidkit {

namespace {

std::vector<uint8_t> ReadAll(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open audio file " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(is), {});
}

uint32_t Le32(const uint8_t *p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}
uint16_t Le16(const uint8_t *p) { return uint16_t(p[0] | p[1] << 8); }

void CheckRateAndChannels(int rate, int channels, const std::string &where) {
  if (channels != 1)
    throw DataError(where + ": multi-channel audio is not supported (" +
                    std::to_string(channels) + " channels)");
  if (rate != kSampleRate)
    throw DataError(where + ": unsupported sample rate " +
                    std::to_string(rate) + " (expected 8000)");
}

// Decodes little-endian integer PCM of the given width.
double DecodePcm(const uint8_t *p, int bytes, bool big_endian) {
  uint8_t b[4] = {0, 0, 0, 0};
  for (int i = 0; i < bytes; ++i) b[i] = big_endian ? p[bytes - 1 - i] : p[i];
  switch (bytes) {
    case 1:
      return (static_cast<int>(b[0]) - 128) / 128.0;
    case 2:
      return static_cast<int16_t>(b[0] | b[1] << 8) / 32768.0;
    case 3: {
      int32_t v = b[0] | b[1] << 8 | b[2] << 16;
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 4:
      return static_cast<int32_t>(Le32(b)) / 2147483648.0;
  }
  return 0.0;
}

AudioBuffer ReadWav(const std::vector<uint8_t> &bytes, const std::string &name) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError(name + ": not a RIFF/WAVE file");
  size_t pos = 12;
  int format = -1, channels = 0, rate = 0, bits = 0;
  const uint8_t *data = nullptr;
  size_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const uint8_t *chunk = bytes.data() + pos;
    uint32_t len = Le32(chunk + 4);
    size_t body = pos + 8;
    size_t avail = std::min<size_t>(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw DataError(name + ": truncated fmt chunk");
      format = Le16(chunk + 8);
      channels = Le16(chunk + 10);
      rate = static_cast<int>(Le32(chunk + 12));
      bits = Le16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = Le16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (format < 0) throw DataError(name + ": missing fmt chunk");
  if (data == nullptr) throw DataError(name + ": missing data chunk");
  CheckRateAndChannels(rate, channels, name);

  AudioBuffer out;
  out.sample_rate_hz = rate;
  if (format == 1) {
    if (bits != 8 && bits != 16 && bits != 24 && bits != 32)
      throw DataError(name + ": unsupported PCM width " + std::to_string(bits));
    int w = bits / 8;
    size_t n = data_len / w;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i)
      out.samples[i] = DecodePcm(data + i * w, w, false);
  } else if (format == 3 && bits == 32) {
    size_t n = data_len / 4;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      float f;
      uint32_t u = Le32(data + 4 * i);
      std::memcpy(&f, &u, 4);
      out.samples[i] = std::clamp<double>(f, -1.0, 1.0);
    }
  } else if (format == 7 && bits == 8) {
    out.samples.resize(data_len);
    for (size_t i = 0; i < data_len; ++i)
      out.samples[i] = MulawToLinear(data[i]) / 32768.0;
  } else {
    throw DataError(name + ": unsupported WAV encoding (format " +
                    std::to_string(format) + ")");
  }
  if (out.samples.empty()) throw DataError(name + ": no audio samples");
  return out;
}

AudioBuffer ReadSphere(const std::vector<uint8_t> &bytes,
                       const std::string &name) {
  // "NIST_1A\n   1024\n" followed by "key -type value" lines up to end_head.
  if (bytes.size() < 16) throw DataError(name + ": truncated SPHERE header");
  std::string head(bytes.begin(), bytes.begin() + 16);
  std::istringstream hs(head);
  std::string magic;
  size_t header_size = 0;
  hs >> magic >> header_size;
  if (magic != "NIST_1A" || header_size < 16 || header_size > bytes.size())
    throw DataError(name + ": bad SPHERE header");

  std::map<std::string, std::string> fields;
  std::istringstream ls(
      std::string(bytes.begin() + 16, bytes.begin() + header_size));
  std::string line;
  bool ended = false;
  while (std::getline(ls, line)) {
    std::istringstream fs(line);
    std::string key, type, value;
    fs >> key;
    if (key == "end_head") {
      ended = true;
      break;
    }
    if (key.empty()) continue;
    fs >> type;
    std::getline(fs, value);
    fields[key] = Trim(value);
  }
  if (!ended) throw DataError(name + ": SPHERE header lacks end_head");

  auto get_int = [&](const std::string &key, long long dflt) {
    auto it = fields.find(key);
    return it == fields.end() ? dflt : ParseInt(it->second, key);
  };
  int channels = static_cast<int>(get_int("channel_count", 1));
  int rate = static_cast<int>(get_int("sample_rate", -1));
  CheckRateAndChannels(rate, channels, name);

  std::string coding = fields.count("sample_coding") ? fields["sample_coding"]
                                                     : std::string("pcm");
  int width = static_cast<int>(get_int("sample_n_bytes", coding == "ulaw" ? 1 : 2));
  const uint8_t *data = bytes.data() + header_size;
  size_t avail = bytes.size() - header_size;
  long long count = get_int("sample_count", static_cast<long long>(avail / width));
  if (count < 1 || static_cast<size_t>(count) * width > avail)
    throw DataError(name + ": SPHERE sample_count exceeds payload");

  AudioBuffer out;
  out.sample_rate_hz = rate;
  out.samples.resize(count);
  if (coding == "ulaw" || coding == "mu-law") {
    if (width != 1) throw DataError(name + ": mu-law samples must be 1 byte");
    for (long long i = 0; i < count; ++i)
      out.samples[i] = MulawToLinear(data[i]) / 32768.0;
  } else if (coding == "pcm") {
    std::string order = fields.count("sample_byte_format")
                            ? fields["sample_byte_format"]
                            : std::string("01");
    bool big = order == "10";
    if (width < 1 || width > 4)
      throw DataError(name + ": unsupported SPHERE sample width");
    for (long long i = 0; i < count; ++i) {
      double v = DecodePcm(data + i * width, width, big);
      // SPHERE 8-bit PCM is signed, unlike WAV.
      if (width == 1) v = static_cast<int8_t>(data[i]) / 128.0;
      out.samples[i] = v;
    }
  } else {
    throw DataError(name + ": unsupported SPHERE sample_coding '" + coding + "'");
  }
  return out;
}

}  // namespace

int16_t MulawToLinear(uint8_t code) {
  constexpr int kBias = 0x84;
  int u = ~code & 0xFF;
  int t = ((u & 0x0F) << 3) + kBias;
  t <<= (u & 0x70) >> 4;
  return static_cast<int16_t>((u & 0x80) ? (kBias - t) : (t - kBias));
}

AudioBuffer ReadAudio(const std::filesystem::path &path) {
  std::vector<uint8_t> bytes = ReadAll(path);
  const std::string name = path.string();
  if (bytes.size() >= 7 && std::memcmp(bytes.data(), "NIST_1A", 7) == 0)
    return ReadSphere(bytes, name);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "RIFF", 4) == 0)
    return ReadWav(bytes, name);
  throw DataError(name + ": unrecognized audio format (expected WAV or SPHERE)");
}

void WriteWav(const std::filesystem::path &path, const AudioBuffer &audio) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  auto put32 = [&](uint32_t v) {
    char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
    os.write(b, 4);
  };
  auto put16 = [&](uint16_t v) {
    char b[2] = {char(v), char(v >> 8)};
    os.write(b, 2);
  };
  uint32_t data_bytes = static_cast<uint32_t>(audio.samples.size() * 2);
  os.write("RIFF", 4);
  put32(36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<uint32_t>(audio.sample_rate_hz));
  put32(static_cast<uint32_t>(audio.sample_rate_hz * 2));
  put16(2);
  put16(16);
  os.write("data", 4);
  put32(data_bytes);
  std::vector<char> buf(data_bytes);
  for (size_t i = 0; i < audio.samples.size(); ++i) {
    double s = std::clamp(audio.samples[i], -1.0, 32767.0 / 32768.0);
    auto v = static_cast<int16_t>(std::lround(s * 32768.0));
    buf[2 * i] = char(v & 0xFF);
    buf[2 * i + 1] = char((v >> 8) & 0xFF);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("write failed for " + path.string());
}

double Power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

double PeakAbs(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

}  // namespace lidkit
