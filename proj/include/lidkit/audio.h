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

#ifndef LIDKIT_AUDIO_H_
#define LIDKIT_AUDIO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lidkit {

inline constexpr int kSampleRate = 8000;

// Mono waveform, samples nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate_hz = kSampleRate;

  size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// Reads a PCM WAV (8/16/24/32-bit integer or 32-bit float) or NIST SPHERE
// file (PCM in either byte order, or mu-law). The result is mono at 8 kHz;
// other rates and multi-channel input are rejected with a DataError, nothing
// is resampled or downmixed.
AudioBuffer ReadAudio(const std::filesystem::path &path);

// Writes 16-bit PCM mono WAV. Samples outside [-1, 1] are saturated.
void WriteWav(const std::filesystem::path &path, const AudioBuffer &audio);

// ITU-T G.711 mu-law expansion to a 16-bit linear value in [-32124, 32124].
int16_t MulawToLinear(uint8_t code);

// Mean of squared samples.
double Power(std::span<const double> x);
double PeakAbs(std::span<const double> x);

}  // namespace lidkit

#endif  // LIDKIT_AUDIO_H_
