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

#ifndef LIDKIT_AUGMENT_H_
#define LIDKIT_AUGMENT_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lidkit/audio.h"
#include "lidkit/corpus.h"
#include "lidkit/rng.h"

namespace lidkit::augment {

enum class NoiseKind { kNoise, kBabble, kMusic, kRir };

struct AdditiveSpec {
  NoiseKind kind = NoiseKind::kNoise;
  double snr_db = 10.0;  // ignored for kRir
  std::filesystem::path source_path;
};

struct SignalPerturbSpec {
  double gain_db = 0.0;          // [-30, +40]
  double pitch_semitones = 0.0;  // [-4, +4]
  double speed_gamma = 0.0;      // percent, [-15, +15]

  static constexpr double kGainMin = -30.0, kGainMax = 40.0;
  static constexpr double kPitchMax = 4.0;
  static constexpr double kSpeedMax = 15.0;

  static SignalPerturbSpec Sample(Rng &rng);
  void Validate() const;
};

enum class EnhanceAlgorithm { kSpectralSubtraction, kLogMmse, kDereverb };

struct EnhanceSpec {
  EnhanceAlgorithm algorithm = EnhanceAlgorithm::kSpectralSubtraction;
};

struct MixResult {
  AudioBuffer audio;
  double noise_gain = 1.0;    // g applied to the (looped) noise
  double output_scale = 1.0;  // < 1 when the mixture was rescaled to avoid clipping
};

// speech + g * noise, where noise is first looped or truncated to the speech
// length and g = sqrt(P_speech / (P_noise * 10^(snr/10))) uses the power of
// that fitted noise.
MixResult MixAdditive(const AudioBuffer &speech, const AudioBuffer &noise,
                      double snr_db);

// Full convolution truncated to the speech length, rescaled to the input power.
AudioBuffer ConvolveRir(const AudioBuffer &speech, const AudioBuffer &rir);

struct VolumeResult {
  AudioBuffer audio;
  bool clipped = false;
};

VolumeResult PerturbVolume(const AudioBuffer &speech, double gain_db);

// Phase-vocoder time stretch followed by resampling; output length equals
// input length. |semitones| <= 4 unless `allow_any_shift`.
AudioBuffer PerturbPitch(const AudioBuffer &speech, double semitones,
                         bool allow_any_shift = false);

// Playback-speed change by resampling. Output has round(N / (1 + gamma/100))
// samples.
AudioBuffer PerturbSpeed(const AudioBuffer &speech, double gamma_percent);

// Phase vocoder: stretches duration by `factor` (> 1 lengthens).
std::vector<double> TimeStretch(std::span<const double> x, double factor);

AudioBuffer Enhance(const AudioBuffer &speech, const EnhanceSpec &spec);

// Lower bound on input length for Enhance.
inline constexpr int kEnhanceFrame = 256;

// ---------------------------------------------------------------------------
// Category drivers used by the `augment` command.

enum class Category { kAdditive, kSignal, kEnhance };

std::string_view CategoryName(Category c);
Category ParseCategory(std::string_view name);
Origin CategoryOrigin(Category c);

struct SnrRange {
  double lo = 0.0, hi = 15.0;
};

struct AdditiveSources {
  std::vector<std::filesystem::path> noise;
  std::vector<std::filesystem::path> music;
  std::vector<std::filesystem::path> babble;
  std::vector<std::filesystem::path> rir;
  SnrRange noise_snr{0.0, 15.0};
  SnrRange music_snr{0.0, 15.0};
  SnrRange babble_snr{13.0, 20.0};

  // Collects *.wav / *.sph under noise_dir (subdirectories named noise,
  // music, babble; files directly in noise_dir count as noise) and rir_dir.
  static AdditiveSources FromDirectories(const std::filesystem::path &noise_dir,
                                         const std::filesystem::path &rir_dir);
  bool empty() const {
    return noise.empty() && music.empty() && babble.empty() && rir.empty();
  }
};

// Applies one randomly parameterised transform of the given category.
// Deterministic in (input, rng state).
AudioBuffer AugmentOne(Category category, const AudioBuffer &speech,
                       const AdditiveSources &sources, Rng &rng,
                       std::string *description = nullptr);

struct AugmentJob {
  Category category = Category::kSignal;
  std::filesystem::path out_dir;
  AdditiveSources sources;
  uint64_t seed = 0;
  int copies_per_utterance = 1;
};

// Writes augmented WAVs for every record of `input` and returns the manifest
// of the outputs (origin tagged with the category). Each utterance copy uses
// its own RNG stream derived from (seed, id, copy), so results do not depend
// on processing order.
Manifest AugmentManifest(const Manifest &input, const AugmentJob &job);

}  // namespace lidkit::augment

#endif  // LIDKIT_AUGMENT_H_
