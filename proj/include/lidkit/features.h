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

#ifndef LIDKIT_FEATURES_H_
#define LIDKIT_FEATURES_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lidkit/audio.h"
#include "lidkit/common.h"

namespace lidkit {

enum class FeatureKind {
  kMfcc40,        // 40 mel filters, 40 cepstra including c0
  kPlp20,         // RASTA-PLP, 20 cepstra
  kMfcc16Sdc112,  // c1..c16 followed by 7 shifted delta blocks
  kMfcc16,        // the 16-dim base of kMfcc16Sdc112
  kGeneric,       // any other shape (tests, ad-hoc front-ends)
};

std::string_view FeatureKindName(FeatureKind kind);
FeatureKind ParseFeatureKind(std::string_view name);
// Expected dimension of a kind, or -1 for kGeneric.
int FeatureDim(FeatureKind kind);

struct FrameConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int fft_size = 256;
  int sample_rate_hz = kSampleRate;
  double preemphasis = 0.97;

  int window_samples() const;
  int hop_samples() const;
  // Throws UsageError when the window does not fit the FFT or hop > window.
  void Validate() const;
};

// frames x dims. Rows are frames.
struct FeatureMatrix {
  RowMatrix data;
  FeatureKind kind = FeatureKind::kGeneric;
  double frame_hop_ms = 10.0;

  int frames() const { return static_cast<int>(data.rows()); }
  int dims() const { return static_cast<int>(data.cols()); }
  // Throws NumericError on non-finite values, DataError on a dim mismatch.
  void Validate() const;
};

class NoSpeechError : public DataError {
 public:
  using DataError::DataError;
};

struct VadOptions {
  double margin_db = 30.0;
  double floor_dbfs = -55.0;
};

// Splits audio into frames and applies per-frame DC removal followed by
// pre-emphasis (when `preemphasize`). Rows are frames, no window applied.
RowMatrix FrameSignal(const AudioBuffer &audio, const FrameConfig &cfg,
                      bool preemphasize = true);

// Per-frame log energy in dB relative to a full-scale constant, computed on
// the DC-removed, pre-emphasized frame.
std::vector<double> FrameLogEnergy(const AudioBuffer &audio, const FrameConfig &cfg);

// A frame is kept when its log energy is above both (max - margin) and the
// absolute floor.
std::vector<bool> VadEnergy(const AudioBuffer &audio, const FrameConfig &cfg,
                            const VadOptions &opts = {});

// Triangular filters equally spaced on the mel scale between low_hz and
// high_hz, evaluated on the n_fft/2+1 bin grid.
class MelFilterbank {
 public:
  MelFilterbank(int n_mels, int n_fft, int sample_rate_hz, double low_hz,
                double high_hz);

  static double HzToMel(double hz);
  static double MelToHz(double mel);

  int num_filters() const { return static_cast<int>(weights_.rows()); }
  // n_mels x (n_fft/2+1)
  const Matrix &weights() const { return weights_; }
  double center_hz(int m) const { return centers_hz_[m]; }

  // Filter outputs for one spectrum (magnitude or power, caller's choice).
  Vector Apply(std::span<const double> spectrum) const;

 private:
  Matrix weights_;
  std::vector<double> centers_hz_;
};

// Magnitude spectrum |FFT(windowed frame)| over n_fft/2+1 bins.
std::vector<double> MagnitudeSpectrum(std::span<const double> frame, int n_fft);

struct MfccOptions {
  FrameConfig frame;
  int n_mels = 40;
  int n_ceps = 40;
  // When false the cepstra returned are c1..c{n_ceps}.
  bool include_c0 = true;
  VadOptions vad;
  bool apply_vad = true;
};

// Mel filterbank outputs of every frame (before the log), frames x n_mels.
// Frames are DC-removed, pre-emphasized and Hamming-windowed.
RowMatrix MelEnergies(const AudioBuffer &audio, const FrameConfig &cfg,
                      const MelFilterbank &fbank);

// Throws NoSpeechError when VAD removes every frame.
FeatureMatrix Mfcc(const AudioBuffer &audio, const MfccOptions &opts = {});

struct PlpOptions {
  FrameConfig frame;
  int model_order = 19;
  int n_ceps = 20;
  double lifter_exponent = 0.6;
  VadOptions vad;
  bool apply_vad = true;
};

// RASTA band-pass filter applied along time to each column of a log
// spectrogram (rows are frames). The first four output frames are zero; the
// filter state is primed from them.
RowMatrix RastaFilter(const RowMatrix &log_spectrum);

FeatureMatrix RastaPlp(const AudioBuffer &audio, const PlpOptions &opts = {});

struct SdcSpec {
  int d = 1;  // delta half-window
  int p = 3;  // block shift
  int k = 7;  // number of blocks
  int min_frames() const { return d + (k - 1) * p + d + 1; }
};

// Returns [base | SDC], base.dims() * (1 + k) columns. Frame indices outside
// the utterance are clamped to its edges.
FeatureMatrix Sdc(const FeatureMatrix &base, const SdcSpec &spec = {});

FeatureMatrix Cms(const FeatureMatrix &features);

// Consecutive 300-frame chunks (at 10 ms hop). A trailing remainder of at
// least half a chunk becomes its own chunk, a shorter one is merged into the
// last chunk; inputs shorter than one chunk come back whole.
std::vector<FeatureMatrix> Chunk(const FeatureMatrix &features,
                                 double chunk_s = 3.0);

struct FrontEndOptions {
  FrameConfig frame;
  VadOptions vad;
  SdcSpec sdc;
};

// Complete front-end for one of the three system feature kinds:
// VAD + cepstra (+ SDC) + CMS.
FeatureMatrix ExtractFeatures(const AudioBuffer &audio, FeatureKind kind,
                              const FrontEndOptions &opts = {});

}  // namespace lidkit

#endif  // LIDKIT_FEATURES_H_
