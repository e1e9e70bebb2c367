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

#ifndef LIDKIT_SYNTH_H_
#define LIDKIT_SYNTH_H_

#include <cstdint>
#include <filesystem>

#include "lidkit/audio.h"
#include "lidkit/corpus.h"

namespace lidkit::synth {

// Synthetic multi-language corpus. All languages draw on one inventory of
// sound units (harmonic tone complexes with formant envelopes and band-pass
// noise bursts); a language is a Markov chain over the inventory plus its own
// unit-duration profile. Every session has its own speaker pitch, channel
// tilt, background noise level and gain.
struct CorpusSpec {
  int num_languages = 6;
  int sessions_per_language = 30;
  int utterances_per_session = 10;
  double min_duration_s = 2.0;
  double max_duration_s = 4.0;
  int num_units = 16;
  // 0 gives identical languages, 1 fully independent ones.
  double distinctness = 0.5;
  // Background material written for augmentation.
  int noise_files = 6;
  int music_files = 4;
  int babble_files = 4;
  int rir_files = 6;
  double background_duration_s = 6.0;
  uint64_t seed = 0;

  void Validate() const;
};

// Language codes of a synthetic corpus: "syn0", "syn1", ...
LabelSet SyntheticLabels(int num_languages);

struct CorpusLayout {
  std::filesystem::path manifest;   // <root>/manifest.tsv
  std::filesystem::path noise_dir;  // <root>/noise/{noise,music,babble}
  std::filesystem::path rir_dir;    // <root>/rir
  LabelSet labels;
};

// Writes wav/<lang>/<session>/<id>.wav, the manifest and the background
// directories under `root`. Output is a pure function of the spec.
CorpusLayout GenerateCorpus(const std::filesystem::path &root, const CorpusSpec &spec);

// One utterance of `language` with the session's characteristics, exposed
// for tests.
AudioBuffer SynthesizeUtterance(const CorpusSpec &spec, int language, int session,
                                int utterance, double duration_s);

}  // namespace lidkit::synth

#endif  // LIDKIT_SYNTH_H_
