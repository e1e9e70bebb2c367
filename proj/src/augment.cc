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

#include "lidkit/augment.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "lidkit/dsp.h"

namespace lidkit::augment {

namespace {

constexpr double kPi = std::numbers::pi;

double WrapPhase(double p) { return p - 2.0 * kPi * std::round(p / (2.0 * kPi)); }

// Exponential integral E1(v) for v > 0.
double ExpIntE1(double v) { return -std::expint(-v); }

std::vector<double> PowerSpectrum(const std::vector<dsp::Complex> &frame) {
  std::vector<double> p(frame.size());
  for (size_t k = 0; k < frame.size(); ++k) p[k] = std::norm(frame[k]);
  return p;
}

// Mean power spectrum over the lowest-energy fraction of frames.
std::vector<double> EstimateNoiseFloor(const dsp::Stft &s, double fraction) {
  const size_t n = s.frames.size(), bins = s.frames.front().size();
  std::vector<std::pair<double, size_t>> energy(n);
  for (size_t f = 0; f < n; ++f) {
    double e = 0.0;
    for (const auto &c : s.frames[f]) e += std::norm(c);
    energy[f] = {e, f};
  }
  std::sort(energy.begin(), energy.end());
  size_t take = std::max<size_t>(1, static_cast<size_t>(fraction * n));
  std::vector<double> noise(bins, 0.0);
  for (size_t i = 0; i < take; ++i)
    for (size_t k = 0; k < bins; ++k) noise[k] += std::norm(s.frames[energy[i].second][k]);
  for (auto &v : noise) v /= static_cast<double>(take);
  return noise;
}

void ScaleBins(std::vector<dsp::Complex> &frame, const std::vector<double> &gain) {
  for (size_t k = 0; k < frame.size(); ++k) frame[k] *= gain[k];
}

// Power subtraction with an over-subtraction factor that shrinks as the frame
// SNR grows, and a spectral floor relative to the noise estimate.
void SpectralSubtraction(dsp::Stft &s) {
  constexpr double kFloor = 0.01;
  auto noise = EstimateNoiseFloor(s, 0.1);
  double noise_total = 0.0;
  for (double v : noise) noise_total += v;
  for (auto &frame : s.frames) {
    auto p = PowerSpectrum(frame);
    double total = 0.0;
    for (double v : p) total += v;
    double snr_db = 10.0 * std::log10(std::max(total, 1e-30) / std::max(noise_total, 1e-30));
    double alpha = std::clamp(4.0 - 0.15 * snr_db, 1.0, 5.0);
    std::vector<double> gain(p.size(), 1.0);
    for (size_t k = 0; k < p.size(); ++k) {
      if (p[k] <= 0.0) continue;
      double clean = std::max(p[k] - alpha * noise[k], kFloor * noise[k]);
      gain[k] = std::min(1.0, std::sqrt(clean / p[k]));
    }
    ScaleBins(frame, gain);
  }
}

// Log-spectral amplitude MMSE gain with decision-directed a-priori SNR and a
// noise estimate that is updated in bins where speech is deemed absent.
void LogMmse(dsp::Stft &s) {
  constexpr double kDd = 0.98, kNoiseSmooth = 0.98, kXiMin = 0.003162;  // -25 dB
  constexpr double kAbsenceSnr = 2.5, kGammaMax = 1000.0;
  auto noise = EstimateNoiseFloor(s, 0.1);
  const size_t bins = noise.size();
  std::vector<double> prev_clean(bins, 0.0);
  bool first = true;
  for (auto &frame : s.frames) {
    auto p = PowerSpectrum(frame);
    std::vector<double> gain(bins, 1.0);
    for (size_t k = 0; k < bins; ++k) {
      double nk = std::max(noise[k], 1e-20);
      double gamma = std::min(p[k] / nk, kGammaMax);
      double ml = std::max(gamma - 1.0, 0.0);
      double xi = first ? kDd + (1.0 - kDd) * ml
                        : kDd * prev_clean[k] / nk + (1.0 - kDd) * ml;
      xi = std::max(xi, kXiMin);
      double v = std::max(xi * gamma / (1.0 + xi), 1e-10);
      double g = xi / (1.0 + xi) * std::exp(0.5 * ExpIntE1(v));
      gain[k] = std::min(g, 1.0);
      prev_clean[k] = gain[k] * gain[k] * p[k];
      if (gamma < kAbsenceSnr) noise[k] = kNoiseSmooth * noise[k] + (1.0 - kNoiseSmooth) * p[k];
    }
    first = false;
    ScaleBins(frame, gain);
  }
}

// Late-reverberation suppression: the late reverberant power is predicted as
// an exponentially decayed copy of the smoothed power `delay` frames back
// (fixed RT60 assumption) and subtracted with a floor.
void Dereverb(dsp::Stft &s, int sample_rate) {
  constexpr double kRt60 = 0.5, kLateDelayS = 0.05, kSmooth = 0.7, kFloor = 0.1;
  const double frame_s = static_cast<double>(s.hop) / sample_rate;
  const int delay = std::max(1, static_cast<int>(std::lround(kLateDelayS / frame_s)));
  const double decay = std::exp(-2.0 * (3.0 * std::log(10.0) / kRt60) * delay * frame_s);
  const size_t bins = s.frames.front().size();
  std::vector<std::vector<double>> smoothed(s.frames.size(), std::vector<double>(bins));
  for (size_t f = 0; f < s.frames.size(); ++f) {
    auto p = PowerSpectrum(s.frames[f]);
    for (size_t k = 0; k < bins; ++k)
      smoothed[f][k] = f == 0 ? p[k] : kSmooth * smoothed[f - 1][k] + (1.0 - kSmooth) * p[k];
  }
  for (size_t f = static_cast<size_t>(delay); f < s.frames.size(); ++f) {
    auto p = PowerSpectrum(s.frames[f]);
    std::vector<double> gain(bins, 1.0);
    for (size_t k = 0; k < bins; ++k) {
      if (p[k] <= 0.0) continue;
      double late = decay * smoothed[f - delay][k];
      gain[k] = std::sqrt(std::max(1.0 - late / p[k], kFloor * kFloor));
    }
    ScaleBins(s.frames[f], gain);
  }
}

std::vector<std::filesystem::path> ListAudio(const std::filesystem::path &dir) {
  std::vector<std::filesystem::path> out;
  if (dir.empty() || !std::filesystem::is_directory(dir)) return out;
  for (const auto &e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    if (ext == ".wav" || ext == ".sph") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

SignalPerturbSpec SignalPerturbSpec::Sample(Rng &rng) {
  SignalPerturbSpec s;
  s.gain_db = rng.Uniform(kGainMin, kGainMax);
  s.pitch_semitones = rng.Uniform(-kPitchMax, kPitchMax);
  s.speed_gamma = rng.Uniform(-kSpeedMax, kSpeedMax);
  return s;
}

void SignalPerturbSpec::Validate() const {
  if (!(gain_db >= kGainMin && gain_db <= kGainMax))
    throw UsageError("gain_db out of range [-30, 40]");
  if (!(std::abs(pitch_semitones) <= kPitchMax))
    throw UsageError("pitch shift out of range [-4, 4] semitones");
  if (!(std::abs(speed_gamma) <= kSpeedMax))
    throw UsageError("speed factor out of range [-15, 15] percent");
}

MixResult MixAdditive(const AudioBuffer &speech, const AudioBuffer &noise,
                      double snr_db) {
  if (!std::isfinite(snr_db)) throw UsageError("snr_db must be finite");
  if (noise.empty()) throw DataError("silent noise source");
  std::vector<double> fitted(speech.size());
  for (size_t i = 0; i < fitted.size(); ++i) fitted[i] = noise.samples[i % noise.size()];
  double p_noise = Power(fitted);
  if (!(p_noise > 0.0)) throw DataError("silent noise source");
  double p_speech = Power(speech.samples);
  if (!(p_speech > 0.0)) throw DataError("silent speech: SNR is undefined");

  MixResult r;
  r.noise_gain = std::sqrt(p_speech / (p_noise * std::pow(10.0, snr_db / 10.0)));
  r.audio.sample_rate_hz = speech.sample_rate_hz;
  r.audio.samples.resize(speech.size());
  for (size_t i = 0; i < speech.size(); ++i)
    r.audio.samples[i] = speech.samples[i] + r.noise_gain * fitted[i];
  double peak = PeakAbs(r.audio.samples);
  if (peak > 1.0) {
    r.output_scale = 1.0 / peak;
    for (auto &v : r.audio.samples) v *= r.output_scale;
  }
  return r;
}

AudioBuffer ConvolveRir(const AudioBuffer &speech, const AudioBuffer &rir) {
  if (rir.empty()) throw DataError("empty room impulse response");
  auto full = dsp::Convolve(speech.samples, rir.samples);
  full.resize(speech.size());
  AudioBuffer out{std::move(full), speech.sample_rate_hz};
  double p_in = Power(speech.samples), p_out = Power(out.samples);
  if (p_out > 0.0) {
    double g = std::sqrt(p_in / p_out);
    for (auto &v : out.samples) v *= g;
  }
  return out;
}

VolumeResult PerturbVolume(const AudioBuffer &speech, double gain_db) {
  if (!(gain_db >= SignalPerturbSpec::kGainMin && gain_db <= SignalPerturbSpec::kGainMax))
    throw UsageError("gain_db out of range [-30, 40]");
  VolumeResult r;
  r.audio = speech;
  double g = std::pow(10.0, gain_db / 20.0);
  for (auto &v : r.audio.samples) {
    v *= g;
    if (v > 1.0 || v < -1.0) {
      v = std::clamp(v, -1.0, 1.0);
      r.clipped = true;
    }
  }
  return r;
}

std::vector<double> TimeStretch(std::span<const double> x, double factor) {
  constexpr int kFft = 512, kHop = 128;
  if (!(factor > 0.0)) throw UsageError("stretch factor must be positive");
  const size_t out_len = static_cast<size_t>(std::lround(x.size() * factor));
  dsp::Stft s = dsp::ComputeStft(x, kFft, kHop);
  const size_t n_frames = s.frames.size(), bins = kFft / 2 + 1;
  const double rate = 1.0 / factor;

  std::vector<double> advance(bins), phase(bins);
  for (size_t k = 0; k < bins; ++k) {
    advance[k] = 2.0 * kPi * kHop * static_cast<double>(k) / kFft;
    phase[k] = std::arg(s.frames[0][k]);
  }
  const std::vector<dsp::Complex> zero(bins);
  dsp::Stft out;
  out.n_fft = kFft;
  out.hop = kHop;
  out.window = s.window;
  // Enough output frames to cover out_len after the centring pad.
  const size_t want = out_len / kHop + 2;
  for (size_t i = 0; i < want; ++i) {
    double t = static_cast<double>(i) * rate;
    size_t f0 = std::min(static_cast<size_t>(t), n_frames - 1);
    const auto &a = s.frames[f0];
    const auto &b = f0 + 1 < n_frames ? s.frames[f0 + 1] : zero;
    double alpha = t - std::floor(t);
    if (static_cast<size_t>(t) >= n_frames) alpha = 0.0;
    std::vector<dsp::Complex> frame(bins);
    for (size_t k = 0; k < bins; ++k) {
      double mag = (1.0 - alpha) * std::abs(a[k]) + alpha * std::abs(b[k]);
      frame[k] = std::polar(mag, phase[k]);
      double dphase = std::arg(b[k]) - std::arg(a[k]) - advance[k];
      phase[k] += advance[k] + WrapPhase(dphase);
    }
    out.frames.push_back(std::move(frame));
  }
  return dsp::InverseStft(out, out_len);
}

AudioBuffer PerturbPitch(const AudioBuffer &speech, double semitones,
                         bool allow_any_shift) {
  if (!std::isfinite(semitones) ||
      (!allow_any_shift && std::abs(semitones) > SignalPerturbSpec::kPitchMax))
    throw UsageError("pitch shift out of range [-4, 4] semitones");
  if (speech.empty()) return speech;
  const double ratio = std::pow(2.0, semitones / 12.0);
  auto stretched = TimeStretch(speech.samples, ratio);
  AudioBuffer out;
  out.sample_rate_hz = speech.sample_rate_hz;
  out.samples = dsp::Resample(stretched, ratio, speech.size());
  return out;
}

AudioBuffer PerturbSpeed(const AudioBuffer &speech, double gamma_percent) {
  if (!(std::abs(gamma_percent) <= SignalPerturbSpec::kSpeedMax))
    throw UsageError("speed factor out of range [-15, 15] percent");
  if (gamma_percent == 0.0) return speech;
  const double step = 1.0 + gamma_percent / 100.0;
  const auto n = static_cast<size_t>(std::lround(speech.size() / step));
  AudioBuffer out;
  out.sample_rate_hz = speech.sample_rate_hz;
  out.samples = dsp::Resample(speech.samples, step, n);
  return out;
}

AudioBuffer Enhance(const AudioBuffer &speech, const EnhanceSpec &spec) {
  if (speech.size() < static_cast<size_t>(kEnhanceFrame))
    throw DataError("input too short for enhancement (" +
                    std::to_string(speech.size()) + " samples)");
  dsp::Stft s = dsp::ComputeStft(speech.samples, kEnhanceFrame, kEnhanceFrame / 4);
  switch (spec.algorithm) {
    case EnhanceAlgorithm::kSpectralSubtraction: SpectralSubtraction(s); break;
    case EnhanceAlgorithm::kLogMmse: LogMmse(s); break;
    case EnhanceAlgorithm::kDereverb: Dereverb(s, speech.sample_rate_hz); break;
  }
  return AudioBuffer{dsp::InverseStft(s, speech.size()), speech.sample_rate_hz};
}

std::string_view CategoryName(Category c) {
  switch (c) {
    case Category::kAdditive: return "additive";
    case Category::kSignal: return "signal";
    case Category::kEnhance: return "enhance";
  }
  return "additive";
}

Category ParseCategory(std::string_view name) {
  if (name == "additive") return Category::kAdditive;
  if (name == "signal") return Category::kSignal;
  if (name == "enhance") return Category::kEnhance;
  throw UsageError("unknown augmentation category '" + std::string(name) + "'");
}

Origin CategoryOrigin(Category c) {
  switch (c) {
    case Category::kAdditive: return Origin::kAdditive;
    case Category::kSignal: return Origin::kSignal;
    case Category::kEnhance: return Origin::kEnhance;
  }
  return Origin::kOriginal;
}

AdditiveSources AdditiveSources::FromDirectories(const std::filesystem::path &noise_dir,
                                                 const std::filesystem::path &rir_dir) {
  AdditiveSources s;
  s.noise = ListAudio(noise_dir);
  for (auto &p : ListAudio(noise_dir / "noise")) s.noise.push_back(p);
  s.music = ListAudio(noise_dir / "music");
  s.babble = ListAudio(noise_dir / "babble");
  s.rir = ListAudio(rir_dir);
  return s;
}

AudioBuffer AugmentOne(Category category, const AudioBuffer &speech,
                       const AdditiveSources &sources, Rng &rng,
                       std::string *description) {
  std::ostringstream desc;
  AudioBuffer out;
  switch (category) {
    case Category::kAdditive: {
      if (sources.empty())
        throw UsageError("additive augmentation needs noise and/or RIR sources");
      struct Option {
        NoiseKind kind;
        const std::vector<std::filesystem::path> *files;
        SnrRange snr;
      };
      std::vector<Option> options;
      if (!sources.noise.empty()) options.push_back({NoiseKind::kNoise, &sources.noise, sources.noise_snr});
      if (!sources.music.empty()) options.push_back({NoiseKind::kMusic, &sources.music, sources.music_snr});
      if (!sources.babble.empty()) options.push_back({NoiseKind::kBabble, &sources.babble, sources.babble_snr});
      if (!sources.rir.empty()) options.push_back({NoiseKind::kRir, &sources.rir, {}});
      const Option &opt = options[rng.Index(options.size())];
      const auto &file = (*opt.files)[rng.Index(opt.files->size())];
      AudioBuffer src = ReadAudio(file);
      if (opt.kind == NoiseKind::kRir) {
        out = ConvolveRir(speech, src);
        desc << "rir " << file.filename().string();
      } else {
        // Start the looped noise at a random offset.
        std::rotate(src.samples.begin(),
                    src.samples.begin() + static_cast<long>(rng.Index(src.size())),
                    src.samples.end());
        double snr = rng.Uniform(opt.snr.lo, opt.snr.hi);
        out = MixAdditive(speech, src, snr).audio;
        const char *name = opt.kind == NoiseKind::kNoise   ? "noise"
                           : opt.kind == NoiseKind::kMusic ? "music"
                                                           : "babble";
        desc << name << ' ' << file.filename().string() << " snr=" << snr;
      }
      break;
    }
    case Category::kSignal: {
      SignalPerturbSpec spec = SignalPerturbSpec::Sample(rng);
      out = PerturbPitch(speech, spec.pitch_semitones);
      out = PerturbSpeed(out, spec.speed_gamma);
      auto vol = PerturbVolume(out, spec.gain_db);
      out = std::move(vol.audio);
      desc << "pitch=" << spec.pitch_semitones << " speed=" << spec.speed_gamma
           << " gain=" << spec.gain_db << (vol.clipped ? " clipped" : "");
      break;
    }
    case Category::kEnhance: {
      EnhanceSpec spec{static_cast<EnhanceAlgorithm>(rng.Index(3))};
      out = Enhance(speech, spec);
      desc << "enhance=" << static_cast<int>(spec.algorithm);
      break;
    }
  }
  if (description) *description = desc.str();
  return out;
}

Manifest AugmentManifest(const Manifest &input, const AugmentJob &job) {
  if (job.copies_per_utterance < 1) throw UsageError("copies_per_utterance must be >= 1");
  std::filesystem::create_directories(job.out_dir);
  Manifest out(input.labels());
  const std::string cat(CategoryName(job.category));
  for (const auto &r : input.records()) {
    AudioBuffer audio = ReadAudio(r.path);
    for (int c = 0; c < job.copies_per_utterance; ++c) {
      const std::string id = r.id + "-" + cat + std::to_string(c);
      Rng rng = Rng::Derive(job.seed, id);
      AudioBuffer aug = AugmentOne(job.category, audio, job.sources, rng);
      auto path = job.out_dir / (id + ".wav");
      WriteWav(path, aug);
      UtteranceRecord rec = r;
      rec.id = id;
      rec.path = path;
      rec.duration_s = aug.duration_s();
      rec.origin = CategoryOrigin(job.category);
      out.Add(std::move(rec));
    }
  }
  return out;
}

}  // namespace lidkit::augment
