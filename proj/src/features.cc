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

#include "lidkit/features.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lidkit/dsp.h"

namespace lidkit {

std::string_view FeatureKindName(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kMfcc40: return "mfcc40";
    case FeatureKind::kPlp20: return "plp20";
    case FeatureKind::kMfcc16Sdc112: return "mfcc16_sdc112";
    case FeatureKind::kMfcc16: return "mfcc16";
    case FeatureKind::kGeneric: return "generic";
  }
  return "generic";
}

FeatureKind ParseFeatureKind(std::string_view name) {
  for (auto k : {FeatureKind::kMfcc40, FeatureKind::kPlp20,
                 FeatureKind::kMfcc16Sdc112, FeatureKind::kMfcc16,
                 FeatureKind::kGeneric})
    if (FeatureKindName(k) == name) return k;
  throw UsageError("unknown feature kind '" + std::string(name) + "'");
}

int FeatureDim(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kMfcc40: return 40;
    case FeatureKind::kPlp20: return 20;
    case FeatureKind::kMfcc16Sdc112: return 128;
    case FeatureKind::kMfcc16: return 16;
    case FeatureKind::kGeneric: return -1;
  }
  return -1;
}

int FrameConfig::window_samples() const {
  return static_cast<int>(std::lround(window_ms * sample_rate_hz / 1000.0));
}

int FrameConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_ms * sample_rate_hz / 1000.0));
}

void FrameConfig::Validate() const {
  if (window_samples() <= 0 || hop_samples() <= 0)
    throw UsageError("frame window and hop must be positive");
  if (window_samples() > fft_size)
    throw UsageError("frame window exceeds fft_size");
  if (hop_samples() > window_samples())
    throw UsageError("frame hop exceeds window");
  if ((fft_size & (fft_size - 1)) != 0)
    throw UsageError("fft_size must be a power of two");
}

void FeatureMatrix::Validate() const {
  int want = FeatureDim(kind);
  if (want >= 0 && dims() != want)
    throw DataError("feature matrix of kind " + std::string(FeatureKindName(kind)) +
                    " has " + std::to_string(dims()) + " dims, expected " +
                    std::to_string(want));
  if (!data.allFinite()) throw NumericError("feature matrix has non-finite values");
}

RowMatrix FrameSignal(const AudioBuffer &audio, const FrameConfig &cfg,
                      bool preemphasize) {
  cfg.Validate();
  const int win = cfg.window_samples(), hop = cfg.hop_samples();
  const int n = dsp::NumFrames(audio.size(), win, hop);
  RowMatrix frames(n, win);
  for (int f = 0; f < n; ++f) {
    auto row = frames.row(f);
    for (int i = 0; i < win; ++i) row(i) = audio.samples[f * hop + i];
    row.array() -= row.mean();
    if (preemphasize) {
      for (int i = win - 1; i > 0; --i) row(i) -= cfg.preemphasis * row(i - 1);
      row(0) -= cfg.preemphasis * row(0);
    }
  }
  return frames;
}

std::vector<double> FrameLogEnergy(const AudioBuffer &audio, const FrameConfig &cfg) {
  RowMatrix frames = FrameSignal(audio, cfg, true);
  std::vector<double> e(frames.rows());
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    double ms = frames.row(f).squaredNorm() / static_cast<double>(frames.cols());
    e[f] = 10.0 * std::log10(std::max(ms, 1e-20));
  }
  return e;
}

std::vector<bool> VadEnergy(const AudioBuffer &audio, const FrameConfig &cfg,
                            const VadOptions &opts) {
  if (audio.empty()) throw DataError("VAD on empty audio");
  auto energy = FrameLogEnergy(audio, cfg);
  std::vector<bool> mask(energy.size(), false);
  if (energy.empty()) return mask;
  double max_e = *std::max_element(energy.begin(), energy.end());
  double threshold = std::max(max_e - opts.margin_db, opts.floor_dbfs);
  for (size_t f = 0; f < energy.size(); ++f) mask[f] = energy[f] > threshold;
  return mask;
}

MelFilterbank::MelFilterbank(int n_mels, int n_fft, int sample_rate_hz,
                             double low_hz, double high_hz) {
  if (n_mels <= 0) throw UsageError("n_mels must be positive");
  if (!(high_hz > low_hz) || high_hz > sample_rate_hz / 2.0 + 1e-9)
    throw UsageError("invalid filterbank frequency range");
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = HzToMel(low_hz), mel_hi = HzToMel(high_hz);
  const double delta = (mel_hi - mel_lo) / (n_mels + 1);
  weights_ = Matrix::Zero(n_mels, n_bins);
  centers_hz_.resize(n_mels);
  for (int m = 0; m < n_mels; ++m) {
    double left = mel_lo + m * delta, center = left + delta, right = center + delta;
    centers_hz_[m] = MelToHz(center);
    for (int k = 0; k < n_bins; ++k) {
      double mel = HzToMel(static_cast<double>(k) * sample_rate_hz / n_fft);
      if (mel > left && mel < right)
        weights_(m, k) = mel <= center ? (mel - left) / delta : (right - mel) / delta;
    }
    if (weights_.row(m).sum() <= 0.0)
      throw UsageError("mel filter " + std::to_string(m) +
                       " covers no FFT bin; use fewer filters or a longer FFT");
  }
}

double MelFilterbank::HzToMel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
double MelFilterbank::MelToHz(double mel) { return 700.0 * std::expm1(mel / 1127.0); }

Vector MelFilterbank::Apply(std::span<const double> spectrum) const {
  Eigen::Map<const Vector> s(spectrum.data(), static_cast<Eigen::Index>(spectrum.size()));
  return weights_ * s;
}

std::vector<double> MagnitudeSpectrum(std::span<const double> frame, int n_fft) {
  auto spec = dsp::RealFft(frame, n_fft);
  std::vector<double> mag(spec.size());
  for (size_t k = 0; k < spec.size(); ++k) mag[k] = std::abs(spec[k]);
  return mag;
}

RowMatrix MelEnergies(const AudioBuffer &audio, const FrameConfig &cfg,
                      const MelFilterbank &fbank) {
  RowMatrix frames = FrameSignal(audio, cfg, true);
  const auto window = dsp::HammingWindow(static_cast<int>(frames.cols()));
  RowMatrix out(frames.rows(), fbank.num_filters());
  std::vector<double> buf(frames.cols());
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    for (Eigen::Index i = 0; i < frames.cols(); ++i) buf[i] = frames(f, i) * window[i];
    auto mag = MagnitudeSpectrum(buf, cfg.fft_size);
    out.row(f) = fbank.Apply(mag).transpose();
  }
  return out;
}

namespace {

// Orthonormal DCT-II basis, n_out x n_in.
Matrix DctMatrix(int n_out, int n_in) {
  Matrix d(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    double scale = k == 0 ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int n = 0; n < n_in; ++n)
      d(k, n) = scale * std::cos(std::numbers::pi * k * (n + 0.5) / n_in);
  }
  return d;
}

FeatureMatrix SelectFrames(const RowMatrix &all, const std::vector<bool> &mask,
                           FeatureKind kind, double hop_ms) {
  int kept = static_cast<int>(std::count(mask.begin(), mask.end(), true));
  if (kept == 0) throw NoSpeechError("no speech frames after VAD");
  FeatureMatrix out;
  out.kind = kind;
  out.frame_hop_ms = hop_ms;
  out.data.resize(kept, all.cols());
  int r = 0;
  for (size_t f = 0; f < mask.size(); ++f)
    if (mask[f]) out.data.row(r++) = all.row(static_cast<Eigen::Index>(f));
  return out;
}

FeatureKind MfccKind(const MfccOptions &o) {
  if (o.n_ceps == 40 && o.include_c0) return FeatureKind::kMfcc40;
  if (o.n_ceps == 16 && !o.include_c0) return FeatureKind::kMfcc16;
  return FeatureKind::kGeneric;
}

}  // namespace

FeatureMatrix Mfcc(const AudioBuffer &audio, const MfccOptions &opts) {
  if (audio.sample_rate_hz != kSampleRate)
    throw DataError("mfcc expects 8 kHz audio");
  const int first = opts.include_c0 ? 0 : 1;
  if (opts.n_ceps + first > opts.n_mels)
    throw UsageError("n_ceps must not exceed n_mels");
  MelFilterbank fbank(opts.n_mels, opts.frame.fft_size, opts.frame.sample_rate_hz,
                      0.0, opts.frame.sample_rate_hz / 2.0);
  RowMatrix mel = MelEnergies(audio, opts.frame, fbank);
  if (mel.rows() == 0) throw NoSpeechError("audio shorter than one frame");
  mel = mel.array().max(std::numeric_limits<float>::epsilon()).log().matrix();
  Matrix dct = DctMatrix(opts.n_ceps + first, opts.n_mels).bottomRows(opts.n_ceps);
  RowMatrix ceps = mel * dct.transpose();
  std::vector<bool> mask(ceps.rows(), true);
  if (opts.apply_vad) mask = VadEnergy(audio, opts.frame, opts.vad);
  return SelectFrames(ceps, mask, MfccKind(opts), opts.frame.hop_ms);
}

RowMatrix RastaFilter(const RowMatrix &log_spectrum) {
  // FIR numerator -[-2..2]/10, single pole at 0.94.
  constexpr double kNumer[5] = {0.2, 0.1, 0.0, -0.1, -0.2};
  constexpr double kPole = 0.94;
  const Eigen::Index t_max = log_spectrum.rows();
  RowMatrix out = RowMatrix::Zero(t_max, log_spectrum.cols());
  for (Eigen::Index c = 0; c < log_spectrum.cols(); ++c) {
    double prev = 0.0;
    for (Eigen::Index t = 4; t < t_max; ++t) {
      double acc = 0.0;
      for (int k = 0; k < 5; ++k) acc += kNumer[k] * log_spectrum(t - k, c);
      prev = acc + kPole * prev;
      out(t, c) = prev;
    }
  }
  return out;
}

namespace {

double HzToBark(double hz) { return 6.0 * std::asinh(hz / 600.0); }
double BarkToHz(double bark) { return 600.0 * std::sinh(bark / 6.0); }

// Levinson-Durbin on autocorrelation r[0..order]. Returns a[0..order] with
// a[0] = 1 and the final prediction error.
std::pair<std::vector<double>, double> Levinson(std::span<const double> r, int order) {
  std::vector<double> a(order + 1, 0.0), tmp(order + 1);
  a[0] = 1.0;
  double err = r[0];
  for (int i = 1; i <= order; ++i) {
    if (err <= 0.0) break;
    double acc = r[i];
    for (int j = 1; j < i; ++j) acc += a[j] * r[i - j];
    double k = -acc / err;
    tmp = a;
    for (int j = 1; j < i; ++j) a[j] = tmp[j] + k * tmp[i - j];
    a[i] = k;
    err *= (1.0 - k * k);
  }
  return {a, err};
}

}  // namespace

FeatureMatrix RastaPlp(const AudioBuffer &audio, const PlpOptions &opts) {
  if (audio.sample_rate_hz != kSampleRate)
    throw DataError("rasta_plp expects 8 kHz audio");
  const FrameConfig &cfg = opts.frame;
  const int n_fft = cfg.fft_size, n_bins = n_fft / 2 + 1;
  const double nyq = cfg.sample_rate_hz / 2.0;

  // Bark-spaced critical band filters, one bark wide at the top.
  const double nyq_bark = HzToBark(nyq);
  const int n_bands = static_cast<int>(std::ceil(nyq_bark)) + 1;
  const double step = nyq_bark / (n_bands - 1);
  Matrix bark_w = Matrix::Zero(n_bands, n_bins);
  std::vector<double> band_hz(n_bands);
  for (int b = 0; b < n_bands; ++b) {
    double mid = b * step;
    band_hz[b] = BarkToHz(mid);
    for (int k = 0; k < n_bins; ++k) {
      double z = HzToBark(static_cast<double>(k) * cfg.sample_rate_hz / n_fft);
      double lof = z - mid - 0.5, hif = z - mid + 0.5;
      bark_w(b, k) = std::pow(10.0, std::min(0.0, std::min(hif, -2.5 * lof)));
    }
  }

  RowMatrix frames = FrameSignal(audio, cfg, false);
  if (frames.rows() == 0) throw NoSpeechError("audio shorter than one frame");
  const auto window = dsp::HammingWindow(static_cast<int>(frames.cols()));
  RowMatrix log_aud(frames.rows(), n_bands);
  std::vector<double> buf(frames.cols()), power(n_bins);
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    for (Eigen::Index i = 0; i < frames.cols(); ++i) buf[i] = frames(f, i) * window[i];
    auto spec = dsp::RealFft(buf, n_fft);
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(spec[k]);
    Vector bands = bark_w * Eigen::Map<const Vector>(power.data(), n_bins);
    for (int b = 0; b < n_bands; ++b) log_aud(f, b) = std::log(std::max(bands(b), 1e-12));
  }
  RowMatrix aud = RastaFilter(log_aud).array().exp().matrix();

  // Equal-loudness pre-emphasis and cube-root intensity-loudness compression.
  for (int b = 0; b < n_bands; ++b) {
    double fsq = band_hz[b] * band_hz[b];
    double eql = std::pow(fsq / (fsq + 1.6e5), 2.0) * ((fsq + 1.44e6) / (fsq + 9.61e6));
    aud.col(b) = (aud.col(b) * eql).array().pow(0.33).matrix();
  }
  aud.col(0) = aud.col(1);
  aud.col(n_bands - 1) = aud.col(n_bands - 2);

  // All-pole model from the autocorrelation of the (symmetrised) auditory
  // spectrum, then the LPC -> cepstrum recursion.
  const int order = opts.model_order, n_ceps = opts.n_ceps;
  const int n_sym = 2 * (n_bands - 1);
  if (order >= n_sym) throw UsageError("model_order too large for the band count");
  RowMatrix ceps(frames.rows(), n_ceps);
  std::vector<double> r(order + 1), c(n_ceps);
  for (Eigen::Index f = 0; f < aud.rows(); ++f) {
    for (int lag = 0; lag <= order; ++lag) {
      // real inverse DFT of the even spectrum [x0 .. x_{B-1} .. x1]
      double acc = aud(f, 0) + aud(f, n_bands - 1) * (lag % 2 == 0 ? 1.0 : -1.0);
      for (int b = 1; b < n_bands - 1; ++b)
        acc += 2.0 * aud(f, b) * std::cos(std::numbers::pi * lag * b / (n_bands - 1));
      r[lag] = acc / n_sym;
    }
    auto [a, err] = Levinson(r, order);
    err = std::max(err, 1e-30);
    c[0] = std::log(err);
    for (int n = 1; n < n_ceps; ++n) {
      double acc = 0.0;
      for (int m = 1; m < n; ++m) {
        double am = m <= order ? a[m] : 0.0;
        acc += (n - m) * am * c[n - m];
      }
      double an = n <= order ? a[n] : 0.0;
      c[n] = -(an + acc / n);
    }
    for (int n = 0; n < n_ceps; ++n)
      ceps(f, n) = c[n] * (n == 0 ? 1.0 : std::pow(n, opts.lifter_exponent));
  }

  std::vector<bool> mask(ceps.rows(), true);
  if (opts.apply_vad) mask = VadEnergy(audio, cfg, opts.vad);
  FeatureMatrix out = SelectFrames(ceps, mask,
                                   n_ceps == 20 ? FeatureKind::kPlp20 : FeatureKind::kGeneric,
                                   cfg.hop_ms);
  out.Validate();
  return out;
}

FeatureMatrix Sdc(const FeatureMatrix &base, const SdcSpec &spec) {
  if (spec.d < 1 || spec.p < 1 || spec.k < 1) throw UsageError("invalid SDC spec");
  const int t_max = base.frames(), n = base.dims();
  if (t_max < spec.min_frames())
    throw DataError("too few frames for SDC: " + std::to_string(t_max) + " < " +
                    std::to_string(spec.min_frames()));
  auto clamp = [t_max](int t) { return std::clamp(t, 0, t_max - 1); };
  FeatureMatrix out;
  out.kind = (n == 16 && spec.k == 7) ? FeatureKind::kMfcc16Sdc112 : FeatureKind::kGeneric;
  out.frame_hop_ms = base.frame_hop_ms;
  out.data.resize(t_max, n * (1 + spec.k));
  out.data.leftCols(n) = base.data;
  for (int t = 0; t < t_max; ++t)
    for (int i = 0; i < spec.k; ++i) {
      int center = t + i * spec.p;
      out.data.block(t, n * (1 + i), 1, n) =
          base.data.row(clamp(center + spec.d)) - base.data.row(clamp(center - spec.d));
    }
  return out;
}

FeatureMatrix Cms(const FeatureMatrix &features) {
  if (features.frames() < 1) throw DataError("cms on empty feature matrix");
  FeatureMatrix out = features;
  out.data.rowwise() -= features.data.colwise().mean();
  return out;
}

std::vector<FeatureMatrix> Chunk(const FeatureMatrix &features, double chunk_s) {
  if (features.frames() < 1) throw DataError("chunk on empty feature matrix");
  const int size = static_cast<int>(std::lround(chunk_s * 1000.0 / features.frame_hop_ms));
  const int t_max = features.frames();
  std::vector<std::pair<int, int>> spans;  // [start, length)
  if (t_max <= size) {
    spans.emplace_back(0, t_max);
  } else {
    int full = t_max / size, rem = t_max % size;
    for (int i = 0; i < full; ++i) spans.emplace_back(i * size, size);
    if (rem >= size / 2)
      spans.emplace_back(full * size, rem);
    else
      spans.back().second += rem;
  }
  std::vector<FeatureMatrix> out;
  out.reserve(spans.size());
  for (auto [start, len] : spans) {
    FeatureMatrix c;
    c.kind = features.kind;
    c.frame_hop_ms = features.frame_hop_ms;
    c.data = features.data.middleRows(start, len);
    out.push_back(std::move(c));
  }
  return out;
}

FeatureMatrix ExtractFeatures(const AudioBuffer &audio, FeatureKind kind,
                              const FrontEndOptions &opts) {
  switch (kind) {
    case FeatureKind::kMfcc40: {
      MfccOptions o;
      o.frame = opts.frame;
      o.vad = opts.vad;
      return Cms(Mfcc(audio, o));
    }
    case FeatureKind::kPlp20: {
      PlpOptions o;
      o.frame = opts.frame;
      o.vad = opts.vad;
      return Cms(RastaPlp(audio, o));
    }
    case FeatureKind::kMfcc16Sdc112: {
      MfccOptions o;
      o.frame = opts.frame;
      o.vad = opts.vad;
      o.n_ceps = 16;
      o.include_c0 = false;
      return Cms(Sdc(Mfcc(audio, o), opts.sdc));
    }
    default:
      throw UsageError("no front-end for feature kind " +
                       std::string(FeatureKindName(kind)));
  }
}

}  // namespace lidkit
