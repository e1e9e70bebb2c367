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

#include "lidkit/dsp.h"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lidkit::dsp {

namespace {

Eigen::FFT<double> &FftEngine() {
  thread_local Eigen::FFT<double> fft;
  return fft;
}

double Sinc(double x) {
  if (x == 0.0) return 1.0;
  double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

std::vector<double> HammingWindow(int length) {
  std::vector<double> w(length);
  if (length == 1) return {1.0};
  for (int i = 0; i < length; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (length - 1));
  return w;
}

std::vector<double> HannWindow(int length) {
  std::vector<double> w(length);
  for (int i = 0; i < length; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  return w;
}

std::vector<Complex> RealFft(std::span<const double> frame, int n_fft) {
  std::vector<double> in(n_fft, 0.0);
  std::copy_n(frame.begin(), std::min<size_t>(frame.size(), n_fft), in.begin());
  std::vector<Complex> full;
  FftEngine().fwd(full, in);
  full.resize(n_fft / 2 + 1);
  return full;
}

std::vector<double> InverseRealFft(std::span<const Complex> spectrum, int n_fft) {
  std::vector<Complex> full(n_fft);
  const int half = n_fft / 2;
  for (int k = 0; k <= half; ++k) full[k] = spectrum[k];
  for (int k = half + 1; k < n_fft; ++k) full[k] = std::conj(spectrum[n_fft - k]);
  std::vector<double> out;
  FftEngine().inv(out, full);
  return out;
}

int NumFrames(size_t num_samples, int window, int hop) {
  if (num_samples < static_cast<size_t>(window)) return 0;
  return 1 + static_cast<int>((num_samples - window) / hop);
}

Stft ComputeStft(std::span<const double> x, int n_fft, int hop) {
  Stft s;
  s.n_fft = n_fft;
  s.hop = hop;
  s.window = HannWindow(n_fft);
  s.signal_length = x.size();
  const int pad = n_fft / 2;
  const size_t padded = x.size() + 2 * pad;
  const int n_frames = 1 + static_cast<int>((padded - n_fft + hop - 1) / hop);
  std::vector<double> frame(n_fft);
  s.frames.reserve(n_frames);
  for (int f = 0; f < n_frames; ++f) {
    for (int i = 0; i < n_fft; ++i) {
      long long idx = static_cast<long long>(f) * hop + i - pad;
      double v = (idx >= 0 && idx < static_cast<long long>(x.size())) ? x[idx] : 0.0;
      frame[i] = v * s.window[i];
    }
    s.frames.push_back(RealFft(frame, n_fft));
  }
  return s;
}

std::vector<double> InverseStft(const Stft &stft, size_t length) {
  const int n_fft = stft.n_fft, hop = stft.hop, pad = n_fft / 2;
  const size_t total = stft.frames.size() * hop + n_fft;
  std::vector<double> acc(total, 0.0), norm(total, 0.0);
  for (size_t f = 0; f < stft.frames.size(); ++f) {
    auto frame = InverseRealFft(stft.frames[f], n_fft);
    size_t base = f * hop;
    for (int i = 0; i < n_fft; ++i) {
      acc[base + i] += frame[i] * stft.window[i];
      norm[base + i] += stft.window[i] * stft.window[i];
    }
  }
  std::vector<double> out(length, 0.0);
  for (size_t i = 0; i < length; ++i) {
    size_t j = i + pad;
    if (j < total && norm[j] > 1e-10) out[i] = acc[j] / norm[j];
  }
  return out;
}

std::vector<double> Resample(std::span<const double> x, double step,
                             size_t out_length) {
  constexpr int kZeroCrossings = 16;
  const double cutoff = std::min(1.0, 1.0 / step);
  const double half_width = kZeroCrossings / cutoff;
  const long long n = static_cast<long long>(x.size());
  std::vector<double> y(out_length, 0.0);
  for (size_t i = 0; i < out_length; ++i) {
    double pos = static_cast<double>(i) * step;
    long long lo = static_cast<long long>(std::ceil(pos - half_width));
    long long hi = static_cast<long long>(std::floor(pos + half_width));
    double acc = 0.0;
    for (long long j = std::max(0LL, lo); j <= std::min(n - 1, hi); ++j) {
      double d = pos - static_cast<double>(j);
      // Hann-windowed sinc kernel
      double w = 0.5 + 0.5 * std::cos(std::numbers::pi * d / half_width);
      acc += x[j] * cutoff * Sinc(cutoff * d) * w;
    }
    y[i] = acc;
  }
  return y;
}

std::vector<double> Convolve(std::span<const double> x, std::span<const double> h) {
  if (x.empty() || h.empty()) return {};
  const size_t out_len = x.size() + h.size() - 1;
  if (h.size() <= 64 || x.size() <= 64) {
    std::vector<double> y(out_len, 0.0);
    for (size_t k = 0; k < h.size(); ++k) {
      if (h[k] == 0.0) continue;
      for (size_t i = 0; i < x.size(); ++i) y[i + k] += h[k] * x[i];
    }
    return y;
  }
  int n_fft = 1;
  while (static_cast<size_t>(n_fft) < out_len) n_fft <<= 1;
  auto X = RealFft(x, n_fft);
  auto H = RealFft(h, n_fft);
  for (size_t k = 0; k < X.size(); ++k) X[k] *= H[k];
  auto y = InverseRealFft(X, n_fft);
  y.resize(out_len);
  return y;
}

}  // namespace lidkit::dsp
