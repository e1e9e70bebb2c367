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

#ifndef LIDKIT_DSP_H_
#define LIDKIT_DSP_H_

#include <complex>
#include <span>
#include <vector>

#include "lidkit/common.h"

namespace lidkit::dsp {

using Complex = std::complex<double>;

std::vector<double> HammingWindow(int length);
// Periodic Hann window, the usual choice for STFT analysis/synthesis.
std::vector<double> HannWindow(int length);

// Forward real FFT of `frame` zero-padded to `n_fft`; returns n_fft/2+1 bins.
std::vector<Complex> RealFft(std::span<const double> frame, int n_fft);
// Inverse of RealFft for a half spectrum of n_fft/2+1 bins.
std::vector<double> InverseRealFft(std::span<const Complex> spectrum, int n_fft);

// Number of complete frames: 1 + floor((n - window) / hop), 0 if n < window.
int NumFrames(size_t num_samples, int window, int hop);

// Short-time Fourier transform with centred frames (n_fft/2 zero padding on
// each side), so that Istft(Stft(x)) reproduces x over its full length.
struct Stft {
  int n_fft = 256;
  int hop = 64;
  std::vector<double> window;  // defaults to Hann(n_fft)
  // frames x (n_fft/2+1)
  std::vector<std::vector<Complex>> frames;
  size_t signal_length = 0;
};

Stft ComputeStft(std::span<const double> x, int n_fft, int hop);
// Weighted overlap-add inverse, normalised by the summed squared window.
// Output has `length` samples.
std::vector<double> InverseStft(const Stft &stft, size_t length);

// Band-limited resampling by reading the input at positions
// i * step for i in [0, out_length). step > 1 compresses (the anti-alias
// cut-off is lowered accordingly). Windowed-sinc interpolation.
std::vector<double> Resample(std::span<const double> x, double step,
                             size_t out_length);

// Full linear convolution, length x.size() + h.size() - 1. Switches to FFT
// convolution for long kernels.
std::vector<double> Convolve(std::span<const double> x, std::span<const double> h);

}  // namespace lidkit::dsp

#endif  // LIDKIT_DSP_H_
