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

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lidkit/augment.h"
#include "lidkit/rng.h"
#include "oracles.h"
#include "test_util.h"

namespace lidkit {
namespace {

using namespace augment;

AudioBuffer Tone(double hz, size_t n, double amp = 0.5) {
  AudioBuffer a;
  a.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    a.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / kSampleRate);
  return a;
}

AudioBuffer Noise(Rng &rng, size_t n, double amp) {
  AudioBuffer a;
  a.samples.resize(n);
  for (auto &s : a.samples) s = amp * rng.Normal();
  return a;
}

double Db(double x) { return 10.0 * std::log10(x); }

std::vector<double> Diff(const std::vector<double> &a, const std::vector<double> &b) {
  std::vector<double> d(a.size());
  for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

// 250 ms tone bursts separated by 150 ms gaps.
AudioBuffer ToneBursts(size_t n) {
  AudioBuffer a = Tone(600.0, n, 0.3);
  for (size_t i = 0; i < n; ++i)
    if (i % 3200 >= 2000) a.samples[i] = 0.0;
  return a;
}

TEST_SUITE("augment") {

TEST_CASE("mixing gains for equal powers") {
  Rng rng(1);
  AudioBuffer s = Noise(rng, 4000, 0.1), n = s;
  std::reverse(n.samples.begin(), n.samples.end());
  CHECK(MixAdditive(s, n, 0.0).noise_gain == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(MixAdditive(s, n, 10.0).noise_gain == doctest::Approx(std::pow(10.0, -0.5)).epsilon(1e-12));
  CHECK(std::pow(10.0, -0.5) == doctest::Approx(0.3162).epsilon(1e-4));
}

TEST_CASE("mixing achieves the requested SNR") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    AudioBuffer s = Noise(rng, 2000 + rng.Index(6000), rng.Uniform(0.01, 0.3));
    AudioBuffer n = Noise(rng, 500 + rng.Index(9000), rng.Uniform(0.001, 1.0));
    double snr = rng.Uniform(-5.0, 30.0);
    auto r = MixAdditive(s, n, snr);
    REQUIRE(r.audio.size() == s.size());
    std::vector<double> pre(s.size());
    for (size_t i = 0; i < s.size(); ++i) pre[i] = r.audio.samples[i] / r.output_scale;
    double measured = Db(Power(s.samples) / Power(Diff(pre, s.samples)));
    CHECK(std::abs(measured - snr) <= 0.1);
    CHECK(PeakAbs(r.audio.samples) <= 1.0);
  }
}

TEST_CASE("mixing rescales to avoid clipping") {
  Rng rng(3);
  AudioBuffer s = Tone(300.0, 4000, 0.9), n = Noise(rng, 4000, 0.5);
  auto r = MixAdditive(s, n, -10.0);
  CHECK(r.output_scale < 1.0);
  CHECK(PeakAbs(r.audio.samples) <= 1.0);
}

TEST_CASE("mixing errors") {
  AudioBuffer s = Tone(300.0, 1000), z;
  z.samples.assign(1000, 0.0);
  CHECK_THROWS_WITH_AS(MixAdditive(s, z, 5.0), "silent noise source", DataError);
  CHECK_THROWS_AS(MixAdditive(z, s, 5.0), DataError);
  CHECK_THROWS_AS(MixAdditive(s, s, std::nan("")), UsageError);
}

TEST_CASE("RIR identity, delay and two-tap kernels") {
  Rng rng(4);
  AudioBuffer x = Noise(rng, 1000, 0.1), rir;
  rir.samples = {1.0};
  auto y = ConvolveRir(x, rir);
  CHECK((Eigen::Map<const Vector>(y.samples.data(), 1000) -
         Eigen::Map<const Vector>(x.samples.data(), 1000))
            .cwiseAbs()
            .maxCoeff() <= 1e-12);

  rir.samples.assign(81, 0.0);
  rir.samples[80] = 1.0;
  y = ConvolveRir(x, rir);
  REQUIRE(y.size() == x.size());
  double ratio = y.samples[500] / x.samples[420];
  for (size_t n = 0; n < 80; ++n) CHECK(std::abs(y.samples[n]) <= 1e-12);
  for (size_t n = 80; n < 1000; ++n)
    CHECK(y.samples[n] == doctest::Approx(ratio * x.samples[n - 80]).epsilon(1e-9));
  CHECK(Power(y.samples) == doctest::Approx(Power(x.samples)).epsilon(1e-12));

  AudioBuffer imp;
  imp.samples.assign(100, 0.0);
  imp.samples[10] = 1.0;
  rir.samples = {0.5, 0.5};
  y = ConvolveRir(imp, rir);
  for (size_t n = 0; n < 100; ++n) {
    double want = (n == 10 || n == 11) ? std::sqrt(0.5) : 0.0;
    CHECK(y.samples[n] == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ConvolveRir(x, AudioBuffer{}), DataError);
}

TEST_CASE("volume perturbation") {
  AudioBuffer x = Tone(250.0, 800, 0.05);
  auto same = PerturbVolume(x, 0.0);
  CHECK(same.audio.samples == x.samples);
  CHECK_FALSE(same.clipped);
  auto up = PerturbVolume(x, 20.0);
  CHECK(PeakAbs(up.audio.samples) == doctest::Approx(10.0 * PeakAbs(x.samples)).epsilon(1e-12));
  CHECK_FALSE(up.clipped);
  auto clip = PerturbVolume(Tone(250.0, 800, 0.5), 40.0);
  CHECK(clip.clipped);
  CHECK(PeakAbs(clip.audio.samples) <= 1.0);
  CHECK_THROWS_AS(PerturbVolume(x, 40.5), UsageError);
  CHECK_THROWS_AS(PerturbVolume(x, -30.5), UsageError);
}

TEST_CASE("pitch shift preserves length and moves the spectral peak") {
  AudioBuffer x = Tone(500.0, 6000);
  for (double k : {-4.0, -1.5, 2.0, 4.0, 12.0}) {
    auto y = PerturbPitch(x, k, true);
    REQUIRE(y.size() == x.size());
    std::vector<double> mid(y.samples.begin() + 1000, y.samples.end() - 1000);
    double want = 500.0 * std::pow(2.0, k / 12.0);
    CHECK(std::abs(test::OraclePeakHz(mid, kSampleRate, 200.0, 1500.0, 2.0) - want) <= 20.0);
  }
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    AudioBuffer z = Noise(rng, 300 + rng.Index(5000), 0.1);
    CHECK(PerturbPitch(z, rng.Uniform(-4.0, 4.0)).size() == z.size());
  }
  CHECK_THROWS_AS(PerturbPitch(x, 4.5), UsageError);
}

TEST_CASE("zero pitch shift is close to the identity") {
  Rng rng(6);
  AudioBuffer x = Tone(440.0, 8000, 0.4);
  auto y = PerturbPitch(x, 0.0);
  CHECK(PeakAbs(Diff(y.samples, x.samples)) <= 1e-3);
}

TEST_CASE("speed perturbation lengths") {
  Rng rng(7);
  AudioBuffer x = Noise(rng, 8000, 0.1);
  CHECK(PerturbSpeed(x, 15.0).size() == 6957);
  CHECK(PerturbSpeed(x, -15.0).size() == 9412);
  CHECK(PerturbSpeed(x, 0.0).samples == x.samples);
  CHECK_THROWS_AS(PerturbSpeed(x, 16.0), UsageError);
}

TEST_CASE("speed perturbation scales frequency") {
  AudioBuffer x = Tone(500.0, 8000);
  auto y = PerturbSpeed(x, 10.0);
  CHECK(std::abs(test::OraclePeakHz(y.samples, kSampleRate, 300.0, 800.0, 1.0) - 550.0) <= 5.0);
}

TEST_CASE("spectral subtraction improves SNR of a noisy tone") {
  Rng rng(8);
  AudioBuffer clean = ToneBursts(16000);
  AudioBuffer noise = Noise(rng, clean.size(), 1.0);
  auto noisy = MixAdditive(clean, noise, 0.0);
  REQUIRE(noisy.output_scale == 1.0);
  auto enhanced = Enhance(noisy.audio, {EnhanceAlgorithm::kSpectralSubtraction});
  double before = Db(Power(clean.samples) / Power(Diff(noisy.audio.samples, clean.samples)));
  double after = Db(Power(clean.samples) / Power(Diff(enhanced.samples, clean.samples)));
  CHECK(after - before >= 3.0);
}

TEST_CASE("enhancement leaves clean audio nearly unchanged") {
  AudioBuffer clean = ToneBursts(16000);
  for (auto alg : {EnhanceAlgorithm::kSpectralSubtraction, EnhanceAlgorithm::kLogMmse,
                   EnhanceAlgorithm::kDereverb}) {
    auto y = Enhance(clean, {alg});
    REQUIRE(y.size() == clean.size());
    CHECK(std::abs(Db(Power(y.samples) / Power(clean.samples))) <= 2.0);
  }
}

TEST_CASE("enhancement preserves length and rejects short input") {
  Rng rng(9);
  for (size_t n : {256, 257, 1000, 4321}) {
    AudioBuffer x = Noise(rng, n, 0.1);
    for (auto alg : {EnhanceAlgorithm::kSpectralSubtraction, EnhanceAlgorithm::kLogMmse,
                     EnhanceAlgorithm::kDereverb})
      CHECK(Enhance(x, {alg}).size() == n);
  }
  CHECK_THROWS_AS(Enhance(Noise(rng, 255, 0.1), {}), DataError);
}

TEST_CASE("random perturbation specs stay within range") {
  Rng rng(10);
  for (int i = 0; i < 100000; ++i) {
    auto s = SignalPerturbSpec::Sample(rng);
    REQUIRE(s.gain_db >= -30.0);
    REQUIRE(s.gain_db <= 40.0);
    REQUIRE(std::abs(s.pitch_semitones) <= 4.0);
    REQUIRE(std::abs(s.speed_gamma) <= 15.0);
    s.Validate();
  }
}

TEST_CASE("augmentation is deterministic") {
  Rng data(11);
  AudioBuffer x = Noise(data, 8000, 0.1);
  AdditiveSources sources;
  for (auto cat : {Category::kSignal, Category::kEnhance}) {
    Rng a(42), b(42);
    auto ya = AugmentOne(cat, x, sources, a), yb = AugmentOne(cat, x, sources, b);
    CHECK(ya.samples == yb.samples);
    CHECK(ya.sample_rate_hz == kSampleRate);
  }
  CHECK_THROWS_AS(AugmentOne(Category::kAdditive, x, sources, data), UsageError);
  CHECK(ParseCategory("signal") == Category::kSignal);
  CHECK_THROWS_AS(ParseCategory("codec"), UsageError);
}

TEST_CASE("manifest augmentation tags origins and is order independent") {
  test::TempDir dir;
  Rng rng(12);
  Manifest in(LabelSet({"a"}));
  for (int i = 0; i < 3; ++i) {
    auto path = dir.path() / ("u" + std::to_string(i) + ".wav");
    WriteWav(path, Noise(rng, 4000, 0.1));
    UtteranceRecord r;
    r.id = "u" + std::to_string(i);
    r.path = path;
    r.language = "a";
    r.session = "s" + std::to_string(i);
    r.duration_s = 0.5;
    in.Add(r);
  }
  AugmentJob job;
  job.category = Category::kSignal;
  job.seed = 5;
  job.out_dir = dir.path() / "out1";
  job.copies_per_utterance = 2;
  auto m1 = AugmentManifest(in, job);
  CHECK(m1.size() == 6);
  for (const auto &r : m1.records()) CHECK(r.origin == Origin::kSignal);
  auto recs = in.records();
  std::reverse(recs.begin(), recs.end());
  Manifest rev(in.labels(), recs);
  job.out_dir = dir.path() / "out2";
  auto m2 = AugmentManifest(rev, job);
  for (const auto &r : m1.records()) {
    auto i = m2.Find(r.id);
    REQUIRE(i.has_value());
    CHECK(ReadAudio(r.path).samples == ReadAudio(m2[*i].path).samples);
  }
}

}  // TEST_SUITE

}  // namespace
}  // namespace lidkit
