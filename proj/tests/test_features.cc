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
#include <fstream>
#include <numbers>

#include "lidkit/feature_archive.h"
#include "lidkit/features.h"
#include "lidkit/rng.h"
#include "oracles.h"
#include "test_util.h"

namespace lidkit {
namespace {

AudioBuffer Tone(double hz, double seconds, double amp = 0.5) {
  AudioBuffer a;
  a.samples.resize(static_cast<size_t>(seconds * kSampleRate));
  for (size_t n = 0; n < a.size(); ++n)
    a.samples[n] = amp * std::sin(2.0 * std::numbers::pi * hz * n / kSampleRate);
  return a;
}

AudioBuffer WhiteNoise(Rng &rng, size_t n, double amp) {
  AudioBuffer a;
  a.samples.resize(n);
  for (auto &s : a.samples) s = amp * rng.Uniform(-1.0, 1.0);
  return a;
}

FeatureMatrix RandomFeatures(Rng &rng, int frames, int dims) {
  FeatureMatrix f;
  f.data.resize(frames, dims);
  for (Eigen::Index i = 0; i < f.data.size(); ++i) f.data.data()[i] = rng.Normal();
  return f;
}

TEST_SUITE("features") {

TEST_CASE("frame count law") {
  FrameConfig cfg;
  for (size_t n : {0, 1, 199, 200, 201, 279, 280, 281, 8000, 12345}) {
    AudioBuffer a;
    a.samples.assign(n, 0.1);
    int expect = n < 200 ? 0 : 1 + static_cast<int>((n - 200) / 80);
    CHECK(FrameSignal(a, cfg).rows() == expect);
  }
}

TEST_CASE("frame config validation") {
  FrameConfig cfg;
  cfg.window_ms = 40.0;  // 320 samples > 256-point FFT
  CHECK_THROWS_AS(cfg.Validate(), UsageError);
  cfg = {};
  cfg.hop_ms = 30.0;
  CHECK_THROWS_AS(cfg.Validate(), UsageError);
}

TEST_CASE("VAD rejects silence") {
  AudioBuffer a;
  a.samples.assign(8000, 0.0);
  auto mask = VadEnergy(a, {});
  CHECK(mask.size() == 98);
  CHECK(std::count(mask.begin(), mask.end(), true) == 0);
}

TEST_CASE("VAD keeps a tone and drops the following silence") {
  AudioBuffer a = Tone(440.0, 0.5);
  a.samples.resize(8000, 0.0);
  auto mask = VadEnergy(a, {});
  for (size_t f = 0; f < mask.size(); ++f) {
    size_t first = f * 80, last = first + 199;
    if (last < 4000) CHECK(mask[f]);
    if (first >= 4000) CHECK_FALSE(mask[f]);
  }
}

TEST_CASE("VAD keeps every frame of a constant tone") {
  auto mask = VadEnergy(Tone(300.0, 1.0), {});
  CHECK(std::count(mask.begin(), mask.end(), false) == 0);
}

TEST_CASE("mel filterbank energies match a direct DFT summation") {
  Rng rng(100);
  MelFilterbank fbank(40, 256, kSampleRate, 0.0, 4000.0);
  FrameConfig cfg;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    size_t n = 200 + rng.Index(1200);
    AudioBuffer a = WhiteNoise(rng, n, rng.Uniform(0.01, 1.0));
    RowMatrix got = MelEnergies(a, cfg, fbank), want = test::OracleMelEnergies(a, 40);
    REQUIRE(got.rows() == want.rows());
    for (Eigen::Index i = 0; i < got.size(); ++i) {
      double scale = std::max(std::abs(want.data()[i]), 1e-300);
      worst = std::max(worst, std::abs(got.data()[i] - want.data()[i]) / scale);
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("1 kHz sine peaks in the filter centred nearest 1 kHz") {
  MelFilterbank fbank(40, 256, kSampleRate, 0.0, 4000.0);
  RowMatrix e = MelEnergies(Tone(1000.0, 0.5), {}, fbank);
  int nearest = 0;
  for (int m = 1; m < fbank.num_filters(); ++m)
    if (std::abs(fbank.center_hz(m) - 1000.0) < std::abs(fbank.center_hz(nearest) - 1000.0))
      nearest = m;
  Eigen::Index arg;
  e.colwise().sum().maxCoeff(&arg);
  CHECK(arg == nearest);
  RowMatrix o = test::OracleMelEnergies(Tone(1000.0, 0.5), 40);
  o.colwise().sum().maxCoeff(&arg);
  CHECK(arg == nearest);
}

TEST_CASE("mfcc of a DC signal has no speech") {
  AudioBuffer a;
  a.samples.assign(8000, 0.3);
  CHECK_THROWS_AS(Mfcc(a), NoSpeechError);
}

TEST_CASE("mfcc shape and determinism") {
  Rng rng(101);
  AudioBuffer a = WhiteNoise(rng, 8000, 0.3);
  auto x = Mfcc(a), y = Mfcc(a);
  CHECK(x.dims() == 40);
  CHECK(x.kind == FeatureKind::kMfcc40);
  CHECK(x.frames() == 98);
  CHECK(x.data == y.data);
  MfccOptions o;
  o.n_ceps = 16;
  o.include_c0 = false;
  auto z = Mfcc(a, o);
  CHECK(z.dims() == 16);
  CHECK(z.data == x.data.middleCols(1, 16));
}

TEST_CASE("RASTA filter drives a constant trajectory to zero") {
  RowMatrix c = RowMatrix::Constant(300, 3, 5.0);
  RowMatrix r = RastaFilter(c);
  for (int t = 100; t < 300; ++t) CHECK(r.row(t).cwiseAbs().maxCoeff() <= 1e-3 * 5.0);
  for (int t = 10; t < 299; ++t) CHECK(std::abs(r(t + 1, 0)) <= std::abs(r(t, 0)) + 1e-15);
}

TEST_CASE("RASTA-PLP shape and finiteness on white noise") {
  Rng rng(102);
  for (int trial = 0; trial < 1000; ++trial) {
    size_t n = 400 + rng.Index(4000);
    AudioBuffer a = WhiteNoise(rng, n, std::pow(10.0, rng.Uniform(-2.0, 0.0)));
    auto f = RastaPlp(a);
    REQUIRE(f.dims() == 20);
    REQUIRE(f.data.allFinite());
  }
}

TEST_CASE("SDC of constant features is zero") {
  FeatureMatrix base;
  base.data = RowMatrix::Constant(30, 16, 2.5);
  auto s = Sdc(base);
  CHECK(s.dims() == 128);
  CHECK(s.kind == FeatureKind::kMfcc16Sdc112);
  CHECK(s.data.leftCols(16) == base.data);
  CHECK(s.data.rightCols(112).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("SDC hand example on a 3x2 ramp") {
  FeatureMatrix base;
  base.data.resize(3, 2);
  base.data << 0, 10, 1, 20, 2, 30;
  SdcSpec spec{1, 1, 1};
  auto s = Sdc(base, spec);
  RowMatrix want(3, 4);
  want << 0, 10, 1, 10,  //
      1, 20, 2, 20,      //
      2, 30, 1, 10;
  CHECK(s.data == want);
  spec.k = 2;
  auto s2 = Sdc(base, {1, 1, 1});
  CHECK(s2.dims() == 4);
  CHECK_THROWS_AS(Sdc(base, spec), DataError);
}

TEST_CASE("SDC block layout with defaults") {
  Rng rng(103);
  FeatureMatrix base = RandomFeatures(rng, 40, 16);
  auto s = Sdc(base);
  auto row = [&](int t) { return base.data.row(std::clamp(t, 0, 39)); };
  for (int t = 0; t < 40; ++t)
    for (int i = 0; i < 7; ++i) {
      Eigen::RowVectorXd want = row(t + 3 * i + 1) - row(t + 3 * i - 1);
      CHECK(s.data.block(t, 16 * (1 + i), 1, 16) == want);
    }
}

TEST_CASE("SDC is translation equivariant away from the edges") {
  Rng rng(104);
  FeatureMatrix x = RandomFeatures(rng, 41, 16), a, b;
  a.data = x.data.topRows(40);
  b.data = x.data.bottomRows(40);
  auto sa = Sdc(a), sb = Sdc(b);
  SdcSpec spec;
  for (int t = spec.d; t + 1 + (spec.k - 1) * spec.p + spec.d <= 39; ++t)
    CHECK(sb.data.row(t) == sa.data.row(t + 1));
}

TEST_CASE("CMS zero means, single frame and idempotence") {
  Rng rng(105);
  FeatureMatrix x = RandomFeatures(rng, 57, 7);
  x.data.array() += 3.0;
  auto c = Cms(x);
  CHECK(c.data.colwise().mean().cwiseAbs().maxCoeff() <= 1e-9);
  auto cc = Cms(c);
  CHECK((cc.data - c.data).cwiseAbs().maxCoeff() <= 1e-12);
  FeatureMatrix one = RandomFeatures(rng, 1, 5);
  CHECK(Cms(one).data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("chunking examples") {
  Rng rng(106);
  auto sizes = [&](int frames) {
    std::vector<int> out;
    for (const auto &c : Chunk(RandomFeatures(rng, frames, 2))) out.push_back(c.frames());
    return out;
  };
  CHECK(sizes(900) == std::vector<int>{300, 300, 300});
  CHECK(sizes(320) == std::vector<int>{320});
  CHECK(sizes(100) == std::vector<int>{100});
  CHECK(sizes(300) == std::vector<int>{300});
  CHECK(sizes(450) == std::vector<int>{300, 150});
  CHECK(sizes(449) == std::vector<int>{449});
  CHECK(sizes(749) == std::vector<int>{300, 449});
}

TEST_CASE("chunk concatenation reproduces the input") {
  Rng rng(107);
  for (int trial = 0; trial < 200; ++trial) {
    FeatureMatrix x = RandomFeatures(rng, 1 + static_cast<int>(rng.Index(2000)), 3);
    auto chunks = Chunk(x);
    int row = 0;
    for (const auto &c : chunks) {
      REQUIRE(c.data == x.data.middleRows(row, c.frames()));
      row += c.frames();
    }
    CHECK(row == x.frames());
    for (size_t i = 0; i + 1 < chunks.size(); ++i) CHECK(chunks[i].frames() == 300);
  }
}

TEST_CASE("front-end output dimensions") {
  Rng rng(108);
  AudioBuffer a = WhiteNoise(rng, 16000, 0.2);
  CHECK(ExtractFeatures(a, FeatureKind::kMfcc40).dims() == 40);
  CHECK(ExtractFeatures(a, FeatureKind::kPlp20).dims() == 20);
  auto g = ExtractFeatures(a, FeatureKind::kMfcc16Sdc112);
  CHECK(g.dims() == 128);
  CHECK(g.data.colwise().mean().cwiseAbs().maxCoeff() <= 1e-9);
  for (auto k : {FeatureKind::kMfcc40, FeatureKind::kPlp20, FeatureKind::kMfcc16Sdc112})
    CHECK(ParseFeatureKind(FeatureKindName(k)) == k);
  CHECK_THROWS_AS(ParseFeatureKind("fbank"), UsageError);
}

TEST_CASE("feature matrix validation") {
  FeatureMatrix f;
  f.kind = FeatureKind::kPlp20;
  f.data = RowMatrix::Zero(3, 19);
  CHECK_THROWS_AS(f.Validate(), DataError);
  f.data = RowMatrix::Zero(3, 20);
  f.data(1, 1) = std::nan("");
  CHECK_THROWS_AS(f.Validate(), NumericError);
}

TEST_CASE("feature archive round trip") {
  test::TempDir dir;
  Rng rng(109);
  auto path = dir.path() / "feats.ark";
  std::vector<FeatureMatrix> mats = {RandomFeatures(rng, 5, 3), RandomFeatures(rng, 1, 3),
                                     RandomFeatures(rng, 12, 7)};
  mats[2].kind = FeatureKind::kGeneric;
  {
    FeatureArchiveWriter w(path);
    for (size_t i = 0; i < mats.size(); ++i) w.Write("utt" + std::to_string(i), mats[i]);
    CHECK_THROWS_AS(w.Write("bad\tid", mats[0]), DataError);
  }
  FeatureArchiveReader r(path);
  CHECK(r.ids() == std::vector<std::string>{"utt0", "utt1", "utt2"});
  for (int i : {2, 0, 1}) {
    auto got = r.Read("utt" + std::to_string(i));
    RowMatrix want = mats[i].data.cast<float>().cast<double>();
    CHECK(got.data == want);
  }
  CHECK_FALSE(r.contains("utt3"));
  CHECK_THROWS_AS(r.Read("utt3"), DataError);
}

TEST_CASE("feature archive errors") {
  test::TempDir dir;
  CHECK_THROWS_AS(FeatureArchiveReader(dir.path() / "missing.ark"), DataError);
  auto path = dir.path() / "a.ark";
  {
    FeatureArchiveWriter w(path);
    FeatureMatrix f;
    f.data = RowMatrix::Zero(2, 2);
    w.Write("x", f);
  }
  std::ofstream(path.string() + ".idx", std::ios::app) << "x\t12\t2\t2\n";
  CHECK_THROWS_AS(FeatureArchiveReader{path}, DataError);
  std::filesystem::remove(path.string() + ".idx");
  CHECK_THROWS_AS(FeatureArchiveReader{path}, DataError);
  std::ofstream(dir.path() / "junk.ark") << "not an archive";
  CHECK_THROWS_AS(FeatureArchiveReader(dir.path() / "junk.ark"), DataError);
}

}  // TEST_SUITE

}  // namespace
}  // namespace lidkit
