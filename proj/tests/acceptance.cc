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

// Acceptance suite: every criterion runs at its stated tolerance and time
// limit and reports one PASS or FAIL line.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lidkit/augment.h"
#include "lidkit/experiment.h"
#include "lidkit/features.h"
#include "lidkit/fusion.h"
#include "lidkit/gmm.h"
#include "lidkit/metrics.h"
#include "lidkit/nnet/graph.h"
#include "lidkit/nnet/model.h"
#include "lidkit/nnet/train.h"
#include "lidkit/rng.h"
#include "lidkit/synth.h"
#include "oracles.h"

namespace lidkit {
namespace {

namespace fs = std::filesystem;

// Collects failed expectations of one criterion.
class Check {
 public:
  void Expect(bool ok, const std::string &what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) detail_ << (detail_.tellp() > 0 ? "; " : "") << what;
  }
  void Note(const std::string &s) { notes_ << (notes_.tellp() > 0 ? "; " : "") << s; }
  bool ok() const { return failures_ == 0; }
  std::string Summary() const {
    std::string s = notes_.str();
    if (failures_ > 0)
      s += (s.empty() ? "" : "; ") + std::to_string(failures_) + " failed: " + detail_.str();
    return s;
  }

 private:
  int failures_ = 0;
  std::ostringstream detail_, notes_;
};

std::string Fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string Slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

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

FeatureMatrix RandomFeatures(Rng &rng, int frames, int dims) {
  FeatureMatrix f;
  f.data.resize(frames, dims);
  for (Eigen::Index i = 0; i < f.data.size(); ++i) f.data.data()[i] = rng.Normal();
  return f;
}

// ----- metrics ---------------------------------------------------------------

void MetricOracles(Check &c) {
  using metrics::Eer;
  c.Expect(Eer(std::vector<double>{2.0}, std::vector<double>{-2.0}) == 0.0, "eer {+2}/{-2}");
  c.Expect(Eer(std::vector<double>{-1.0}, std::vector<double>{1.0}) == 100.0, "eer {-1}/{+1}");
  c.Expect(Eer(std::vector<double>{3.0, 1.0}, std::vector<double>{2.0, 0.0}) == 50.0,
           "eer {3,1}/{2,0}");
  Rng rng(101);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int k = 2 + static_cast<int>(rng.Index(4));
    auto t = test::RandomTrials(rng, 5 + static_cast<int>(rng.Index(500 / k - 5)), k,
                                rng.Uniform(0.0, 4.0), rep % 3 == 0);
    std::vector<double> tar, non;
    t.Split(&tar, &non);
    auto got = metrics::CPrimary(t);
    auto want = test::OracleCPrimary(t);
    worst = std::max({worst, std::abs(Eer(tar, non) - test::OracleEer(tar, non)),
                      std::abs(got.act - want.act), std::abs(got.min - want.min)});
  }
  c.Expect(worst <= 1e-9, "oracle deviation " + Fmt(worst));
  c.Note("200 trial sets, max deviation " + Fmt(worst));
}

// ----- DSP -------------------------------------------------------------------

void DspOracles(Check &c) {
  Rng rng(102);
  MelFilterbank fbank(40, 256, kSampleRate, 0.0, 4000.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    AudioBuffer a;
    a.samples.resize(200 + rng.Index(1200));
    const double amp = rng.Uniform(0.01, 1.0);
    for (auto &s : a.samples) s = amp * rng.Uniform(-1.0, 1.0);
    RowMatrix got = MelEnergies(a, {}, fbank), want = test::OracleMelEnergies(a, 40);
    if (got.rows() != want.rows()) {
      c.Expect(false, "filterbank frame count");
      continue;
    }
    for (Eigen::Index i = 0; i < got.size(); ++i)
      worst = std::max(worst, std::abs(got.data()[i] - want.data()[i]) /
                                  std::max(std::abs(want.data()[i]), 1e-300));
  }
  c.Expect(worst <= 1e-6, "filterbank relative error " + Fmt(worst));
  c.Note("filterbank max rel err " + Fmt(worst));

  // SDC against deltas computed by hand.
  FeatureMatrix ramp;
  ramp.data.resize(3, 2);
  ramp.data << 0, 10, 1, 20, 2, 30;
  RowMatrix want(3, 4);
  want << 0, 10, 1, 10, 1, 20, 2, 20, 2, 30, 1, 10;
  c.Expect(Sdc(ramp, {1, 1, 1}).data == want, "SDC hand example");
  for (int trial = 0; trial < 20; ++trial) {
    FeatureMatrix base = RandomFeatures(rng, 20 + static_cast<int>(rng.Index(80)), 16);
    const int n = base.frames();
    auto s = Sdc(base);
    auto row = [&](int t) { return base.data.row(std::clamp(t, 0, n - 1)); };
    bool same = s.dims() == 128 && s.data.leftCols(16) == base.data;
    for (int t = 0; t < n && same; ++t)
      for (int i = 0; i < 7; ++i)
        same = same && s.data.block(t, 16 * (1 + i), 1, 16) ==
                           Eigen::RowVectorXd(row(t + 3 * i + 1) - row(t + 3 * i - 1));
    c.Expect(same, "SDC block layout");
  }

  for (int trial = 0; trial < 50; ++trial) {
    FeatureMatrix x = RandomFeatures(rng, 1 + static_cast<int>(rng.Index(300)), 7);
    x.data.array() += rng.Uniform(-5.0, 5.0);
    auto once = Cms(x), twice = Cms(once);
    c.Expect(once.data.colwise().mean().cwiseAbs().maxCoeff() <= 1e-9, "CMS zero mean");
    c.Expect((twice.data - once.data).cwiseAbs().maxCoeff() <= 1e-12, "CMS idempotence");
  }

  auto sizes = [&](int frames) {
    std::vector<int> out;
    for (const auto &ch : Chunk(RandomFeatures(rng, frames, 2))) out.push_back(ch.frames());
    return out;
  };
  c.Expect(sizes(900) == std::vector<int>{300, 300, 300}, "chunk 900");
  c.Expect(sizes(320) == std::vector<int>{320}, "chunk 320");
  c.Expect(sizes(100) == std::vector<int>{100}, "chunk 100");
  c.Expect(sizes(449) == std::vector<int>{449}, "chunk 449");
  c.Expect(sizes(450) == std::vector<int>{300, 150}, "chunk 450");
  for (int trial = 0; trial < 200; ++trial) {
    FeatureMatrix x = RandomFeatures(rng, 1 + static_cast<int>(rng.Index(2000)), 3);
    auto chunks = Chunk(x);
    int row = 0;
    bool ok = true;
    for (size_t i = 0; i < chunks.size(); ++i) {
      ok = ok && chunks[i].data == x.data.middleRows(row, chunks[i].frames());
      ok = ok && (i + 1 == chunks.size() || chunks[i].frames() == 300);
      row += chunks[i].frames();
    }
    c.Expect(ok && row == x.frames(), "chunk partition");
  }
}

// ----- augmentation ----------------------------------------------------------

void AugmentationContracts(Check &c) {
  Rng rng(103);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    AudioBuffer s = Noise(rng, 2000 + rng.Index(6000), rng.Uniform(0.01, 0.3));
    AudioBuffer n = Noise(rng, 500 + rng.Index(9000), rng.Uniform(0.001, 1.0));
    const double snr = rng.Uniform(-5.0, 30.0);
    auto r = augment::MixAdditive(s, n, snr);
    std::vector<double> added(s.size());
    for (size_t i = 0; i < s.size(); ++i)
      added[i] = r.audio.samples[i] / r.output_scale - s.samples[i];
    worst = std::max(worst, std::abs(10.0 * std::log10(Power(s.samples) /
                                                       Power(added)) -
                                     snr));
  }
  c.Expect(worst <= 0.1, "SNR error " + Fmt(worst) + " dB");
  c.Note("max SNR error " + Fmt(worst) + " dB");

  AudioBuffer tone = Tone(500.0, 6000);
  double worst_hz = 0.0;
  for (double k : {-4.0, -2.5, -1.0, 1.0, 2.0, 3.0, 4.0}) {
    auto y = augment::PerturbPitch(tone, k, true);
    c.Expect(y.size() == tone.size(), "pitch length at k=" + Fmt(k));
    if (y.size() != tone.size()) continue;
    std::vector<double> mid(y.samples.begin() + 1000, y.samples.end() - 1000);
    const double err = std::abs(test::OraclePeakHz(mid, kSampleRate, 200.0, 1500.0, 2.0) -
                                500.0 * std::pow(2.0, k / 12.0));
    worst_hz = std::max(worst_hz, err);
    c.Expect(err <= 20.0, "pitch peak at k=" + Fmt(k) + " off by " + Fmt(err) + " Hz");
  }
  for (int trial = 0; trial < 20; ++trial) {
    AudioBuffer z = Noise(rng, 300 + rng.Index(5000), 0.1);
    c.Expect(augment::PerturbPitch(z, rng.Uniform(-4.0, 4.0)).size() == z.size(),
             "pitch length on noise");
  }
  c.Note("max pitch peak error " + Fmt(worst_hz) + " Hz");

  AudioBuffer x = Noise(rng, 8000, 0.1);
  const size_t fast = augment::PerturbSpeed(x, 15.0).size();
  const size_t slow = augment::PerturbSpeed(x, -15.0).size();
  c.Expect(fast == 6957, "speed +15 length " + std::to_string(fast));
  c.Expect(slow == 9412, "speed -15 length " + std::to_string(slow));
}

// ----- GMM -------------------------------------------------------------------

gmm::DiagGmm RandomGmm(Rng &rng, int k, int d, double spread) {
  Vector w(k);
  Matrix m(k, d), v(k, d);
  for (int j = 0; j < k; ++j) {
    w(j) = rng.Uniform(0.2, 1.0);
    for (int i = 0; i < d; ++i) {
      m(j, i) = spread * rng.Normal();
      v(j, i) = rng.Uniform(0.2, 2.0);
    }
  }
  return gmm::DiagGmm(w / w.sum(), m, v);
}

RowMatrix Sample(Rng &rng, const gmm::DiagGmm &g, int n) {
  RowMatrix x(n, g.dim());
  for (int t = 0; t < n; ++t) {
    double r = rng.Uniform(), acc = 0.0;
    int k = g.num_components() - 1;
    for (int j = 0; j < g.num_components(); ++j)
      if (r < (acc += g.weights()(j))) {
        k = j;
        break;
      }
    for (int i = 0; i < g.dim(); ++i)
      x(t, i) = g.means()(k, i) + std::sqrt(g.variances()(k, i)) * rng.Normal();
  }
  return x;
}

void GmmSuite(Check &c) {
  Rng rng(104);
  for (int inst = 0; inst < 50; ++inst) {
    const int k = 1 + static_cast<int>(rng.Index(8)), d = 1 + static_cast<int>(rng.Index(4));
    const int n = 50 + static_cast<int>(rng.Index(400));
    RowMatrix x = Sample(rng, RandomGmm(rng, 1 + static_cast<int>(rng.Index(5)), d, 3.0), n);
    gmm::DiagGmm g = RandomGmm(rng, k, d, 3.0);
    const Vector floor = Vector::Constant(d, 1e-3);
    double prev = -1e300;
    bool monotone = true;
    for (int it = 0; it < 20; ++it) {
      const double ll = gmm::EmStep(x, floor, &g) * n;
      monotone = monotone && ll >= prev - 1e-6;
      prev = ll;
    }
    c.Expect(monotone && g.FrameLogLikes(x).sum() >= prev - 1e-6,
             "EM not monotone on instance " + std::to_string(inst));
  }

  Matrix means(2, 2), vars = Matrix::Constant(2, 2, 0.5);
  means << -3.0, 0.0, 3.0, 1.0;
  Vector w(2);
  w << 0.3, 0.7;
  RowMatrix x = Sample(rng, gmm::DiagGmm(w, means, vars), 5000);
  gmm::UbmOptions o;
  o.num_components = 2;
  o.iters_per_split = 5;
  o.em_iters = 20;
  gmm::DiagGmm fit = gmm::TrainUbm(x, o);
  const int lo = fit.means()(0, 0) < fit.means()(1, 0) ? 0 : 1;
  const double mean_err = std::max((fit.means().row(lo) - means.row(0)).cwiseAbs().maxCoeff(),
                                   (fit.means().row(1 - lo) - means.row(1)).cwiseAbs().maxCoeff());
  c.Expect(mean_err <= 0.1, "K=2 mean error " + Fmt(mean_err));
  c.Note("K=2 mean error " + Fmt(mean_err));

  gmm::DiagGmm ubm = RandomGmm(rng, 6, 3, 2.0);
  RowMatrix data = Sample(rng, RandomGmm(rng, 3, 3, 2.0), 400);
  auto stats = gmm::AccumulateStats(ubm, data);
  for (double r : {0.5, 4.0, 16.0, 100.0}) {
    gmm::DiagGmm a = gmm::MapAdaptMeans(ubm, data, {r});
    for (int k = 0; k < 6; ++k) {
      const double alpha = stats.occupancy(k) / (stats.occupancy(k) + r);
      Eigen::RowVectorXd want =
          alpha * stats.first.row(k) / stats.occupancy(k) + (1.0 - alpha) * ubm.means().row(k);
      c.Expect((a.means().row(k) - want).cwiseAbs().maxCoeff() <= 1e-9, "MAP interpolation");
    }
  }
  gmm::DiagGmm same = gmm::MapAdaptMeans(ubm, data, {1e9});
  c.Expect((same.means() - ubm.means()).cwiseAbs().maxCoeff() <= 1e-5, "MAP r->inf identity");
}

// ----- neural ----------------------------------------------------------------

double GradientCheck(nnet::Arch arch) {
  using namespace nnet;
  ModelSpec spec;
  spec.arch = arch;
  spec.feat_dim = 5;
  spec.channels = 8;
  spec.pre_pool_channels = 12;
  spec.embed_dim = 6;
  spec.num_classes = 3;
  spec.res2_scale = 2;
  spec.se_bottleneck = 4;
  spec.attention_bottleneck = 4;
  TdnnModel model(spec, 7);
  Rng rng(11);
  Segments segs(std::vector<int>(8, 20));
  Matrix feats(5, segs.total());
  for (Eigen::Index i = 0; i < feats.size(); ++i) feats.data()[i] = rng.Normal();
  const std::vector<int> labels = {0, 1, 2, 1, 2, 0, 0, 1};
  auto loss = [&] {
    Graph g;
    ForwardOptions o;
    o.training = true;
    Var w;
    Var e = model.Embed(g, feats, segs, o, &w);
    return g.value(AamLoss(g, e, w, labels, spec.logit_scale, 0.2))(0, 0);
  };
  auto &params = model.params();
  for (auto &p : params) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
  {
    Graph g;
    ForwardOptions o;
    o.training = true;
    Var w;
    Var e = model.Embed(g, feats, segs, o, &w);
    g.Backward(AamLoss(g, e, w, labels, spec.logit_scale, 0.2));
  }
  const double base = loss();
  double worst = 0.0;
  for (auto &p : params)
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double keep = p.value(i);
      auto differences = [&](double h, double *fwd, double *bwd) {
        p.value(i) = keep + h;
        const double up = loss();
        p.value(i) = keep - h;
        const double down = loss();
        p.value(i) = keep;
        *fwd = (up - base) / h;
        *bwd = (base - down) / h;
      };
      double fwd, bwd;
      differences(1e-5, &fwd, &bwd);
      if (std::abs(fwd - bwd) > 1e-3 * std::max({std::abs(fwd), std::abs(bwd), 1.0}))
        differences(1e-6, &fwd, &bwd);
      const double numeric = 0.5 * (fwd + bwd);
      worst = std::max(worst, std::abs(numeric - p.grad(i)) /
                                  std::max({std::abs(numeric), std::abs(p.grad(i)), 1e-6}));
    }
  return worst;
}

void NeuralSuite(Check &c) {
  using namespace nnet;
  for (Arch arch : {Arch::kXvector, Arch::kEcapa, Arch::kResnetTdnn}) {
    const double err = GradientCheck(arch);
    c.Expect(err <= 1e-3, ArchName(arch) + " gradient rel err " + Fmt(err));
    c.Note(ArchName(arch) + " grad err " + Fmt(err, 2));
  }

  Rng rng(105);
  const int dim = 8;
  std::vector<LabeledChunk> train, val;
  for (int i = 0; i < 48; ++i) {
    LabeledChunk ch;
    ch.label = i % 2;
    ch.frames = RowMatrix(40, dim);
    for (int t = 0; t < 40; ++t)
      for (int d = 0; d < dim; ++d)
        ch.frames(t, d) = rng.Normal() + (d < 2 ? (ch.label ? 1.5 : -1.5) : 0.0);
    (i < 40 ? train : val).push_back(std::move(ch));
  }
  ModelSpec spec;
  spec.arch = Arch::kXvector;
  spec.feat_dim = dim;
  spec.channels = 16;
  spec.pre_pool_channels = 24;
  spec.embed_dim = 8;
  spec.num_classes = 2;
  TdnnModel model(spec, 1);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.seed = 4;
  Train(&model, train, val, cfg);
  const double acc = Accuracy(model, train);
  c.Expect(acc == 1.0, "training accuracy " + Fmt(acc));
  c.Note("overfit accuracy " + Fmt(acc));

  // Scripted validation losses: rises in epochs 2 and 3 halve the rate for
  // epoch 4; the counter then starts over.
  PlateauSchedule s(1.0, 0.5, 2);
  std::vector<double> used;
  for (double v : {1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.2, 1.3}) {
    used.push_back(s.lr());
    s.Observe(v);
  }
  c.Expect(used == std::vector<double>{1.0, 1.0, 1.0, 0.5, 0.5, 0.25, 0.25, 0.25},
           "plateau schedule trace");
  c.Expect(s.lr() == 0.25, "plateau schedule final rate");
}

// ----- fusion ----------------------------------------------------------------

ScoreMatrix MakeScores(const std::string &name, const Matrix &m) {
  ScoreMatrix s;
  s.system = name;
  std::vector<std::string> codes;
  for (Eigen::Index l = 0; l < m.cols(); ++l) codes.push_back("l" + std::to_string(l));
  s.labels = LabelSet(codes);
  for (Eigen::Index u = 0; u < m.rows(); ++u) s.ids.push_back("u" + std::to_string(u));
  s.scores = m;
  return s;
}

Matrix Informative(Rng &rng, const std::vector<int> &labels, int k, double gain) {
  Matrix m(labels.size(), k);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Normal();
  for (size_t u = 0; u < labels.size(); ++u) m(u, labels[u]) += gain;
  return m;
}

void FusionSuite(Check &c) {
  Rng rng(106);
  const int n = 700, k = 5;
  std::vector<int> labels(n);
  for (int u = 0; u < n; ++u) labels[u] = u % k;

  Matrix s1 = Informative(rng, labels, k, 1.0), s2 = Informative(rng, labels, k, 0.3);
  std::vector<const Matrix *> ptrs = {&s1, &s2};
  for (int trial = 0; trial < 100; ++trial) {
    Vector a0 = Vector::Random(2) * 3.0, a1 = Vector::Random(2) * 3.0;
    Vector b0 = Vector::Random(k) * 2.0, b1 = Vector::Random(k) * 2.0;
    const double f0 = fusion::FusionObjective(ptrs, labels, a0, b0, 1e-4);
    const double f1 = fusion::FusionObjective(ptrs, labels, a1, b1, 1e-4);
    const double fm =
        fusion::FusionObjective(ptrs, labels, 0.5 * (a0 + a1), 0.5 * (b0 + b1), 1e-4);
    c.Expect(fm <= 0.5 * (f0 + f1) + 1e-12, "convexity midpoint");
  }

  std::vector<ScoreMatrix> systems;
  for (int i = 0; i < 4; ++i)
    systems.push_back(
        MakeScores("s" + std::to_string(i), Informative(rng, labels, k, 0.5 + 0.5 * i)));
  fusion::FusionOptions opts;
  opts.l2 = 0.0;
  double best = 1e300;
  for (const auto &s : systems) {
    auto w = fusion::FitFusion({s}, labels, opts);
    best = std::min(best, fusion::CrossEntropy(fusion::ApplyFusion(w, {s}).scores, labels));
  }
  auto w = fusion::FitFusion(systems, labels, opts);
  const double fused = fusion::CrossEntropy(fusion::ApplyFusion(w, systems).scores, labels);
  c.Expect(fused <= best + 1e-6, "fused CE " + Fmt(fused, 8) + " > best " + Fmt(best, 8));
  c.Note("fused CE " + Fmt(fused, 5) + " vs best single " + Fmt(best, 5));

  auto id = fusion::ApplyFusion({{"s0"}, {1.0}, Vector::Zero(k)}, {systems[0]});
  c.Expect(id.scores == systems[0].scores && id.ids == systems[0].ids, "identity fusion");
}

// ----- end to end ------------------------------------------------------------

struct EndToEnd {
  fs::path root;
  synth::CorpusLayout layout;
  std::vector<experiment::RunResult> runs;
  std::vector<std::string> systems = {"S0", "S1", "S3", "S8"};
  bool ready = false;
};

experiment::ExperimentConfig E2eConfig(const EndToEnd &e, const std::string &system,
                                       const fs::path &work) {
  auto cfg = experiment::Preset(system, experiment::Profile::kDesk);
  cfg.manifest = e.layout.manifest;
  cfg.noise_dir = e.layout.noise_dir;
  cfg.rir_dir = e.layout.rir_dir;
  cfg.labels = "syn0,syn1,syn2,syn3,syn4,syn5";
  cfg.work_dir = work;
  cfg.seed = 1;
  return cfg;
}

void SyntheticEndToEnd(EndToEnd &e, Check &c) {
  synth::CorpusSpec spec;
  spec.seed = 7;
  e.layout = synth::GenerateCorpus(e.root / "corpus", spec);
  for (const auto &system : e.systems) {
    const auto t0 = std::chrono::steady_clock::now();
    e.runs.push_back(experiment::RunExperiment(E2eConfig(e, system, e.root / "work")));
    std::cout << "  " << system << " finished in "
              << Fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count())
              << " s" << std::endl;
  }
  e.ready = true;
  std::vector<fs::path> dirs;
  for (const auto &r : e.runs) dirs.push_back(r.run_dir);
  auto report = experiment::FusionReportFromRuns(dirs);
  std::cout << experiment::RenderRunReport(report);
  double best = 100.0;
  for (size_t i = 0; i < e.systems.size(); ++i) {
    const auto &row = report.rows[i];
    c.Expect(row.eer < 40.0, row.name + " EER " + Fmt(row.eer) + "%");
    best = std::min(best, row.eer);
  }
  const double fused = report.rows.back().eer;
  c.Expect(fused <= best + 0.5, "fused EER " + Fmt(fused) + "% vs best " + Fmt(best) + "%");
  c.Note("best single EER " + Fmt(best) + "%, fused " + Fmt(fused) + "%");
}

void Determinism(EndToEnd &e, Check &c) {
  if (!e.ready) {
    c.Expect(false, "end-to-end runs unavailable");
    return;
  }
  // Fresh work directory and a different worker count; the S0 and S8
  // pipelines are rerun from the corpus.
  for (size_t i = 0; i < e.systems.size(); ++i) {
    if (e.systems[i] != "S0" && e.systems[i] != "S8") continue;
    auto cfg = E2eConfig(e, e.systems[i], e.root / "rerun");
    cfg.threads = 2;
    auto again = experiment::RunExperiment(cfg);
    c.Expect(!again.reused, e.systems[i] + " rerun was served from cache");
    for (auto [a, b] : {std::pair{e.runs[i].scores_val, again.scores_val},
                        {e.runs[i].scores_train, again.scores_train}})
      c.Expect(Slurp(a) == Slurp(b), e.systems[i] + " " + a.filename().string() + " differs");
    c.Note(e.systems[i] + " scores identical");
  }
}

void Throughput(EndToEnd &e, Check &c) {
  if (!e.ready) {
    c.Expect(false, "end-to-end runs unavailable");
    return;
  }
  experiment::RunReport report;
  for (const auto &r : e.runs) report.bench.push_back(experiment::Benchmark(r.run_dir, 100));
  const fs::path out = e.root / "throughput.tsv";
  experiment::WriteRunReport(out, report);
  c.Expect(fs::exists(out), "throughput report missing");
  for (const auto &b : report.bench) {
    const double per_utt = b.seconds / b.files;
    c.Expect(per_utt < 0.5, b.system + " " + Fmt(per_utt) + " s/utt");
    c.Note(b.system + " " + Fmt(per_utt, 2) + " s/utt, " + Fmt(b.peak_rss_mb, 4) + " MB");
  }
  c.Note("report " + out.string());
}

struct Criterion {
  std::string name;
  double limit_s;  // 0: no time limit
  bool blocking;
  std::function<void(Check &)> run;
};

}  // namespace
}  // namespace lidkit

int main(int argc, char **argv) {
  using namespace lidkit;
  CLI::App app{"lidkit acceptance suite"};
  std::string work = (fs::temp_directory_path() / "lidkit-acceptance").string();
  std::vector<std::string> only;
  bool keep = false;
  app.add_option("--work-dir", work, "Scratch directory for the end-to-end study");
  app.add_option("--only", only, "Run only these criteria");
  app.add_flag("--keep", keep, "Keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  TuneAllocator();
  EndToEnd e2e;
  e2e.root = work;
  fs::remove_all(e2e.root);
  fs::create_directories(e2e.root);

  const std::vector<Criterion> criteria = {
      {"metric-oracles", 10, true, MetricOracles},
      {"dsp-oracles", 30, true, DspOracles},
      {"augmentation", 30, true, AugmentationContracts},
      {"gmm", 60, true, GmmSuite},
      {"neural", 300, true, NeuralSuite},
      {"fusion", 30, true, FusionSuite},
      {"end-to-end", 1200, true, [&](Check &c) { SyntheticEndToEnd(e2e, c); }},
      {"determinism", 0, true, [&](Check &c) { Determinism(e2e, c); }},
      {"throughput", 0, false, [&](Check &c) { Throughput(e2e, c); }},
  };

  int failed = 0;
  for (const auto &crit : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), crit.name) == only.end()) continue;
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      crit.run(c);
    } catch (const std::exception &ex) {
      c.Expect(false, std::string("exception: ") + ex.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (crit.limit_s > 0 && secs >= crit.limit_s)
      c.Expect(false, "took " + Fmt(secs) + " s, limit " + Fmt(crit.limit_s, 6) + " s");
    std::cout << (c.ok() ? "PASS " : "FAIL ") << std::left << std::setw(16) << crit.name
              << std::right << std::setw(8) << std::fixed << std::setprecision(1) << secs << " s"
              << std::defaultfloat << (crit.limit_s > 0 ? "  (limit " + Fmt(crit.limit_s, 6) + " s)" : "")
              << (crit.blocking ? "" : "  (report only)") << "  " << c.Summary() << std::endl;
    if (!c.ok() && crit.blocking) ++failed;
  }
  if (!keep) fs::remove_all(e2e.root);
  return failed == 0 ? 0 : 1;
}
