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

#include "lidkit/fusion.h"
#include "lidkit/rng.h"
#include "test_util.h"

namespace lidkit {
namespace {

using fusion::ApplyFusion;
using fusion::FitFusion;
using fusion::FusionWeights;

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

// Labels drawn from softmax(logits) row by row.
std::vector<int> SampleLabels(Rng &rng, const Matrix &logits) {
  std::vector<int> labels(logits.rows());
  for (Eigen::Index u = 0; u < logits.rows(); ++u) {
    Eigen::RowVectorXd p = (logits.row(u).array() - logits.row(u).maxCoeff()).exp();
    p /= p.sum();
    double r = rng.Uniform(), acc = 0.0;
    labels[u] = static_cast<int>(logits.cols()) - 1;
    for (Eigen::Index l = 0; l < p.size(); ++l) {
      acc += p(l);
      if (r < acc) {
        labels[u] = static_cast<int>(l);
        break;
      }
    }
  }
  return labels;
}

Matrix RandomMatrix(Rng &rng, int n, int k, double scale) {
  Matrix m(n, k);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.Normal();
  return m;
}

// Informative scores: the true class boosted by `gain`, plus noise.
Matrix Informative(Rng &rng, const std::vector<int> &labels, int k, double gain) {
  Matrix m = RandomMatrix(rng, static_cast<int>(labels.size()), k, 1.0);
  for (size_t u = 0; u < labels.size(); ++u) m(u, labels[u]) += gain;
  return m;
}

std::vector<int> CyclicLabels(int n, int k) {
  std::vector<int> l(n);
  for (int u = 0; u < n; ++u) l[u] = u % k;
  return l;
}

TEST_SUITE("fusion") {

TEST_CASE("identity fusion reproduces the input exactly") {
  Rng rng(1);
  auto s = MakeScores("a", RandomMatrix(rng, 10, 3, 2.0));
  FusionWeights w{{"a"}, {1.0}, Vector::Zero(3)};
  auto out = ApplyFusion(w, {s});
  CHECK(out.scores == s.scores);
  CHECK(out.ids == s.ids);
}

TEST_CASE("equal weights on identical systems") {
  Rng rng(2);
  auto s = MakeScores("a", RandomMatrix(rng, 6, 4, 1.0));
  auto t = s;
  t.system = "b";
  Vector beta(4);
  beta << 0.5, -1.0, 0.25, 0.0;
  FusionWeights w{{"a", "b"}, {0.5, 0.5}, beta};
  auto out = ApplyFusion(w, {s, t});
  Matrix expect = s.scores.rowwise() + beta.transpose();
  CHECK((out.scores - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("hand fusion example") {
  Matrix m(1, 2);
  m << 0.5, 0.0;
  Vector beta(2);
  beta << 1.0, -1.0;
  auto out = ApplyFusion({{"a"}, {2.0}, beta}, {MakeScores("a", m)});
  CHECK(out.scores(0, 0) == 2.0);
  CHECK(out.scores(0, 1) == -1.0);
}

TEST_CASE("calibrated single system fits to the identity") {
  Rng rng(3);
  const int n = 20000, k = 3;
  Matrix logits = RandomMatrix(rng, n, k, 1.5);
  auto labels = SampleLabels(rng, logits);
  fusion::FusionOptions opts;
  opts.l2 = 0.0;
  auto w = FitFusion({MakeScores("a", logits)}, labels, opts);
  CHECK(w.alpha[0] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(w.beta.cwiseAbs().maxCoeff() <= 0.05);
}

TEST_CASE("a pure-noise system gets a small weight") {
  Rng rng(4);
  const int n = 3000, k = 4;
  auto labels = CyclicLabels(n, k);
  auto good = MakeScores("good", Informative(rng, labels, k, 2.0));
  auto noise = MakeScores("noise", RandomMatrix(rng, n, k, 1.0));
  fusion::FusionOptions opts;
  opts.l2 = 1e-3;
  auto w = FitFusion({good, noise}, labels, opts);
  CHECK(std::abs(w.alpha[1]) <= 0.1 * std::abs(w.alpha[0]));
}

TEST_CASE("a class absent from the labels is rejected") {
  Rng rng(5);
  auto s = MakeScores("a", RandomMatrix(rng, 9, 3, 1.0));
  CHECK_THROWS_AS(FitFusion({s}, std::vector<int>(9, 0)), DataError);
}

TEST_CASE("misaligned systems are rejected") {
  Rng rng(6);
  auto a = MakeScores("a", RandomMatrix(rng, 4, 2, 1.0));
  auto b = a;
  b.system = "b";
  std::swap(b.ids[0], b.ids[1]);
  FusionWeights w{{"a", "b"}, {1.0, 1.0}, Vector::Zero(2)};
  CHECK_THROWS_AS(ApplyFusion(w, {a, b}), DataError);
  CHECK_THROWS_AS(FitFusion({a, b}, {0, 1, 0, 1}), DataError);
}

TEST_CASE("objective is convex along random segments") {
  Rng rng(7);
  const int n = 200, k = 3;
  auto labels = CyclicLabels(n, k);
  Matrix s1 = Informative(rng, labels, k, 1.0), s2 = RandomMatrix(rng, n, k, 2.0);
  std::vector<const Matrix *> ptrs = {&s1, &s2};
  for (int trial = 0; trial < 100; ++trial) {
    Vector a0 = Vector::Random(2) * 3.0, a1 = Vector::Random(2) * 3.0;
    Vector b0 = Vector::Random(k) * 2.0, b1 = Vector::Random(k) * 2.0;
    double f0 = fusion::FusionObjective(ptrs, labels, a0, b0, 1e-4);
    double f1 = fusion::FusionObjective(ptrs, labels, a1, b1, 1e-4);
    double fm = fusion::FusionObjective(ptrs, labels, 0.5 * (a0 + a1), 0.5 * (b0 + b1), 1e-4);
    CHECK(fm <= 0.5 * (f0 + f1) + 1e-12);
  }
}

TEST_CASE("objective gradient matches finite differences") {
  Rng rng(8);
  const int n = 50, k = 3;
  auto labels = CyclicLabels(n, k);
  Matrix s1 = Informative(rng, labels, k, 1.0), s2 = RandomMatrix(rng, n, k, 1.0);
  std::vector<const Matrix *> ptrs = {&s1, &s2};
  Vector a(2), b(3);
  a << 0.7, -0.3;
  b << 0.1, 0.2, -0.3;
  Vector g;
  fusion::FusionObjective(ptrs, labels, a, b, 1e-2, &g);
  const double h = 1e-6;
  for (int i = 0; i < 5; ++i) {
    Vector ap = a, am = a, bp = b, bm = b;
    if (i < 2) {
      ap(i) += h;
      am(i) -= h;
    } else {
      bp(i - 2) += h;
      bm(i - 2) -= h;
    }
    double num = (fusion::FusionObjective(ptrs, labels, ap, bp, 1e-2) -
                  fusion::FusionObjective(ptrs, labels, am, bm, 1e-2)) /
                 (2 * h);
    CHECK(g(i) == doctest::Approx(num).epsilon(1e-6));
  }
}

TEST_CASE("fused cross-entropy is no worse than the best calibrated single system") {
  Rng rng(9);
  const int n = 700, k = 5;
  auto labels = CyclicLabels(n, k);
  std::vector<ScoreMatrix> systems;
  for (int i = 0; i < 4; ++i)
    systems.push_back(MakeScores("s" + std::to_string(i), Informative(rng, labels, k, 0.5 + 0.5 * i)));
  fusion::FusionOptions opts;
  opts.l2 = 0.0;
  double best_single = 1e300;
  for (const auto &s : systems) {
    auto w = FitFusion({s}, labels, opts);
    best_single = std::min(best_single, fusion::CrossEntropy(ApplyFusion(w, {s}).scores, labels));
  }
  fusion::FitInfo info;
  auto w = FitFusion(systems, labels, opts, &info);
  double fused = fusion::CrossEntropy(ApplyFusion(w, systems).scores, labels);
  CHECK(fused <= best_single + 1e-6);
  CHECK(info.grad_norm <= 1e-7);
}

TEST_CASE("solution improves on the best single-system starting point") {
  Rng rng(10);
  const int n = 300, k = 3;
  auto labels = CyclicLabels(n, k);
  Matrix s1 = Informative(rng, labels, k, 1.0), s2 = Informative(rng, labels, k, 1.5);
  std::vector<const Matrix *> ptrs = {&s1, &s2};
  auto w = FitFusion({MakeScores("a", s1), MakeScores("b", s2)}, labels);
  Vector alpha = Eigen::Map<const Vector>(w.alpha.data(), 2);
  double at_solution = fusion::FusionObjective(ptrs, labels, alpha, w.beta, 1e-4);
  for (int i = 0; i < 2; ++i) {
    Vector e = Vector::Zero(2);
    e(i) = 1.0;
    CHECK(at_solution <= fusion::FusionObjective(ptrs, labels, e, Vector::Zero(k), 1e-4));
  }
}

TEST_CASE("fusion is affine in the scores") {
  Rng rng(11);
  auto s = MakeScores("a", RandomMatrix(rng, 8, 3, 1.0));
  auto scaled = s;
  scaled.scores *= 4.0;
  Vector beta = Vector::Random(3);
  auto x = ApplyFusion({{"a"}, {2.0}, beta}, {s});
  auto y = ApplyFusion({{"a"}, {0.5}, beta}, {scaled});
  CHECK((x.scores - y.scores).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("argmax is invariant to a common offset") {
  Rng rng(12);
  auto s = MakeScores("a", RandomMatrix(rng, 30, 4, 1.0));
  Vector beta = Vector::Random(4);
  auto x = ApplyFusion({{"a"}, {1.3}, beta}, {s});
  auto y = ApplyFusion({{"a"}, {1.3}, (beta.array() + 3.0).matrix()}, {s});
  for (int u = 0; u < 30; ++u) {
    Eigen::Index i, j;
    x.scores.row(u).maxCoeff(&i);
    y.scores.row(u).maxCoeff(&j);
    CHECK(i == j);
  }
}

TEST_CASE("weights file round trip") {
  test::TempDir dir;
  Vector beta(3);
  beta << 0.125, -2.5, 1e-17;
  FusionWeights w{{"S0", "S8"}, {0.75, 1.0 / 3.0}, beta};
  fusion::WriteFusionWeights(dir.path() / "w.tsv", w);
  auto r = fusion::ReadFusionWeights(dir.path() / "w.tsv");
  CHECK(r.systems == w.systems);
  CHECK(r.alpha == w.alpha);
  CHECK(r.beta == w.beta);
}

}  // TEST_SUITE

}  // namespace
}  // namespace lidkit
