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

#include "lidkit/gmm.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "lidkit/binary_io.h"
#include "lidkit/rng.h"

namespace lidkit::gmm {

namespace {

constexpr Eigen::Index kBlock = 4096;
constexpr double kMinWeight = 1e-10;
constexpr char kGmmMagic[9] = "LIDKGMM\x01";

}  // namespace

DiagGmm::DiagGmm(Vector weights, Matrix means, Matrix variances)
    : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
  if (weights_.size() == 0) throw UsageError("GMM needs at least one component");
  if (means_.rows() != weights_.size() || variances_.rows() != weights_.size() ||
      means_.cols() != variances_.cols())
    throw UsageError("GMM parameter shapes disagree");
  if ((variances_.array() <= 0.0).any()) throw NumericError("GMM variance must be positive");
  if ((weights_.array() < 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-9)
    throw NumericError("GMM weights must be a probability vector");
  Precompute();
}

void DiagGmm::Precompute() {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  inv_var_ = variances_.cwiseInverse();
  mean_invvar_ = means_.cwiseProduct(inv_var_);
  gconst_.resize(weights_.size());
  for (Eigen::Index k = 0; k < weights_.size(); ++k) {
    gconst_(k) = std::log(std::max(weights_(k), kMinWeight)) -
                 0.5 * (dim() * log2pi + variances_.row(k).array().log().sum() +
                        means_.row(k).cwiseProduct(mean_invvar_.row(k)).sum());
  }
}

Matrix DiagGmm::ComponentLogLikes(const RowMatrix &frames) const {
  if (frames.cols() != dim())
    throw DataError("feature dim " + std::to_string(frames.cols()) +
                    " does not match GMM dim " + std::to_string(dim()));
  Matrix ll = frames * mean_invvar_.transpose();
  ll.noalias() -= 0.5 * (frames.array().square().matrix() * inv_var_.transpose());
  ll.rowwise() += gconst_.transpose();
  return ll;
}

Vector DiagGmm::FrameLogLikes(const RowMatrix &frames) const {
  Vector out(frames.rows());
  for (Eigen::Index start = 0; start < frames.rows(); start += kBlock) {
    Eigen::Index n = std::min(kBlock, frames.rows() - start);
    out.segment(start, n) = RowLogSumExp(ComponentLogLikes(frames.middleRows(start, n)));
  }
  return out;
}

bool DiagGmm::operator==(const DiagGmm &other) const {
  return weights_ == other.weights_ && means_ == other.means_ &&
         variances_ == other.variances_;
}

Vector RowLogSumExp(const Matrix &m) {
  Vector mx = m.rowwise().maxCoeff();
  Vector out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out(i) = mx(i) + std::log((m.row(i).array() - mx(i)).exp().sum());
  return out;
}

double EmStep(const RowMatrix &frames, const Vector &var_floor, DiagGmm *gmm) {
  const int k_count = gmm->num_components(), d = gmm->dim();
  Vector occ = Vector::Zero(k_count);
  Matrix first = Matrix::Zero(k_count, d), second = Matrix::Zero(k_count, d);
  double total_ll = 0.0;
  for (Eigen::Index start = 0; start < frames.rows(); start += kBlock) {
    Eigen::Index n = std::min(kBlock, frames.rows() - start);
    auto x = frames.middleRows(start, n);
    Matrix post = gmm->ComponentLogLikes(x);
    Vector lse = RowLogSumExp(post);
    total_ll += lse.sum();
    post = (post.colwise() - lse).array().exp().matrix();
    occ += post.colwise().sum().transpose();
    first.noalias() += post.transpose() * x;
    second.noalias() += post.transpose() * x.array().square().matrix();
  }
  const double n_frames = static_cast<double>(frames.rows());
  Vector w(k_count);
  Matrix means = gmm->means(), vars = gmm->variances();
  for (int k = 0; k < k_count; ++k) {
    w(k) = occ(k) / n_frames;
    if (occ(k) <= 1e-8) continue;
    means.row(k) = first.row(k) / occ(k);
    Eigen::RowVectorXd v = second.row(k) / occ(k) - means.row(k).cwiseAbs2();
    vars.row(k) = v.cwiseMax(var_floor.transpose());
  }
  w = w.cwiseMax(kMinWeight);
  w /= w.sum();
  *gmm = DiagGmm(std::move(w), std::move(means), std::move(vars));
  return total_ll / n_frames;
}

namespace {

double AverageLogLike(const DiagGmm &gmm, const RowMatrix &frames) {
  return gmm.FrameLogLikes(frames).mean();
}

// Splits the heaviest components along a random-sign direction scaled by
// 0.2 standard deviations until `target` components exist (at most doubling).
DiagGmm Split(const DiagGmm &gmm, int target, Rng &rng) {
  const int k_now = gmm.num_components(), d = gmm.dim();
  const int n_split = std::min(k_now, target - k_now);
  std::vector<int> order(k_now);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return gmm.weights()(a) > gmm.weights()(b);
  });
  Vector w(k_now + n_split);
  Matrix means(k_now + n_split, d), vars(k_now + n_split, d);
  w.head(k_now) = gmm.weights();
  means.topRows(k_now) = gmm.means();
  vars.topRows(k_now) = gmm.variances();
  for (int i = 0; i < n_split; ++i) {
    int k = order[i], j = k_now + i;
    Eigen::RowVectorXd dir(d);
    for (int c = 0; c < d; ++c) dir(c) = (rng.NextU64() & 1) ? 1.0 : -1.0;
    Eigen::RowVectorXd offset = 0.2 * dir.cwiseProduct(gmm.variances().row(k).cwiseSqrt());
    w(k) *= 0.5;
    w(j) = w(k);
    means.row(j) = gmm.means().row(k) - offset;
    means.row(k) = gmm.means().row(k) + offset;
    vars.row(j) = gmm.variances().row(k);
  }
  return DiagGmm(std::move(w), std::move(means), std::move(vars));
}

}  // namespace

DiagGmm TrainUbm(const RowMatrix &frames, const UbmOptions &opts, EmTrace *trace) {
  if (frames.rows() == 0 || frames.cols() == 0) throw DataError("UBM training on empty data");
  if (opts.num_components < 1) throw UsageError("num_components must be >= 1");
  if (opts.num_components > frames.rows())
    throw DataError("more mixture components (" + std::to_string(opts.num_components) +
                    ") than frames (" + std::to_string(frames.rows()) + ")");
  if (!frames.allFinite()) throw NumericError("non-finite UBM training data");

  const double n = static_cast<double>(frames.rows());
  Eigen::RowVectorXd mean = frames.colwise().mean();
  Eigen::RowVectorXd var = frames.array().square().matrix().colwise().sum() / n - mean.cwiseAbs2();
  Vector global_var = var.transpose().cwiseMax(1e-12);
  Vector floor = opts.var_floor_factor * global_var;

  DiagGmm gmm(Vector::Ones(1), Matrix(mean), Matrix(global_var.cwiseMax(floor).transpose()));
  Rng rng = Rng::Derive(opts.seed, "ubm");
  auto run_em = [&](int iters) {
    for (int it = 0; it < iters; ++it) {
      double ll = EmStep(frames, floor, &gmm);
      if (trace) {
        trace->num_components.push_back(gmm.num_components());
        trace->avg_loglike.push_back(ll);
      }
    }
    if (trace && iters > 0) {
      trace->num_components.push_back(gmm.num_components());
      trace->avg_loglike.push_back(AverageLogLike(gmm, frames));
    }
  };
  while (gmm.num_components() < opts.num_components) {
    gmm = Split(gmm, opts.num_components, rng);
    if (gmm.num_components() < opts.num_components) run_em(opts.iters_per_split);
  }
  run_em(opts.em_iters);
  return gmm;
}

SufficientStats AccumulateStats(const DiagGmm &gmm, const RowMatrix &frames) {
  SufficientStats s{Vector::Zero(gmm.num_components()),
                    Matrix::Zero(gmm.num_components(), gmm.dim())};
  for (Eigen::Index start = 0; start < frames.rows(); start += kBlock) {
    Eigen::Index n = std::min(kBlock, frames.rows() - start);
    auto x = frames.middleRows(start, n);
    Matrix post = gmm.ComponentLogLikes(x);
    Vector lse = RowLogSumExp(post);
    post = (post.colwise() - lse).array().exp().matrix();
    s.occupancy += post.colwise().sum().transpose();
    s.first.noalias() += post.transpose() * x;
  }
  return s;
}

DiagGmm MapAdaptMeans(const DiagGmm &ubm, const RowMatrix &frames, const MapConfig &cfg) {
  if (!(cfg.relevance > 0.0)) throw UsageError("relevance factor must be positive");
  if (frames.rows() == 0) {
    Warn("MAP adaptation with no frames; returning the UBM unchanged");
    return ubm;
  }
  if (frames.cols() != ubm.dim())
    throw DataError("adaptation data dim " + std::to_string(frames.cols()) +
                    " does not match UBM dim " + std::to_string(ubm.dim()));
  SufficientStats s = AccumulateStats(ubm, frames);
  Matrix means = ubm.means();
  for (int k = 0; k < ubm.num_components(); ++k)
    means.row(k) = (s.first.row(k) + cfg.relevance * ubm.means().row(k)) /
                   (s.occupancy(k) + cfg.relevance);
  return DiagGmm(ubm.weights(), std::move(means), ubm.variances());
}

Vector GmmScore(const GmmSet &models, const FeatureMatrix &utt) {
  if (utt.frames() == 0) throw DataError("GMM scoring of an empty feature matrix");
  if (utt.kind != models.kind)
    throw DataError("feature kind " + std::string(FeatureKindName(utt.kind)) +
                    " does not match GMM kind " + std::string(FeatureKindName(models.kind)));
  Vector ubm_ll = models.ubm.FrameLogLikes(utt.data);
  Vector scores(static_cast<Eigen::Index>(models.languages.size()));
  for (size_t l = 0; l < models.languages.size(); ++l)
    scores(static_cast<Eigen::Index>(l)) =
        (models.languages[l].FrameLogLikes(utt.data) - ubm_ll).mean();
  return scores;
}

namespace {

void WriteGmm(std::ostream &os, const DiagGmm &g) {
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(g.num_components()));
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(g.dim()));
  io::WriteArray(os, g.weights().data(), g.weights().size());
  // Row-major on disk.
  RowMatrix m = g.means(), v = g.variances();
  io::WriteArray(os, m.data(), m.size());
  io::WriteArray(os, v.data(), v.size());
}

DiagGmm ReadGmm(std::istream &is) {
  auto k = io::ReadPod<uint32_t>(is), d = io::ReadPod<uint32_t>(is);
  if (k == 0 || d == 0 || k > (1u << 20) || d > (1u << 16))
    throw DataError("corrupt GMM dimensions");
  Vector w(k);
  RowMatrix m(k, d), v(k, d);
  io::ReadArray(is, w.data(), w.size());
  io::ReadArray(is, m.data(), m.size());
  io::ReadArray(is, v.data(), v.size());
  return DiagGmm(std::move(w), Matrix(m), Matrix(v));
}

}  // namespace

void SaveGmmSet(const std::filesystem::path &path, const GmmSet &set) {
  if (static_cast<int>(set.languages.size()) != set.labels.size())
    throw UsageError("GMM set has " + std::to_string(set.languages.size()) +
                     " language models for " + std::to_string(set.labels.size()) + " labels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kGmmMagic, 8);
  io::WritePod<uint32_t>(os, 1);  // version
  io::WriteString(os, std::string(FeatureKindName(set.kind)));
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(set.labels.size()));
  for (const auto &c : set.labels.codes()) io::WriteString(os, c);
  WriteGmm(os, set.ubm);
  for (const auto &g : set.languages) WriteGmm(os, g);
  if (!os) throw DataError("write failed for " + path.string());
}

GmmSet LoadGmmSet(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  io::ExpectMagic(is, kGmmMagic, path.string());
  auto version = io::ReadPod<uint32_t>(is);
  if (version != 1) throw DataError(path.string() + ": unsupported GMM file version");
  GmmSet set;
  set.kind = ParseFeatureKind(io::ReadString(is));
  auto n = io::ReadPod<uint32_t>(is);
  if (n == 0 || n > 4096) throw DataError(path.string() + ": corrupt label count");
  std::vector<std::string> codes;
  for (uint32_t i = 0; i < n; ++i) codes.push_back(io::ReadString(is));
  set.labels = LabelSet(std::move(codes));
  set.ubm = ReadGmm(is);
  for (uint32_t i = 0; i < n; ++i) set.languages.push_back(ReadGmm(is));
  return set;
}

}  // namespace lidkit::gmm
