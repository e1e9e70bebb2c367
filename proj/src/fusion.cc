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

#include "lidkit/fusion.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace lidkit::fusion {

namespace {

Matrix Combine(const std::vector<const Matrix *> &scores, const Vector &alpha,
               const Vector &beta) {
  Matrix z = Matrix::Zero(scores[0]->rows(), scores[0]->cols());
  for (size_t i = 0; i < scores.size(); ++i) z += alpha(i) * *scores[i];
  z.rowwise() += beta.transpose();
  return z;
}

// Row-wise softmax probabilities and the mean CE.
double SoftmaxRows(const Matrix &z, const std::vector<int> &labels, Matrix *prob) {
  prob->resize(z.rows(), z.cols());
  double ce = 0.0;
  for (Eigen::Index u = 0; u < z.rows(); ++u) {
    const double mx = z.row(u).maxCoeff();
    prob->row(u) = (z.row(u).array() - mx).exp();
    const double sum = prob->row(u).sum();
    prob->row(u) /= sum;
    ce -= z(u, labels[u]) - mx - std::log(sum);
  }
  return ce / static_cast<double>(z.rows());
}

void CheckLabels(const std::vector<int> &labels, Eigen::Index n, Eigen::Index k) {
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DataError("fusion: every utterance needs a label");
  std::vector<int> count(k, 0);
  for (int l : labels) {
    if (l < 0 || l >= k) throw DataError("fusion: label out of range");
    ++count[l];
  }
  for (Eigen::Index l = 0; l < k; ++l)
    if (count[l] == 0)
      throw DataError("fusion: language column " + std::to_string(l) +
                      " has no validation utterance");
}

}  // namespace

double CrossEntropy(const Matrix &logits, const std::vector<int> &labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows() || logits.rows() == 0)
    throw DataError("cross-entropy: label count mismatch");
  Matrix prob;
  return SoftmaxRows(logits, labels, &prob);
}

double FusionObjective(const std::vector<const Matrix *> &scores, const std::vector<int> &labels,
                       const Vector &alpha, const Vector &beta, double l2, Vector *grad) {
  Matrix z = Combine(scores, alpha, beta);
  Matrix prob;
  const double obj = SoftmaxRows(z, labels, &prob) + l2 * alpha.squaredNorm();
  if (grad != nullptr) {
    const double n = static_cast<double>(z.rows());
    Matrix r = prob;
    for (Eigen::Index u = 0; u < r.rows(); ++u) r(u, labels[u]) -= 1.0;
    r /= n;
    const Eigen::Index s = static_cast<Eigen::Index>(scores.size());
    grad->resize(s + beta.size());
    for (Eigen::Index i = 0; i < s; ++i)
      (*grad)(i) = r.cwiseProduct(*scores[i]).sum() + 2.0 * l2 * alpha(i);
    grad->tail(beta.size()) = r.colwise().sum().transpose();
  }
  return obj;
}

FusionWeights FitFusion(const std::vector<ScoreMatrix> &systems, const std::vector<int> &labels,
                        const FusionOptions &opts, FitInfo *info) {
  CheckAligned(systems);
  if (opts.l2 < 0.0) throw UsageError("fusion: l2 must be >= 0");
  const Eigen::Index n = systems[0].scores.rows(), k = systems[0].scores.cols();
  const Eigen::Index s = static_cast<Eigen::Index>(systems.size());
  CheckLabels(labels, n, k);
  std::vector<const Matrix *> scores;
  for (const auto &sys : systems) scores.push_back(&sys.scores);

  // Start from the best single system.
  Vector alpha = Vector::Zero(s), beta = Vector::Zero(k);
  double best = std::numeric_limits<double>::infinity();
  Eigen::Index best_i = 0;
  for (Eigen::Index i = 0; i < s; ++i) {
    const double ce = CrossEntropy(*scores[i], labels);
    if (ce < best) {
      best = ce;
      best_i = i;
    }
  }
  alpha(best_i) = 1.0;

  const Eigen::Index p = s + k;
  Vector gauge = Vector::Zero(p);
  gauge.tail(k).setConstant(1.0 / std::sqrt(static_cast<double>(k)));
  Vector grad;
  double obj = FusionObjective(scores, labels, alpha, beta, opts.l2, &grad);
  int iter = 0;
  for (; iter < opts.max_iter && grad.norm() > opts.grad_tol; ++iter) {
    // Hessian of the mean CE in [alpha; beta].
    Matrix z = Combine(scores, alpha, beta), prob;
    SoftmaxRows(z, labels, &prob);
    Matrix h = Matrix::Zero(p, p);
    Matrix jac(k, p);
    for (Eigen::Index u = 0; u < n; ++u) {
      for (Eigen::Index i = 0; i < s; ++i) jac.col(i) = scores[i]->row(u).transpose();
      jac.rightCols(k).setIdentity();
      const Vector pu = prob.row(u).transpose();
      Matrix a = -pu * pu.transpose();
      a.diagonal() += pu;
      h.noalias() += jac.transpose() * (a * jac);
    }
    h /= static_cast<double>(n);
    h.topLeftCorner(s, s).diagonal().array() += 2.0 * opts.l2;
    h.noalias() += gauge * gauge.transpose();

    Eigen::LDLT<Matrix> ldlt(h);
    Vector step = ldlt.solve(-grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite() || grad.dot(step) >= 0.0)
      step = -grad;
    // Backtracking line search on the Armijo condition.
    double t = 1.0;
    Vector a_new, b_new, g_new;
    double obj_new = obj;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      a_new = alpha + t * step.head(s);
      b_new = beta + t * step.tail(k);
      obj_new = FusionObjective(scores, labels, a_new, b_new, opts.l2, &g_new);
      if (std::isfinite(obj_new) && obj_new <= obj + 1e-4 * t * grad.dot(step)) {
        moved = true;
        break;
      }
    }
    if (!moved) break;  // no further decrease representable
    alpha = a_new;
    beta = b_new;
    obj = obj_new;
    grad = g_new;
  }
  if (!std::isfinite(obj) || !alpha.allFinite() || !beta.allFinite())
    throw NumericError("fusion: optimisation produced non-finite weights");
  if (grad.norm() > opts.grad_tol) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "fusion: stopped at gradient norm %.3g after %d iterations",
                  grad.norm(), iter);
    Warn(buf);
  }
  if (info != nullptr) {
    info->objective = obj;
    info->grad_norm = grad.norm();
    info->iterations = iter;
  }
  FusionWeights w;
  for (const auto &sys : systems) w.systems.push_back(sys.system);
  w.alpha.assign(alpha.data(), alpha.data() + s);
  w.beta = beta;
  return w;
}

ScoreMatrix ApplyFusion(const FusionWeights &w, const std::vector<ScoreMatrix> &systems,
                        const std::string &name) {
  CheckAligned(systems);
  if (systems.size() != w.alpha.size())
    throw DataError("fusion: " + std::to_string(w.alpha.size()) + " weights for " +
                    std::to_string(systems.size()) + " systems");
  if (w.beta.size() != systems[0].labels.size())
    throw DataError("fusion: offset count does not match score columns");
  ScoreMatrix out;
  out.system = name;
  out.labels = systems[0].labels;
  out.ids = systems[0].ids;
  out.scores = Matrix::Zero(systems[0].scores.rows(), systems[0].scores.cols());
  for (size_t i = 0; i < systems.size(); ++i) out.scores += w.alpha[i] * systems[i].scores;
  out.scores.rowwise() += w.beta.transpose();
  return out;
}

void WriteFusionWeights(const std::filesystem::path &path, const FusionWeights &w) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  char buf[32];
  os << "system\talpha\n";
  for (size_t i = 0; i < w.alpha.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", w.alpha[i]);
    os << w.systems[i] << '\t' << buf << '\n';
  }
  os << "beta";
  for (Eigen::Index l = 0; l < w.beta.size(); ++l) {
    std::snprintf(buf, sizeof(buf), "%.17g", w.beta(l));
    os << '\t' << buf;
  }
  os << '\n';
  if (!os) throw DataError("failed writing " + path.string());
}

FusionWeights ReadFusionWeights(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  FusionWeights w;
  std::string line;
  int lineno = 0;
  bool have_beta = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (Trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    auto f = SplitString(line, '\t');
    const std::string head = Trim(f[0]);
    if (lineno == 1 && head == "system") continue;
    if (have_beta) throw DataError(where + ": rows after the beta row");
    if (head == "beta") {
      w.beta.resize(static_cast<Eigen::Index>(f.size()) - 1);
      for (size_t i = 1; i < f.size(); ++i) w.beta(i - 1) = ParseDouble(Trim(f[i]), where + ": beta");
      have_beta = true;
      continue;
    }
    if (f.size() != 2) throw DataError(where + ": expected system<TAB>alpha");
    w.systems.push_back(head);
    w.alpha.push_back(ParseDouble(Trim(f[1]), where + ": alpha"));
  }
  if (!have_beta) throw DataError(path.string() + ": missing beta row");
  if (w.systems.empty()) throw DataError(path.string() + ": no systems");
  return w;
}

}  // namespace lidkit::fusion
