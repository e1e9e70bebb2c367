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

#include "lidkit/metrics.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace lidkit::metrics {

void TrialSet::Split(std::vector<double> *targets, std::vector<double> *nontargets,
                     int hypothesis) const {
  targets->clear();
  nontargets->clear();
  for (Eigen::Index u = 0; u < llr.rows(); ++u) {
    for (Eigen::Index l = 0; l < llr.cols(); ++l) {
      if (hypothesis >= 0 && l != hypothesis) continue;
      (labels[u] == l ? targets : nontargets)->push_back(llr(u, l));
    }
  }
}

TrialSet MakeTrials(const Matrix &scores, const std::vector<int> &labels) {
  const Eigen::Index n = scores.rows(), k = scores.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DataError("trials: every utterance needs a label");
  if (k < 2) throw DataError("trials: need at least two languages");
  for (int l : labels)
    if (l < 0 || l >= k) throw DataError("trials: label out of range");
  if (!scores.allFinite()) throw DataError("trials: non-finite score");
  TrialSet t;
  t.labels = labels;
  t.llr.resize(n, k);
  const double log_others = std::log(static_cast<double>(k - 1));
  for (Eigen::Index u = 0; u < n; ++u) {
    for (Eigen::Index l = 0; l < k; ++l) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < k; ++j)
        if (j != l) mx = std::max(mx, scores(u, j));
      double sum = 0.0;
      for (Eigen::Index j = 0; j < k; ++j)
        if (j != l) sum += std::exp(scores(u, j) - mx);
      t.llr(u, l) = scores(u, l) - (mx + std::log(sum) - log_others);
    }
  }
  return t;
}

double Eer(std::span<const double> targets, std::span<const double> nontargets) {
  if (targets.empty() || nontargets.empty())
    throw DataError("EER needs at least one target and one nontarget trial");
  struct Item {
    double score;
    bool target;
  };
  std::vector<Item> all;
  all.reserve(targets.size() + nontargets.size());
  for (double s : targets) all.push_back({s, true});
  for (double s : nontargets) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Item &a, const Item &b) { return a.score < b.score; });
  const double nt = static_cast<double>(targets.size());
  const double nn = static_cast<double>(nontargets.size());
  // Vertex at the lowest threshold: everything accepted.
  double pm_prev = 0.0, pf_prev = 1.0;
  size_t misses = 0, rejected_non = 0;
  size_t i = 0;
  while (true) {
    // Raise the threshold past the current group of equal scores (or to
    // +inf after the last group).
    if (i < all.size()) {
      const double v = all[i].score;
      while (i < all.size() && all[i].score == v) {
        if (all[i].target) ++misses; else ++rejected_non;
        ++i;
      }
    }
    const double pm = static_cast<double>(misses) / nt;
    const double pf = 1.0 - static_cast<double>(rejected_non) / nn;
    const double d = pm - pf;
    if (d >= 0.0) {
      const double d_prev = pm_prev - pf_prev;
      if (d == 0.0) return 100.0 * pm;
      const double t = d_prev / (d_prev - d);
      return 100.0 * (pm_prev + t * (pm - pm_prev));
    }
    pm_prev = pm;
    pf_prev = pf;
  }
}

double Eer(const TrialSet &trials) {
  std::vector<double> tar, non;
  trials.Split(&tar, &non);
  return Eer(tar, non);
}

void CostParams::Validate() const {
  if (target_priors.empty()) throw UsageError("cost: no operating points");
  for (double p : target_priors)
    if (!(p > 0.0 && p < 1.0)) throw UsageError("cost: target prior must lie in (0, 1)");
  if (!(c_miss > 0.0 && c_fa > 0.0)) throw UsageError("cost: costs must be positive");
}

namespace {

struct LanguageCounts {
  std::vector<double> targets, nontargets;  // per hypothesis language
  int active = 0;                           // languages with target trials
};

LanguageCounts Count(const TrialSet &t) {
  LanguageCounts c;
  const int k = t.num_languages();
  c.targets.assign(k, 0.0);
  c.nontargets.assign(k, 0.0);
  for (size_t u = 0; u < t.labels.size(); ++u)
    for (int l = 0; l < k; ++l) (t.labels[u] == l ? c.targets : c.nontargets)[l] += 1.0;
  for (int l = 0; l < k; ++l)
    if (c.targets[l] > 0) ++c.active;
  if (c.active == 0) throw DataError("cost: no target trials");
  return c;
}

double BayesThreshold(double p, const CostParams &params) {
  return std::log(params.c_fa * (1.0 - p) / (params.c_miss * p));
}

double CostFromCounts(const LanguageCounts &c, const std::vector<double> &misses,
                      const std::vector<double> &fas, double p, const CostParams &params) {
  double sum = 0.0;
  for (size_t l = 0; l < misses.size(); ++l) {
    if (c.targets[l] == 0) continue;
    const double pfa = c.nontargets[l] > 0 ? fas[l] / c.nontargets[l] : 0.0;
    sum += params.c_miss * p * misses[l] / c.targets[l] + params.c_fa * (1.0 - p) * pfa;
  }
  return sum / c.active;
}

// Minimum over thresholds of the cost at one operating point. Raising the
// threshold past a trial turns an accepted nontarget into a correct reject
// or a target into a miss.
double MinCost(const TrialSet &t, const LanguageCounts &c, double p, const CostParams &params) {
  struct Step {
    double score;
    int language;
    bool target;
  };
  std::vector<Step> steps;
  const int k = t.num_languages();
  for (Eigen::Index u = 0; u < t.llr.rows(); ++u)
    for (int l = 0; l < k; ++l) steps.push_back({t.llr(u, l), l, t.labels[u] == l});
  std::sort(steps.begin(), steps.end(),
            [](const Step &a, const Step &b) { return a.score < b.score; });
  std::vector<double> misses(k, 0.0), fas(c.nontargets);  // everything accepted
  double best = CostFromCounts(c, misses, fas, p, params);
  size_t i = 0;
  while (i < steps.size()) {
    const double v = steps[i].score;
    for (; i < steps.size() && steps[i].score == v; ++i) {
      if (steps[i].target)
        misses[steps[i].language] += 1.0;
      else
        fas[steps[i].language] -= 1.0;
    }
    best = std::min(best, CostFromCounts(c, misses, fas, p, params));
  }
  return best;
}

}  // namespace

double CostAt(const TrialSet &trials, double p, double threshold, const CostParams &params) {
  const LanguageCounts c = Count(trials);
  const int k = trials.num_languages();
  std::vector<double> misses(k, 0.0), fas(k, 0.0);
  for (Eigen::Index u = 0; u < trials.llr.rows(); ++u) {
    for (int l = 0; l < k; ++l) {
      const bool accept = trials.llr(u, l) >= threshold;
      if (trials.labels[u] == l) {
        if (!accept) misses[l] += 1.0;
      } else if (accept) {
        fas[l] += 1.0;
      }
    }
  }
  return CostFromCounts(c, misses, fas, p, params);
}

Cost CPrimary(const TrialSet &trials, const CostParams &params) {
  params.Validate();
  const LanguageCounts c = Count(trials);
  Cost cost;
  for (double p : params.target_priors) {
    cost.act += CostAt(trials, p, BayesThreshold(p, params), params);
    cost.min += MinCost(trials, c, p, params);
  }
  cost.act /= static_cast<double>(params.target_priors.size());
  cost.min /= static_cast<double>(params.target_priors.size());
  return cost;
}

Eigen::MatrixXi Confusion(const Matrix &scores, const std::vector<int> &labels) {
  if (static_cast<Eigen::Index>(labels.size()) != scores.rows())
    throw DataError("confusion: every utterance needs a label");
  const Eigen::Index k = scores.cols();
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(k, k);
  for (Eigen::Index u = 0; u < scores.rows(); ++u) {
    if (labels[u] < 0 || labels[u] >= k) throw DataError("confusion: label out of range");
    Eigen::Index best;
    scores.row(u).maxCoeff(&best);
    ++m(labels[u], best);
  }
  return m;
}

Report MakeReport(const Matrix &scores, const std::vector<int> &labels,
                  const std::vector<std::string> &languages, const CostParams &params) {
  if (static_cast<Eigen::Index>(languages.size()) != scores.cols())
    throw DataError("report: language list does not match score columns");
  Report r;
  r.languages = languages;
  TrialSet t = MakeTrials(scores, labels);
  r.pooled_eer = Eer(t);
  r.cost = CPrimary(t, params);
  r.confusion = Confusion(scores, labels);
  double sum = 0.0;
  int n = 0;
  std::vector<double> tar, non;
  for (int l = 0; l < t.num_languages(); ++l) {
    t.Split(&tar, &non, l);
    if (tar.empty() || non.empty()) {
      r.language_eer.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    r.language_eer.push_back(Eer(tar, non));
    sum += r.language_eer.back();
    ++n;
  }
  r.mean_language_eer = n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
  return r;
}

namespace {
std::string Fmt(double v, const char *fmt = "%.4f") {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}
}  // namespace

void WriteMetricsTsv(const std::filesystem::path &path, const Report &r) {
  auto fmt = [](double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  std::ofstream out(path, std::ios::trunc);
  out << "metric\tvalue\n"
      << "pooled_eer\t" << fmt(r.pooled_eer) << '\n'
      << "mean_language_eer\t" << fmt(r.mean_language_eer) << '\n'
      << "act_cprimary\t" << fmt(r.cost.act) << '\n'
      << "min_cprimary\t" << fmt(r.cost.min) << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

void WriteLanguageEerTsv(const std::filesystem::path &path, const Report &r) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "language\teer\n";
  for (size_t l = 0; l < r.languages.size(); ++l)
    os << r.languages[l] << '\t' << Fmt(r.language_eer[l]) << '\n';
  os << "pooled\t" << Fmt(r.pooled_eer) << '\n';
  os << "mean\t" << Fmt(r.mean_language_eer) << '\n';
}

void WriteConfusionTsv(const std::filesystem::path &path, const Report &r) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "true\\predicted";
  for (const auto &l : r.languages) os << '\t' << l;
  os << '\n';
  for (size_t i = 0; i < r.languages.size(); ++i) {
    os << r.languages[i];
    for (size_t j = 0; j < r.languages.size(); ++j) os << '\t' << r.confusion(i, j);
    os << '\n';
  }
}

std::string RenderReport(const Report &r) {
  std::ostringstream os;
  os << "pooled EER  " << Fmt(r.pooled_eer, "%.2f") << " %\n";
  os << "mean EER    " << Fmt(r.mean_language_eer, "%.2f") << " %\n";
  os << "actCprimary " << Fmt(r.cost.act, "%.5f") << "\n";
  os << "minCprimary " << Fmt(r.cost.min, "%.5f") << "\n\n";
  os << "language  EER(%)\n";
  for (size_t l = 0; l < r.languages.size(); ++l) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-9s %6s\n", r.languages[l].c_str(),
                  Fmt(r.language_eer[l], "%.2f").c_str());
    os << buf;
  }
  os << "\nconfusion (rows: true, columns: predicted)\n";
  os << "         ";
  for (const auto &l : r.languages) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%6s", l.substr(0, 6).c_str());
    os << buf;
  }
  os << '\n';
  for (size_t i = 0; i < r.languages.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%-9s", r.languages[i].substr(0, 9).c_str());
    os << buf;
    for (size_t j = 0; j < r.languages.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%6d", r.confusion(i, j));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace lidkit::metrics
