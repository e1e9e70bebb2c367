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

#include "lidkit/cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lidkit/augment.h"
#include "lidkit/corpus.h"
#include "lidkit/experiment.h"
#include "lidkit/feature_archive.h"
#include "lidkit/fusion.h"
#include "lidkit/gmm.h"
#include "lidkit/metrics.h"
#include "lidkit/nnet/train.h"
#include "lidkit/scores.h"
#include "lidkit/synth.h"

namespace lidkit {

namespace {

namespace fs = std::filesystem;
using experiment::ExperimentConfig;

struct Globals {
  std::string config;
  std::optional<uint64_t> seed;
  std::string profile = "desk";
  std::string labels;
};

// Sorted distinct languages of a manifest file.
LabelSet InferLabels(const fs::path &manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  std::set<std::string> langs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("id\t", 0) == 0) continue;
    auto f = SplitString(line, '\t');
    if (f.size() >= 3) langs.insert(f[2]);
  }
  if (langs.empty()) throw DataError("manifest " + manifest.string() + " has no records");
  return LabelSet(std::vector<std::string>(langs.begin(), langs.end()));
}

ExperimentConfig BaseConfig(const Globals &g, const std::string &system) {
  ExperimentConfig cfg = g.config.empty()
                             ? experiment::Preset(system, experiment::ParseProfile(g.profile))
                             : experiment::LoadConfig(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.labels.empty()) cfg.labels = g.labels;
  return cfg;
}

LabelSet LabelsFor(const Globals &g, const fs::path &manifest) {
  if (!g.labels.empty()) return ParseLabelSet(g.labels);
  if (!g.config.empty()) {
    auto cfg = experiment::LoadConfig(g.config);
    if (!cfg.labels.empty()) return cfg.label_set();
  }
  return InferLabels(manifest);
}

uint64_t Seed(const Globals &g) {
  if (g.seed) return *g.seed;
  if (!g.config.empty()) return experiment::LoadConfig(g.config).seed;
  return 0;
}

class Features {
 public:
  explicit Features(const std::vector<std::string> &archives) {
    for (const auto &a : archives) readers_.emplace_back(std::make_unique<FeatureArchiveReader>(a));
  }
  std::optional<FeatureMatrix> Get(const std::string &id) {
    for (auto &r : readers_)
      if (r->contains(id)) return r->Read(id);
    return std::nullopt;
  }

 private:
  std::vector<std::unique_ptr<FeatureArchiveReader>> readers_;
};

std::string PeekMagic(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  char buf[8] = {};
  in.read(buf, 8);
  return std::string(buf, static_cast<size_t>(in.gcount()));
}

std::vector<std::string> ManifestIds(const Manifest &m) {
  std::vector<std::string> ids;
  for (const auto &r : m.records()) ids.push_back(r.id);
  return ids;
}

std::vector<std::string> ManifestLanguages(const Manifest &m) {
  std::vector<std::string> out;
  for (const auto &r : m.records()) out.push_back(r.language);
  return out;
}


std::vector<std::string> SplitPlus(const std::string &s) {
  std::vector<std::string> out;
  for (auto &p : SplitString(s, '+')) {
    auto t = Trim(p);
    if (t.empty()) throw UsageError("malformed fusion subset '" + s + "'");
    out.push_back(t);
  }
  return out;
}

}  // namespace

int RunCli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"lidkit: spoken language identification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment config file");
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--profile", g.profile, "Preset profile")->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--labels", g.labels, "Comma-separated language codes");

  std::function<void()> action;
  auto on = [&](CLI::App *sub, std::function<void()> fn) {
    sub->callback([&action, fn] { action = fn; });
  };

  // synth
  auto *synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string synth_out;
  synth::CorpusSpec spec;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--languages", spec.num_languages);
  synth->add_option("--sessions", spec.sessions_per_language);
  synth->add_option("--utterances", spec.utterances_per_session);
  synth->add_option("--distinctness", spec.distinctness);
  on(synth, [&] {
    spec.seed = Seed(g);
    auto layout = synth::GenerateCorpus(synth_out, spec);
    out << "manifest\t" << layout.manifest.string() << "\nlabels\t";
    for (int i = 0; i < layout.labels.size(); ++i) out << (i ? "," : "") << layout.labels.code(i);
    out << "\nnoise_dir\t" << layout.noise_dir.string() << "\nrir_dir\t" << layout.rir_dir.string()
        << '\n';
  });

  // split
  auto *split = app.add_subcommand("split", "Session-disjoint train/validation split");
  std::string split_in, split_out;
  int train_sessions = 25, val_sessions = 5;
  split->add_option("--manifest", split_in)->required();
  split->add_option("--out", split_out, "Output directory")->required();
  split->add_option("--train-sessions", train_sessions);
  split->add_option("--val-sessions", val_sessions);
  on(split, [&] {
    Manifest m = LoadManifest(split_in, LabelsFor(g, split_in));
    auto r = SplitSessions(m, {train_sessions, val_sessions, Seed(g)});
    fs::create_directories(split_out);
    SaveManifest(fs::path(split_out) / "train.tsv", r.train);
    SaveManifest(fs::path(split_out) / "val.tsv", r.val);
    WriteKey(fs::path(split_out) / "key_train.tsv", ManifestIds(r.train), ManifestLanguages(r.train));
    WriteKey(fs::path(split_out) / "key_val.tsv", ManifestIds(r.val), ManifestLanguages(r.val));
    out << "train\t" << r.train.size() << "\nval\t" << r.val.size() << '\n';
  });

  // augment
  auto *aug = app.add_subcommand("augment", "Write augmented copies of a manifest");
  std::string aug_cat, aug_in, aug_out, noise_dir, rir_dir;
  int copies = 1;
  aug->add_option("--category", aug_cat)->required()->check(CLI::IsMember({"additive", "signal", "enhance"}));
  aug->add_option("--in", aug_in)->required();
  aug->add_option("--out", aug_out)->required();
  aug->add_option("--noise-dir", noise_dir);
  aug->add_option("--rir-dir", rir_dir);
  aug->add_option("--copies", copies);
  on(aug, [&] {
    Manifest m = LoadManifest(aug_in, LabelsFor(g, aug_in));
    augment::AugmentJob job;
    job.category = augment::ParseCategory(aug_cat);
    job.out_dir = aug_out;
    job.seed = Seed(g);
    job.copies_per_utterance = copies;
    if (job.category == augment::Category::kAdditive) {
      if (noise_dir.empty() && rir_dir.empty())
        throw UsageError("additive augmentation needs --noise-dir or --rir-dir");
      job.sources = augment::AdditiveSources::FromDirectories(noise_dir, rir_dir);
      if (job.sources.empty()) throw DataError("no noise or impulse response files found");
    }
    Manifest res = augment::AugmentManifest(m, job);
    SaveManifest(fs::path(aug_out) / "manifest.tsv", res);
    out << "augmented\t" << res.size() << '\n';
  });

  // features
  auto *feat = app.add_subcommand("features", "Extract features into an archive");
  std::string feat_in, feat_out, feat_kind = "mfcc40";
  int threads = 1;
  feat->add_option("--in", feat_in)->required();
  feat->add_option("--kind", feat_kind)->check(CLI::IsMember({"mfcc40", "plp20", "mfcc16", "mfcc16_sdc112"}));
  feat->add_option("--out", feat_out, "Archive path; an .idx index is written next to it")->required();
  feat->add_option("--threads", threads);
  on(feat, [&] {
    Manifest m = LoadManifest(feat_in, LabelsFor(g, feat_in));
    const FeatureKind kind = ParseFeatureKind(feat_kind);
    std::vector<std::optional<FeatureMatrix>> res(m.size());
    experiment::ParallelFor(static_cast<int>(m.size()), threads, [&](int i) {
      try {
        res[i] = ExtractFeatures(ReadAudio(m[i].path), kind);
      } catch (const NoSpeechError &) {
      }
    });
    FeatureArchiveWriter w(feat_out);
    int skipped = 0;
    for (size_t i = 0; i < m.size(); ++i) {
      if (res[i]) {
        w.Write(m[i].id, *res[i]);
      } else {
        Warn("no speech detected in " + m[i].id + "; left out of the archive");
        ++skipped;
      }
    }
    w.Close();
    out << "written\t" << m.size() - skipped << "\nno_speech\t" << skipped << '\n';
  });

  // train-gmm
  auto *tg = app.add_subcommand("train-gmm", "Train a UBM and MAP-adapted language GMMs");
  std::string tg_manifest, tg_out;
  std::vector<std::string> tg_feats;
  std::optional<int> tg_components;
  tg->add_option("--manifest", tg_manifest)->required();
  tg->add_option("--feats", tg_feats, "Feature archives")->required();
  tg->add_option("--out", tg_out)->required();
  tg->add_option("--components", tg_components);
  on(tg, [&] {
    ExperimentConfig cfg = BaseConfig(g, "S8");
    if (tg_components) cfg.components = *tg_components;
    const LabelSet labels = LabelsFor(g, tg_manifest);
    Manifest m = LoadManifest(tg_manifest, labels);
    Features feats(tg_feats);
    std::vector<std::vector<FeatureMatrix>> by_lang(labels.size());
    const auto lab = m.LabelIndices();
    FeatureKind kind = FeatureKind::kGeneric;
    int dim = -1;
    long long total = 0;
    for (size_t i = 0; i < m.size(); ++i) {
      auto f = feats.Get(m[i].id);
      if (!f) {
        Warn("no features for " + m[i].id + "; skipped");
        continue;
      }
      if (dim < 0) {
        dim = f->dims();
        kind = f->kind;
      } else if (f->dims() != dim) {
        throw DataError("feature dimension mismatch at " + m[i].id);
      }
      total += f->frames();
      by_lang[lab[i]].push_back(std::move(*f));
    }
    if (total == 0) throw DataError("no training frames");
    auto stack = [&](const std::vector<FeatureMatrix> &fs, long long stride) {
      long long n = 0;
      for (const auto &f : fs) n += f.frames();
      RowMatrix x((n + stride - 1) / stride, dim);
      long long seen = 0, kept = 0;
      for (const auto &f : fs)
        for (int t = 0; t < f.frames(); ++t, ++seen)
          if (seen % stride == 0) x.row(kept++) = f.data.row(t);
      x.conservativeResize(kept, dim);
      return x;
    };
    std::vector<FeatureMatrix> all;
    for (const auto &l : by_lang) all.insert(all.end(), l.begin(), l.end());
    const long long stride = std::max<long long>(1, (total + cfg.max_ubm_frames - 1) / cfg.max_ubm_frames);
    gmm::GmmSet set;
    set.kind = kind;
    set.labels = labels;
    set.ubm = gmm::TrainUbm(stack(all, stride), cfg.ubm_options());
    for (int l = 0; l < labels.size(); ++l)
      set.languages.push_back(gmm::MapAdaptMeans(set.ubm, stack(by_lang[l], 1), {cfg.relevance}));
    gmm::SaveGmmSet(tg_out, set);
    out << "components\t" << set.ubm.num_components() << '\n';
  });

  // train-nnet
  auto *tn = app.add_subcommand("train-nnet", "Train a neural classifier");
  std::string tn_manifest, tn_val, tn_out, tn_log, tn_arch = "xvector";
  std::vector<std::string> tn_feats;
  std::optional<int> tn_epochs;
  tn->add_option("--manifest", tn_manifest)->required();
  tn->add_option("--val-manifest", tn_val)->required();
  tn->add_option("--feats", tn_feats, "Feature archives covering both manifests")->required();
  tn->add_option("--arch", tn_arch)->check(CLI::IsMember({"xvector", "ecapa", "resnet_tdnn"}));
  tn->add_option("--epochs", tn_epochs);
  tn->add_option("--out", tn_out)->required();
  tn->add_option("--log", tn_log, "Training log TSV");
  on(tn, [&] {
    const std::string preset = tn_arch == "xvector" ? "S0" : tn_arch == "ecapa" ? "S1" : "S7";
    ExperimentConfig cfg = BaseConfig(g, preset);
    if (g.config.empty()) cfg.classifier = experiment::ParseClassifier(tn_arch);
    if (tn_epochs) cfg.train.epochs = *tn_epochs;
    const LabelSet labels = LabelsFor(g, tn_manifest);
    Manifest train = LoadManifest(tn_manifest, labels);
    Manifest val = LoadManifest(tn_val, labels);
    Features feats(tn_feats);
    FeatureKind kind = FeatureKind::kGeneric;
    int dim = -1;
    auto chunks = [&](const Manifest &m) {
      std::vector<nnet::LabeledChunk> out_chunks;
      const auto lab = m.LabelIndices();
      for (size_t i = 0; i < m.size(); ++i) {
        auto f = feats.Get(m[i].id);
        if (!f) {
          Warn("no features for " + m[i].id + "; skipped");
          continue;
        }
        if (dim < 0) {
          dim = f->dims();
          kind = f->kind;
        }
        for (auto &c : Chunk(*f, cfg.chunk_s)) out_chunks.push_back({std::move(c.data), lab[i]});
      }
      return out_chunks;
    };
    auto tr = chunks(train);
    auto va = chunks(val);
    if (tr.empty()) throw DataError("no training chunks");
    nnet::ModelSpec ms = cfg.model_spec(labels.size());
    ms.feat_dim = dim;
    nnet::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    nnet::NnetSystem sys{kind, labels, nnet::TdnnModel(ms, cfg.seed)};
    auto log = nnet::Train(&sys.model, tr, va, tc);
    nnet::SaveNnet(tn_out, sys);
    if (!tn_log.empty()) nnet::WriteTrainLog(tn_log, log);
    if (!log.empty())
      out << "train_loss\t" << log.back().train_loss << "\nval_loss\t" << log.back().val_loss << '\n';
  });

  // score
  auto *sc = app.add_subcommand("score", "Score utterances with a trained model");
  std::string sc_model, sc_manifest, sc_out, sc_system = "system";
  std::vector<std::string> sc_feats;
  sc->add_option("--model", sc_model)->required();
  sc->add_option("--manifest", sc_manifest)->required();
  sc->add_option("--feats", sc_feats)->required();
  sc->add_option("--out", sc_out)->required();
  sc->add_option("--system", sc_system, "System name recorded with the scores");
  on(sc, [&] {
    const bool is_gmm = PeekMagic(sc_model) == "LIDKGMM\x01";
    std::optional<gmm::GmmSet> gs;
    std::optional<nnet::NnetSystem> ns;
    LabelSet labels;
    if (is_gmm) {
      gs = gmm::LoadGmmSet(sc_model);
      labels = gs->labels;
    } else {
      ns = nnet::LoadNnet(sc_model);
      labels = ns->labels;
    }
    Manifest m = LoadManifest(sc_manifest, labels);
    Features feats(sc_feats);
    ScoreMatrix s;
    s.system = sc_system;
    s.labels = labels;
    s.scores = Matrix::Zero(static_cast<Eigen::Index>(m.size()), labels.size());
    for (size_t i = 0; i < m.size(); ++i) {
      s.ids.push_back(m[i].id);
      auto f = feats.Get(m[i].id);
      if (!f) {
        Warn("no features for " + m[i].id + "; scored as uniform");
        continue;
      }
      s.scores.row(static_cast<Eigen::Index>(i)) =
          (is_gmm ? gmm::GmmScore(*gs, *f) : nnet::ScoreUtterance(ns->model, Chunk(*f))).transpose();
    }
    s.Validate();
    WriteScores(sc_out, s);
    out << "scored\t" << m.size() << '\n';
  });

  // fuse
  auto *fu = app.add_subcommand("fuse", "Fit and apply logistic-regression score fusion");
  std::vector<std::string> fu_scores;
  std::string fu_key, fu_out, fu_weights_out, fu_weights_in;
  fu->add_option("--scores", fu_scores, "Score files; system names are the file stems")->required();
  fu->add_option("--key", fu_key, "Key used to fit the weights");
  fu->add_option("--weights", fu_weights_in, "Apply existing weights instead of fitting");
  fu->add_option("--weights-out", fu_weights_out);
  fu->add_option("--out", fu_out)->required();
  on(fu, [&] {
    std::vector<ScoreMatrix> systems;
    for (const auto &p : fu_scores) systems.push_back(ReadScores(p, fs::path(p).stem().string()));
    CheckAligned(systems);
    fusion::FusionWeights w;
    if (!fu_weights_in.empty()) {
      w = fusion::ReadFusionWeights(fu_weights_in);
    } else {
      if (fu_key.empty()) throw UsageError("fuse needs --key to fit weights, or --weights");
      w = fusion::FitFusion(systems, LabelsFor(systems[0], ReadKey(fu_key)));
    }
    if (!fu_weights_out.empty()) fusion::WriteFusionWeights(fu_weights_out, w);
    WriteScores(fu_out, fusion::ApplyFusion(w, systems));
    for (size_t i = 0; i < w.systems.size(); ++i) out << w.systems[i] << '\t' << w.alpha[i] << '\n';
  });

  // evaluate
  auto *ev = app.add_subcommand("evaluate", "EER and Cprimary of a score file");
  std::string ev_scores, ev_key, ev_out, ev_dir;
  ev->add_option("--scores", ev_scores)->required();
  ev->add_option("--key", ev_key)->required();
  ev->add_option("--out", ev_out, "Metrics TSV");
  ev->add_option("--report-dir", ev_dir, "Directory for per-language EER and confusion TSVs");
  on(ev, [&] {
    ScoreMatrix s = ReadScores(ev_scores);
    auto r = metrics::MakeReport(s.scores, LabelsFor(s, ReadKey(ev_key)), s.labels.codes());
    if (!ev_out.empty()) metrics::WriteMetricsTsv(ev_out, r);
    if (!ev_dir.empty()) {
      fs::create_directories(ev_dir);
      metrics::WriteLanguageEerTsv(fs::path(ev_dir) / "language_eer.tsv", r);
      metrics::WriteConfusionTsv(fs::path(ev_dir) / "confusion.tsv", r);
    }
    out << metrics::RenderReport(r);
  });

  // report
  auto *rep = app.add_subcommand("report", "Metrics and fusion report over run directories");
  std::vector<std::string> rep_runs, rep_subsets;
  std::string rep_out;
  int rep_bench = 0;
  rep->add_option("--run", rep_runs, "Completed run directories")->required();
  rep->add_option("--subset", rep_subsets, "Fusion subset such as S1+S3 (repeatable)");
  rep->add_option("--bench", rep_bench, "Also benchmark scoring on this many files per run");
  rep->add_option("--out", rep_out, "Report TSV");
  on(rep, [&] {
    std::vector<fs::path> runs(rep_runs.begin(), rep_runs.end());
    std::vector<std::vector<std::string>> subsets;
    for (const auto &s : rep_subsets) subsets.push_back(SplitPlus(s));
    auto r = experiment::FusionReportFromRuns(runs, subsets);
    if (rep_bench > 0)
      for (const auto &d : runs) r.bench.push_back(experiment::Benchmark(d, rep_bench));
    if (!rep_out.empty()) experiment::WriteRunReport(rep_out, r);
    out << experiment::RenderRunReport(r);
  });

  // bench
  auto *be = app.add_subcommand("bench", "Time scoring from audio and record peak memory");
  std::string be_run;
  int be_n = 100;
  be->add_option("--run", be_run)->required();
  be->add_option("-n,--files", be_n);
  on(be, [&] {
    auto b = experiment::Benchmark(be_run, be_n);
    out << "system\tfiles\tseconds\tseconds_per_100\tpeak_rss_mb\n"
        << b.system << '\t' << b.files << '\t' << b.seconds << '\t' << b.seconds_per_100 << '\t'
        << b.peak_rss_mb << '\n';
  });

  // run
  auto *run = app.add_subcommand("run", "Run a complete system of the matrix");
  std::string run_system = "S0", run_manifest, run_work, run_noise, run_rir;
  std::optional<int> run_threads;
  bool run_custom = false, print_config = false;
  run->add_option("--system", run_system, "S0..S8; ignored with --config");
  run->add_option("--manifest", run_manifest);
  run->add_option("--work-dir", run_work);
  run->add_option("--noise-dir", run_noise);
  run->add_option("--rir-dir", run_rir);
  run->add_option("--threads", run_threads);
  run->add_flag("--custom", run_custom, "Allow configurations outside the system matrix");
  run->add_flag("--print-config", print_config, "Print the resolved config and exit");
  on(run, [&] {
    ExperimentConfig cfg = BaseConfig(g, run_system);
    if (!run_manifest.empty()) cfg.manifest = run_manifest;
    if (!run_work.empty()) cfg.work_dir = run_work;
    if (!run_noise.empty()) cfg.noise_dir = run_noise;
    if (!run_rir.empty()) cfg.rir_dir = run_rir;
    if (run_threads) cfg.threads = *run_threads;
    if (run_custom) cfg.custom = true;
    cfg.Validate();
    if (print_config) {
      out << experiment::SerializeConfig(cfg);
      return;
    }
    auto r = experiment::RunExperiment(cfg);
    out << "run_dir\t" << r.run_dir.string() << "\nscores_val\t" << r.scores_val.string()
        << "\nscores_train\t" << r.scores_train.string() << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  try {
    if (action) action();
    return 0;
  } catch (const UsageError &e) {
    err << "lidkit: usage error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError &e) {
    err << "lidkit: numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError &e) {
    err << "lidkit: data error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error &e) {
    err << "lidkit: data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    err << "lidkit: error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace lidkit
