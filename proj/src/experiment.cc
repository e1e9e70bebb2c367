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

#include "lidkit/experiment.h"

#include <sys/resource.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "lidkit/audio.h"
#include "lidkit/augment.h"
#include "lidkit/corpus.h"
#include "lidkit/feature_archive.h"
#include "lidkit/metrics.h"
#include "lidkit/rng.h"

namespace lidkit::experiment {

namespace fs = std::filesystem;

// ----- names ----------------------------------------------------------------

std::string_view ClassifierName(Classifier c) {
  switch (c) {
    case Classifier::kXvector: return "xvector";
    case Classifier::kResnetTdnn: return "resnet_tdnn";
    case Classifier::kEcapa: return "ecapa";
    case Classifier::kGmm: return "gmm";
  }
  return "xvector";
}

Classifier ParseClassifier(std::string_view name) {
  for (auto c : {Classifier::kXvector, Classifier::kResnetTdnn, Classifier::kEcapa, Classifier::kGmm})
    if (ClassifierName(c) == name) return c;
  throw UsageError("unknown classifier '" + std::string(name) + "'");
}

std::string_view ProfileName(Profile p) { return p == Profile::kDesk ? "desk" : "full"; }

Profile ParseProfile(std::string_view name) {
  if (name == "desk") return Profile::kDesk;
  if (name == "full") return Profile::kFull;
  throw UsageError("unknown profile '" + std::string(name) + "' (expected desk or full)");
}

const std::vector<SystemRow> &SystemMatrix() {
  static const std::vector<SystemRow> rows = {
      {"S0", Classifier::kXvector, FeatureKind::kMfcc40, {false, false, false}},
      {"S1", Classifier::kEcapa, FeatureKind::kMfcc40, {false, false, false}},
      {"S2", Classifier::kEcapa, FeatureKind::kMfcc40, {true, false, false}},
      {"S3", Classifier::kEcapa, FeatureKind::kMfcc40, {false, true, false}},
      {"S4", Classifier::kEcapa, FeatureKind::kMfcc40, {false, false, true}},
      {"S5", Classifier::kEcapa, FeatureKind::kMfcc40, {true, true, true}},
      {"S6", Classifier::kEcapa, FeatureKind::kPlp20, {true, true, true}},
      {"S7", Classifier::kResnetTdnn, FeatureKind::kMfcc40, {true, true, true}},
      {"S8", Classifier::kGmm, FeatureKind::kMfcc16Sdc112, {false, false, false}},
  };
  return rows;
}

// ----- config ---------------------------------------------------------------

LabelSet ExperimentConfig::label_set() const {
  return labels.empty() ? LabelSet::Lre22() : ParseLabelSet(labels);
}

nnet::ModelSpec ExperimentConfig::model_spec(int num_classes) const {
  nnet::ModelSpec s;
  switch (classifier) {
    case Classifier::kXvector: s.arch = nnet::Arch::kXvector; break;
    case Classifier::kResnetTdnn: s.arch = nnet::Arch::kResnetTdnn; break;
    case Classifier::kEcapa: s.arch = nnet::Arch::kEcapa; break;
    case Classifier::kGmm: throw UsageError("the gmm classifier has no network");
  }
  s.feat_dim = FeatureDim(features);
  s.channels = channels;
  s.pre_pool_channels = pre_pool_channels;
  s.embed_dim = embed_dim;
  s.num_classes = num_classes;
  s.res2_scale = res2_scale;
  s.se_bottleneck = se_bottleneck;
  s.attention_bottleneck = attention_bottleneck;
  s.logit_scale = logit_scale;
  return s;
}

gmm::UbmOptions ExperimentConfig::ubm_options() const {
  gmm::UbmOptions o;
  o.num_components = components;
  o.iters_per_split = iters_per_split;
  o.em_iters = em_iters;
  o.var_floor_factor = var_floor_factor;
  o.seed = Rng::Mix(seed ^ 0x676d6dULL);
  return o;
}

std::optional<std::string> MatchSystemRow(const ExperimentConfig &cfg) {
  for (const auto &r : SystemMatrix())
    if (r.classifier == cfg.classifier && r.features == cfg.features && r.augment == cfg.augment)
      return r.id;
  return std::nullopt;
}

void ExperimentConfig::Validate() const {
  if (system.empty() || system.find_first_of(" \t/\\") != std::string::npos)
    throw UsageError("system id must be a non-empty name without spaces or slashes");
  if (!custom) {
    auto row = MatchSystemRow(*this);
    if (!row)
      throw UsageError("classifier " + std::string(ClassifierName(classifier)) + " with " +
                       std::string(FeatureKindName(features)) +
                       " features and this augmentation matches no system of the matrix "
                       "(set custom = true to run it anyway)");
    if (*row != system)
      throw UsageError("system " + system + " does not have this configuration (it matches " +
                       *row + "); set custom = true to run it anyway");
  }
  if (FeatureDim(features) < 0) throw UsageError("features must be mfcc40, plp20, mfcc16 or mfcc16_sdc112");
  if (!(pool_factor > 0.0)) throw UsageError("pool_factor must be positive");
  if (!(chunk_s > 0.0)) throw UsageError("chunk_s must be positive");
  if (classifier == Classifier::kGmm) {
    if (components < 1 || iters_per_split < 1 || em_iters < 0 || max_ubm_frames < 1)
      throw UsageError("invalid [gmm] settings");
    if (!(var_floor_factor > 0.0) || !(relevance > 0.0))
      throw UsageError("var_floor_factor and relevance must be positive");
  } else {
    model_spec(2).Validate();
    train.Validate();
  }
  if (train_sessions < 1 || val_sessions < 1) throw UsageError("session counts must be >= 1");
  if (threads < 1) throw UsageError("threads must be >= 1");
  label_set();
}

ExperimentConfig Preset(std::string_view system, Profile profile) {
  const SystemRow *row = nullptr;
  for (const auto &r : SystemMatrix())
    if (r.id == system) row = &r;
  if (!row) throw UsageError("unknown system '" + std::string(system) + "' (expected S0..S8)");
  ExperimentConfig c;
  c.system = row->id;
  c.profile = profile;
  c.classifier = row->classifier;
  c.features = row->features;
  c.augment = row->augment;
  if (profile == Profile::kDesk) {
    c.channels = 64;
    c.pre_pool_channels = 192;
    c.embed_dim = 32;
    c.se_bottleneck = 16;
    c.attention_bottleneck = 16;
    c.train.epochs = 8;
    c.components = 64;
    c.iters_per_split = 3;
    c.em_iters = 5;
    c.max_ubm_frames = 100000;
  }
  return c;
}

namespace {

std::string Fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string Fmt(int v) { return std::to_string(v); }
std::string Fmt(bool v) { return v ? "true" : "false"; }

bool ParseBool(const std::string &s, const std::string &where) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw UsageError(where + ": expected true or false, got '" + s + "'");
}

double ToDouble(const std::string &s, const std::string &where) {
  try {
    return ParseDouble(s, where);
  } catch (const DataError &e) {
    throw UsageError(e.what());
  }
}

int ToInt(const std::string &s, const std::string &where) {
  long long v;
  try {
    v = ParseInt(s, where);
  } catch (const DataError &e) {
    throw UsageError(e.what());
  }
  if (v < INT32_MIN || v > INT32_MAX) throw UsageError(where + ": value out of range");
  return static_cast<int>(v);
}

struct Field {
  const char *section;
  const char *key;
  std::function<std::string(const ExperimentConfig &)> get;
  std::function<void(ExperimentConfig &, const std::string &, const std::string &)> set;
};

#define LIDKIT_DOUBLE(sec, name, member)                                                      \
  Field{sec, name, [](const ExperimentConfig &c) { return Fmt(c.member); },                   \
        [](ExperimentConfig &c, const std::string &v, const std::string &w) { c.member = ToDouble(v, w); }}
#define LIDKIT_INT(sec, name, member)                                                         \
  Field{sec, name, [](const ExperimentConfig &c) { return Fmt(c.member); },                   \
        [](ExperimentConfig &c, const std::string &v, const std::string &w) { c.member = ToInt(v, w); }}
#define LIDKIT_BOOL(sec, name, member)                                                        \
  Field{sec, name, [](const ExperimentConfig &c) { return Fmt(c.member); },                   \
        [](ExperimentConfig &c, const std::string &v, const std::string &w) { c.member = ParseBool(v, w); }}
#define LIDKIT_PATH(sec, name, member)                                                        \
  Field{sec, name, [](const ExperimentConfig &c) { return c.member.generic_string(); },       \
        [](ExperimentConfig &c, const std::string &v, const std::string &) { c.member = v; }}

const std::vector<Field> &Fields() {
  static const std::vector<Field> fields = {
      Field{"system", "id", [](const ExperimentConfig &c) { return c.system; },
            [](ExperimentConfig &c, const std::string &v, const std::string &) { c.system = v; }},
      Field{"system", "profile", [](const ExperimentConfig &c) { return std::string(ProfileName(c.profile)); },
            [](ExperimentConfig &c, const std::string &v, const std::string &) { c.profile = ParseProfile(v); }},
      LIDKIT_BOOL("system", "custom", custom),
      LIDKIT_BOOL("augment", "non_speech", augment.non_speech),
      LIDKIT_BOOL("augment", "signal_perturb", augment.signal_perturb),
      LIDKIT_BOOL("augment", "enhancement", augment.enhancement),
      LIDKIT_DOUBLE("augment", "pool_factor", pool_factor),
      Field{"features", "kind", [](const ExperimentConfig &c) { return std::string(FeatureKindName(c.features)); },
            [](ExperimentConfig &c, const std::string &v, const std::string &) { c.features = ParseFeatureKind(v); }},
      LIDKIT_DOUBLE("features", "chunk_s", chunk_s),
      Field{"classifier", "kind", [](const ExperimentConfig &c) { return std::string(ClassifierName(c.classifier)); },
            [](ExperimentConfig &c, const std::string &v, const std::string &) { c.classifier = ParseClassifier(v); }},
      LIDKIT_INT("nnet", "channels", channels),
      LIDKIT_INT("nnet", "pre_pool_channels", pre_pool_channels),
      LIDKIT_INT("nnet", "embed_dim", embed_dim),
      LIDKIT_INT("nnet", "res2_scale", res2_scale),
      LIDKIT_INT("nnet", "se_bottleneck", se_bottleneck),
      LIDKIT_INT("nnet", "attention_bottleneck", attention_bottleneck),
      LIDKIT_DOUBLE("nnet", "logit_scale", logit_scale),
      LIDKIT_DOUBLE("nnet", "margin", train.margin),
      LIDKIT_INT("nnet", "epochs", train.epochs),
      LIDKIT_INT("nnet", "batch_size", train.batch_size),
      LIDKIT_DOUBLE("nnet", "learning_rate", train.learning_rate),
      LIDKIT_DOUBLE("nnet", "weight_decay", train.weight_decay),
      LIDKIT_DOUBLE("nnet", "beta1", train.beta1),
      LIDKIT_DOUBLE("nnet", "beta2", train.beta2),
      LIDKIT_DOUBLE("nnet", "adam_eps", train.adam_eps),
      LIDKIT_DOUBLE("nnet", "lr_factor", train.lr_factor),
      LIDKIT_INT("nnet", "patience", train.patience),
      LIDKIT_INT("gmm", "components", components),
      LIDKIT_INT("gmm", "iters_per_split", iters_per_split),
      LIDKIT_INT("gmm", "em_iters", em_iters),
      LIDKIT_DOUBLE("gmm", "var_floor_factor", var_floor_factor),
      LIDKIT_DOUBLE("gmm", "relevance", relevance),
      LIDKIT_INT("gmm", "max_ubm_frames", max_ubm_frames),
      LIDKIT_PATH("data", "manifest", manifest),
      LIDKIT_PATH("data", "noise_dir", noise_dir),
      LIDKIT_PATH("data", "rir_dir", rir_dir),
      Field{"data", "labels", [](const ExperimentConfig &c) { return c.labels; },
            [](ExperimentConfig &c, const std::string &v, const std::string &) { c.labels = v; }},
      LIDKIT_INT("data", "train_sessions", train_sessions),
      LIDKIT_INT("data", "val_sessions", val_sessions),
      LIDKIT_PATH("run", "work_dir", work_dir),
      Field{"run", "seed", [](const ExperimentConfig &c) { return std::to_string(c.seed); },
            [](ExperimentConfig &c, const std::string &v, const std::string &w) {
              unsigned long long s = 0;
              auto r = std::from_chars(v.data(), v.data() + v.size(), s);
              if (r.ec != std::errc() || r.ptr != v.data() + v.size())
                throw UsageError(w + ": invalid seed '" + v + "'");
              c.seed = s;
            }},
      LIDKIT_INT("run", "threads", threads),
  };
  return fields;
}

#undef LIDKIT_DOUBLE
#undef LIDKIT_INT
#undef LIDKIT_BOOL
#undef LIDKIT_PATH

struct Entry {
  std::string section, key, value, where;
};

std::vector<Entry> Tokenize(std::string_view text) {
  std::vector<Entry> out;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = "config line " + std::to_string(lineno);
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string t = Trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw UsageError(where + ": malformed section header");
      section = Trim(t.substr(1, t.size() - 2));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected key = value");
    if (section.empty()) throw UsageError(where + ": key outside of a section");
    out.push_back({section, Trim(t.substr(0, eq)), Trim(t.substr(eq + 1)), where});
  }
  return out;
}

}  // namespace

ExperimentConfig ParseConfig(std::string_view text) {
  const auto entries = Tokenize(text);
  std::string id = "S0";
  Profile profile = Profile::kDesk;
  for (const auto &e : entries) {
    if (e.section == "system" && e.key == "id") id = e.value;
    if (e.section == "system" && e.key == "profile") profile = ParseProfile(e.value);
  }
  bool known = false;
  for (const auto &r : SystemMatrix()) known |= r.id == id;
  ExperimentConfig cfg = Preset(known ? id : "S0", profile);
  cfg.system = id;

  std::unordered_set<std::string> seen;
  for (const auto &e : entries) {
    const Field *f = nullptr;
    for (const auto &cand : Fields())
      if (e.section == cand.section && e.key == cand.key) f = &cand;
    if (!f) throw UsageError(e.where + ": unknown setting [" + e.section + "] " + e.key);
    if (!seen.insert(e.section + "." + e.key).second)
      throw UsageError(e.where + ": duplicate setting [" + e.section + "] " + e.key);
    f->set(cfg, e.value, e.where);
  }
  return cfg;
}

std::string SerializeConfig(const ExperimentConfig &cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto &f : Fields()) {
    if (section != f.section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

ExperimentConfig LoadConfig(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str());
}

void SaveConfig(const fs::path &path, const ExperimentConfig &cfg) {
  std::ofstream out(path, std::ios::trunc);
  out << SerializeConfig(cfg);
  if (!out) throw DataError("cannot write config " + path.string());
}

std::string ConfigHash(const ExperimentConfig &cfg) {
  ExperimentConfig c = cfg;
  c.work_dir.clear();
  c.threads = 1;
  return HexDigest(Fnv1a64(SerializeConfig(c)));
}

Logger DefaultLogger() {
  return [](std::string_view msg) { std::cerr << "lidkit: " << msg << '\n'; };
}

void ParallelFor(int n, int threads, const std::function<void(int)> &fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  int failed_at = n;
  std::exception_ptr error;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_at) {
          failed_at = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto &t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ----- pipeline -------------------------------------------------------------

namespace {

std::string ReadFile(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const fs::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write " + p.string());
}

std::string Hash(const std::vector<std::string> &parts) {
  uint64_t h = Fnv1a64("");
  for (const auto &p : parts) {
    h = Fnv1a64(p, h);
    h = Fnv1a64(std::string(1, '\x1f'), h);
  }
  return HexDigest(h);
}

bool StageDone(const fs::path &dir) { return fs::exists(dir / "DONE"); }

void BeginStage(const fs::path &dir) {
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir);
}

void EndStage(const fs::path &dir) { WriteFile(dir / "DONE", "ok\n"); }

// Re-throws module errors with the stage name prepended, keeping the type.
template <typename F>
auto InStage(const std::string &stage, F &&fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const UsageError &e) {
    throw UsageError(stage + ": " + e.what());
  } catch (const NumericError &e) {
    throw NumericError(stage + ": " + e.what());
  } catch (const DataError &e) {
    throw DataError(stage + ": " + e.what());
  } catch (const fs::filesystem_error &e) {
    throw DataError(stage + ": " + e.what());
  }
}

std::string SourcesFingerprint(const augment::AdditiveSources &s) {
  std::string out;
  for (const auto *list : {&s.noise, &s.music, &s.babble, &s.rir})
    for (const auto &p : *list) out += p.generic_string() + ":" + std::to_string(fs::file_size(p)) + ";";
  return out;
}

Manifest Concat(const Manifest &a, const Manifest &b) {
  Manifest out(a.labels());
  for (const auto &r : a.records()) out.Add(r);
  for (const auto &r : b.records()) out.Add(r);
  return out;
}

// Extracts features for every record of a manifest into an archive.
// Utterances without speech are listed in nospeech.tsv.
void ExtractArchive(const Manifest &m, FeatureKind kind, const fs::path &dir, int threads,
                    const Logger &log) {
  FeatureArchiveWriter writer(dir / "feats.ark");
  std::ofstream nospeech(dir / "nospeech.tsv");
  constexpr int kBlock = 256;
  const int n = static_cast<int>(m.size());
  for (int start = 0; start < n; start += kBlock) {
    const int len = std::min(kBlock, n - start);
    std::vector<std::optional<FeatureMatrix>> out(len);
    ParallelFor(len, threads, [&](int i) {
      const auto &r = m[start + i];
      try {
        out[i] = ExtractFeatures(ReadAudio(r.path), kind);
      } catch (const NoSpeechError &) {
        out[i].reset();
      } catch (const DataError &e) {
        throw DataError(r.id + ": " + e.what());
      }
    });
    for (int i = 0; i < len; ++i) {
      if (out[i]) {
        writer.Write(m[start + i].id, *out[i]);
      } else {
        nospeech << m[start + i].id << '\n';
        log("no speech detected in " + m[start + i].id);
      }
    }
  }
  writer.Close();
}

// Features of several archives, looked up by utterance id.
class FeatureStore {
 public:
  void Add(const fs::path &archive) {
    auto reader = std::make_unique<FeatureArchiveReader>(archive);
    const int k = static_cast<int>(readers_.size());
    for (const auto &id : reader->ids()) where_.emplace(id, k);
    readers_.push_back(std::move(reader));
  }
  std::optional<FeatureMatrix> Get(const std::string &id) {
    auto it = where_.find(id);
    if (it == where_.end()) return std::nullopt;
    return readers_[it->second]->Read(id);
  }

 private:
  std::vector<std::unique_ptr<FeatureArchiveReader>> readers_;
  std::unordered_map<std::string, int> where_;
};

std::vector<nnet::LabeledChunk> MakeChunks(const Manifest &m, FeatureStore *store, double chunk_s,
                                           const char *what, const Logger &log) {
  std::vector<nnet::LabeledChunk> out;
  const auto labels = m.LabelIndices();
  int dropped = 0;
  for (size_t i = 0; i < m.size(); ++i) {
    auto f = store->Get(m[i].id);
    if (!f) {
      ++dropped;
      continue;
    }
    for (auto &c : Chunk(*f, chunk_s)) out.push_back({std::move(c.data), labels[i]});
  }
  if (dropped > 0)
    log(std::to_string(dropped) + " " + what + " utterances without speech left out of training");
  return out;
}

void WarnMissing(const std::string &id) {
  Warn("no features for " + id + " (no speech); scored as uniform");
}

ScoreMatrix ScoreManifest(const ExperimentConfig &cfg, const Manifest &m, FeatureStore *store,
                          const nnet::NnetSystem *net, const gmm::GmmSet *gmms) {
  const LabelSet labels = m.labels();
  ScoreMatrix s;
  s.system = cfg.system;
  s.labels = labels;
  s.scores = Matrix::Zero(static_cast<Eigen::Index>(m.size()), labels.size());
  std::vector<int> present;
  std::vector<std::vector<FeatureMatrix>> chunks;
  for (size_t i = 0; i < m.size(); ++i) {
    s.ids.push_back(m[i].id);
    auto f = store->Get(m[i].id);
    if (!f) {
      WarnMissing(m[i].id);
      continue;
    }
    if (gmms) {
      s.scores.row(static_cast<Eigen::Index>(i)) = gmm::GmmScore(*gmms, *f).transpose();
    } else {
      present.push_back(static_cast<int>(i));
      chunks.push_back(Chunk(*f, cfg.chunk_s));
    }
  }
  if (net && !chunks.empty()) {
    Matrix sc = nnet::ScoreUtterances(net->model, chunks);
    for (size_t k = 0; k < present.size(); ++k) s.scores.row(present[k]) = sc.row(k);
  }
  s.Validate();
  return s;
}

std::vector<std::string> Languages(const Manifest &m) {
  std::vector<std::string> out;
  for (const auto &r : m.records()) out.push_back(r.language);
  return out;
}

std::vector<std::string> Ids(const Manifest &m) {
  std::vector<std::string> out;
  for (const auto &r : m.records()) out.push_back(r.id);
  return out;
}


}  // namespace

RunResult RunExperiment(const ExperimentConfig &cfg, const Logger &log) {
  cfg.Validate();
  if (cfg.manifest.empty()) throw UsageError("[data] manifest is required");
  const LabelSet labels = cfg.label_set();
  const fs::path work = cfg.work_dir;

  // split
  const std::string split_key = InStage("split", [&] {
    return Hash({ReadFile(cfg.manifest), cfg.manifest.parent_path().generic_string(),
                 SerializeConfig([&] {
                   ExperimentConfig c;
                   c.labels = cfg.labels;
                   c.train_sessions = cfg.train_sessions;
                   c.val_sessions = cfg.val_sessions;
                   c.seed = cfg.seed;
                   return c;
                 }())});
  });
  const fs::path split_dir = work / "split" / split_key;
  InStage("split", [&] {
    if (StageDone(split_dir)) return;
    log("split: " + cfg.manifest.string());
    BeginStage(split_dir);
    Manifest all = LoadManifest(cfg.manifest, labels);
    auto split = SplitSessions(all, {cfg.train_sessions, cfg.val_sessions, cfg.seed});
    SaveManifest(split_dir / "train.tsv", split.train);
    SaveManifest(split_dir / "val.tsv", split.val);
    EndStage(split_dir);
  });
  const Manifest train = LoadManifest(split_dir / "train.tsv", labels);
  const Manifest val = LoadManifest(split_dir / "val.tsv", labels);
  const std::string train_hash = HexDigest(Fnv1a64(ReadFile(split_dir / "train.tsv")));

  // augment
  std::vector<augment::Category> cats;
  if (cfg.augment.non_speech) cats.push_back(augment::Category::kAdditive);
  if (cfg.augment.signal_perturb) cats.push_back(augment::Category::kSignal);
  if (cfg.augment.enhancement) cats.push_back(augment::Category::kEnhance);
  std::vector<Manifest> augmented;
  std::vector<fs::path> aug_manifests;
  std::vector<std::string> stage_keys = {split_key};
  for (auto cat : cats) {
    const std::string name(augment::CategoryName(cat));
    InStage("augment " + name, [&] {
      augment::AdditiveSources sources;
      if (cat == augment::Category::kAdditive) {
        if (cfg.noise_dir.empty() && cfg.rir_dir.empty())
          throw UsageError("non-speech augmentation needs [data] noise_dir or rir_dir");
        sources = augment::AdditiveSources::FromDirectories(cfg.noise_dir, cfg.rir_dir);
        if (sources.empty()) throw DataError("no noise or impulse response files found");
      }
      const std::string key =
          Hash({train_hash, name, SourcesFingerprint(sources), std::to_string(cfg.seed)});
      const fs::path dir = work / "augment" / (name + "-" + key);
      if (!StageDone(dir)) {
        log("augment: " + name + " (" + std::to_string(train.size()) + " utterances)");
        BeginStage(dir);
        augment::AugmentJob job;
        job.category = cat;
        job.out_dir = dir / "wav";
        job.sources = sources;
        job.seed = Rng::Mix(cfg.seed ^ Fnv1a64(name));
        job.copies_per_utterance = 1;
        SaveManifest(dir / "manifest.tsv", augment::AugmentManifest(train, job));
        EndStage(dir);
      }
      aug_manifests.push_back(dir / "manifest.tsv");
      augmented.push_back(LoadManifest(dir / "manifest.tsv", labels));
      stage_keys.push_back(key);
    });
  }
  Manifest training = train;
  if (augmented.size() == 1) {
    training = Concat(train, augmented[0]);
  } else if (augmented.size() > 1) {
    const int target = static_cast<int>(std::lround(cfg.pool_factor * train.size()));
    training = PoolAugmented(train, augmented, target, cfg.seed);
  }

  // features
  FeatureStore store;
  auto feature_stage = [&](const fs::path &manifest_path, const Manifest &m) {
    InStage("features", [&] {
      const std::string key = Hash({HexDigest(Fnv1a64(ReadFile(manifest_path))),
                                    std::string(FeatureKindName(cfg.features))});
      const fs::path dir =
          work / "features" / (std::string(FeatureKindName(cfg.features)) + "-" + key);
      if (!StageDone(dir)) {
        log("features: " + std::string(FeatureKindName(cfg.features)) + " for " +
            std::to_string(m.size()) + " utterances of " + manifest_path.string());
        BeginStage(dir);
        ExtractArchive(m, cfg.features, dir, cfg.threads, log);
        EndStage(dir);
      }
      store.Add(dir / "feats.ark");
      stage_keys.push_back(key);
    });
  };
  feature_stage(split_dir / "train.tsv", train);
  feature_stage(split_dir / "val.tsv", val);
  for (size_t i = 0; i < augmented.size(); ++i) feature_stage(aug_manifests[i], augmented[i]);

  // train + score
  stage_keys.push_back(ConfigHash(cfg));
  RunResult res;
  res.run_dir = work / "runs" / (cfg.system + "-" + Hash(stage_keys));
  res.model = res.run_dir / "model.bin";
  res.scores_val = res.run_dir / "scores_val.tsv";
  res.scores_train = res.run_dir / "scores_train.tsv";
  res.key_val = res.run_dir / "key_val.tsv";
  if (StageDone(res.run_dir)) {
    log("run " + cfg.system + ": reusing " + res.run_dir.string());
    res.reused = true;
    return res;
  }
  BeginStage(res.run_dir);
  SaveConfig(res.run_dir / "config.ini", cfg);
  SaveManifest(res.run_dir / "train.tsv", training);
  SaveManifest(res.run_dir / "val.tsv", val);
  WriteKey(res.key_val, Ids(val), Languages(val));
  WriteKey(res.run_dir / "key_train.tsv", Ids(train), Languages(train));

  std::optional<nnet::NnetSystem> net;
  std::optional<gmm::GmmSet> gmms;
  if (cfg.classifier == Classifier::kGmm) {
    InStage("train-gmm", [&] {
      log("train-gmm: " + cfg.system + " on " + std::to_string(training.size()) + " utterances");
      const auto lab = training.LabelIndices();
      std::vector<std::vector<const UtteranceRecord *>> by_lang(labels.size());
      for (size_t i = 0; i < training.size(); ++i) by_lang[lab[i]].push_back(&training[i]);
      // Frame count first, to pick the UBM subsampling stride.
      std::vector<FeatureMatrix> feats(training.size());
      long long total = 0;
      for (size_t i = 0; i < training.size(); ++i) {
        auto f = store.Get(training[i].id);
        if (f) {
          total += f->frames();
          feats[i] = std::move(*f);
        }
      }
      if (total == 0) throw DataError("no training frames");
      const int dim = FeatureDim(cfg.features);
      const long long stride = std::max<long long>(1, (total + cfg.max_ubm_frames - 1) / cfg.max_ubm_frames);
      RowMatrix ubm_frames((total + stride - 1) / stride, dim);
      long long seen = 0, kept = 0;
      for (const auto &f : feats)
        for (int t = 0; t < f.frames(); ++t, ++seen)
          if (seen % stride == 0) ubm_frames.row(kept++) = f.data.row(t);
      ubm_frames.conservativeResize(kept, dim);
      gmm::EmTrace trace;
      gmm::GmmSet set;
      set.kind = cfg.features;
      set.labels = labels;
      set.ubm = gmm::TrainUbm(ubm_frames, cfg.ubm_options(), &trace);
      for (int l = 0; l < labels.size(); ++l) {
        long long n = 0;
        for (size_t i = 0; i < training.size(); ++i)
          if (lab[i] == l) n += feats[i].frames();
        RowMatrix frames(n, dim);
        long long r = 0;
        for (size_t i = 0; i < training.size(); ++i)
          if (lab[i] == l && feats[i].frames() > 0) {
            frames.middleRows(r, feats[i].frames()) = feats[i].data;
            r += feats[i].frames();
          }
        set.languages.push_back(gmm::MapAdaptMeans(set.ubm, frames, {cfg.relevance}));
      }
      gmm::SaveGmmSet(res.model, set);
      std::ofstream tr(res.run_dir / "ubm_trace.tsv");
      tr << "components\tavg_loglike\n";
      for (size_t i = 0; i < trace.avg_loglike.size(); ++i)
        tr << trace.num_components[i] << '\t' << Fmt(trace.avg_loglike[i]) << '\n';
      gmms = std::move(set);
    });
  } else {
    InStage("train-nnet", [&] {
      auto train_chunks = MakeChunks(training, &store, cfg.chunk_s, "training", log);
      auto val_chunks = MakeChunks(val, &store, cfg.chunk_s, "validation", log);
      if (train_chunks.empty()) throw DataError("no training chunks");
      log("train-nnet: " + cfg.system + " (" + std::string(ClassifierName(cfg.classifier)) +
          ") on " + std::to_string(train_chunks.size()) + " chunks, " +
          std::to_string(cfg.train.epochs) + " epochs");
      nnet::TrainConfig tc = cfg.train;
      tc.seed = Rng::Mix(cfg.seed ^ 0x747261696eULL);
      nnet::NnetSystem sys{cfg.features, labels,
                           nnet::TdnnModel(cfg.model_spec(labels.size()), cfg.seed)};
      auto records = nnet::Train(&sys.model, train_chunks, val_chunks, tc);
      nnet::WriteTrainLog(res.run_dir / "train_log.tsv", records);
      if (!records.empty())
        log("train-nnet: final train loss " + Fmt(records.back().train_loss) + ", val loss " +
            Fmt(records.back().val_loss));
      nnet::SaveNnet(res.model, sys);
      net = std::move(sys);
    });
  }

  InStage("score", [&] {
    log("score: " + cfg.system);
    const nnet::NnetSystem *np = net ? &*net : nullptr;
    const gmm::GmmSet *gp = gmms ? &*gmms : nullptr;
    ScoreMatrix sv = ScoreManifest(cfg, val, &store, np, gp);
    WriteScores(res.scores_val, sv);
    WriteScores(res.scores_train, ScoreManifest(cfg, train, &store, np, gp));
    auto report = metrics::MakeReport(sv.scores, val.LabelIndices(), labels.codes());
    metrics::WriteMetricsTsv(res.run_dir / "metrics.tsv", report);
    metrics::WriteLanguageEerTsv(res.run_dir / "language_eer.tsv", report);
    metrics::WriteConfusionTsv(res.run_dir / "confusion.tsv", report);
    WriteFile(res.run_dir / "report.txt", metrics::RenderReport(report));
    log("score: " + cfg.system + " validation EER " + Fmt(report.pooled_eer) + "%");
  });
  EndStage(res.run_dir);
  return res;
}

// ----- reporting ------------------------------------------------------------

MetricsRow SystemMetrics(const ScoreMatrix &s, const Key &key) {
  auto r = metrics::MakeReport(s.scores, LabelsFor(s, key), s.labels.codes());
  MetricsRow row;
  row.name = s.system;
  row.members = {s.system};
  row.eer = r.pooled_eer;
  row.mean_language_eer = r.mean_language_eer;
  row.act_c = r.cost.act;
  row.min_c = r.cost.min;
  return row;
}

RunReport FusionReport(const std::vector<ScoreMatrix> &systems, const Key &key,
                       std::vector<std::vector<std::string>> subsets,
                       const fusion::FusionOptions &opts) {
  if (systems.empty()) throw UsageError("fusion report needs at least one system");
  CheckAligned(systems);
  std::unordered_map<std::string, size_t> by_name;
  for (size_t i = 0; i < systems.size(); ++i)
    if (!by_name.emplace(systems[i].system, i).second)
      throw DataError("system '" + systems[i].system + "' appears twice");
  const auto labels = LabelsFor(systems[0], key);
  RunReport report;
  for (const auto &s : systems) report.rows.push_back(SystemMetrics(s, key));
  if (subsets.empty()) {
    subsets.emplace_back();
    for (const auto &s : systems) subsets.back().push_back(s.system);
  }
  for (const auto &subset : subsets) {
    if (subset.empty()) throw UsageError("empty fusion subset");
    std::vector<ScoreMatrix> chosen;
    std::string name;
    for (const auto &n : subset) {
      auto it = by_name.find(n);
      if (it == by_name.end()) throw UsageError("fusion subset names unknown system '" + n + "'");
      chosen.push_back(systems[it->second]);
      name += (name.empty() ? "" : "+") + n;
    }
    auto w = fusion::FitFusion(chosen, labels, opts);
    auto fused = fusion::ApplyFusion(w, chosen, name);
    MetricsRow row = SystemMetrics(fused, key);
    row.members = subset;
    row.alpha = w.alpha;
    report.rows.push_back(std::move(row));
  }
  return report;
}

RunReport FusionReportFromRuns(const std::vector<fs::path> &run_dirs,
                               std::vector<std::vector<std::string>> subsets) {
  if (run_dirs.empty()) throw UsageError("no run directories given");
  std::vector<ScoreMatrix> systems;
  Key key;
  for (const auto &dir : run_dirs) {
    if (!StageDone(dir)) throw DataError("run directory " + dir.string() + " is not complete");
    ExperimentConfig cfg = LoadConfig(dir / "config.ini");
    systems.push_back(ReadScores(dir / "scores_val.tsv", cfg.system));
    for (auto &[id, lang] : ReadKey(dir / "key_val.tsv")) {
      auto [it, fresh] = key.emplace(id, lang);
      if (!fresh && it->second != lang) throw DataError("conflicting key entries for " + id);
    }
  }
  return FusionReport(systems, key, std::move(subsets));
}

namespace {
std::string Join(const std::vector<std::string> &v, char sep) {
  std::string out;
  for (const auto &s : v) out += (out.empty() ? "" : std::string(1, sep)) + s;
  return out;
}
}  // namespace

void WriteRunReport(const fs::path &path, const RunReport &r) {
  std::ofstream out(path, std::ios::trunc);
  out << "name\tmembers\teer\tmean_language_eer\tact_cprimary\tmin_cprimary\talpha"
         "\tseconds_per_100\tpeak_rss_mb\n";
  for (const auto &row : r.rows) {
    std::vector<std::string> alpha;
    for (double a : row.alpha) alpha.push_back(Fmt(a));
    std::string secs = "NA", rss = "NA";
    for (const auto &b : r.bench)
      if (b.system == row.name) {
        secs = Fmt(b.seconds_per_100);
        rss = Fmt(b.peak_rss_mb);
      }
    out << row.name << '\t' << Join(row.members, ',') << '\t' << Fmt(row.eer) << '\t'
        << Fmt(row.mean_language_eer) << '\t' << Fmt(row.act_c) << '\t' << Fmt(row.min_c) << '\t'
        << (alpha.empty() ? "NA" : Join(alpha, ',')) << '\t' << secs << '\t' << rss << '\n';
  }
  if (!out) throw DataError("cannot write " + path.string());
}

std::string RenderRunReport(const RunReport &r) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %8s %10s %8s %8s\n", "system", "EER(%)", "meanEER(%)",
                "actC", "minC");
  os << buf;
  for (const auto &row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-24s %8.2f %10.2f %8.4f %8.4f\n", row.name.c_str(), row.eer,
                  row.mean_language_eer, row.act_c, row.min_c);
    os << buf;
  }
  for (const auto &b : r.bench) {
    std::snprintf(buf, sizeof buf, "%s: %.2f s per 100 files (%d files), peak memory %.1f MB\n",
                  b.system.c_str(), b.seconds_per_100, b.files, b.peak_rss_mb);
    os << buf;
  }
  return os.str();
}

double PeakRssMb() {
  struct rusage ru {};
  getrusage(RUSAGE_SELF, &ru);
  return static_cast<double>(ru.ru_maxrss) / 1024.0;
}

BenchResult Benchmark(const fs::path &run_dir, int n_files) {
  if (n_files <= 0) throw UsageError("empty benchmark set");
  if (!StageDone(run_dir)) throw DataError("run directory " + run_dir.string() + " is not complete");
  const ExperimentConfig cfg = LoadConfig(run_dir / "config.ini");
  const Manifest val = LoadManifest(run_dir / "val.tsv", cfg.label_set());
  if (val.empty()) throw UsageError("empty benchmark set");
  const int n = std::min<int>(n_files, static_cast<int>(val.size()));

  const auto start = std::chrono::steady_clock::now();
  std::optional<nnet::NnetSystem> net;
  std::optional<gmm::GmmSet> gmms;
  if (cfg.classifier == Classifier::kGmm)
    gmms = gmm::LoadGmmSet(run_dir / "model.bin");
  else
    net = nnet::LoadNnet(run_dir / "model.bin");
  double checksum = 0.0;
  for (int i = 0; i < n; ++i) {
    FeatureMatrix f;
    try {
      f = ExtractFeatures(ReadAudio(val[i].path), cfg.features);
    } catch (const NoSpeechError &) {
      continue;
    }
    Vector s = gmms ? gmm::GmmScore(*gmms, f) : nnet::ScoreUtterance(net->model, Chunk(f, cfg.chunk_s));
    checksum += s.sum();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!std::isfinite(checksum)) throw NumericError("non-finite scores during benchmark");
  BenchResult b;
  b.system = cfg.system;
  b.files = n;
  b.seconds = secs;
  b.seconds_per_100 = secs * 100.0 / n;
  b.peak_rss_mb = PeakRssMb();
  return b;
}

}  // namespace lidkit::experiment
