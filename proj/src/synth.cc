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

#include "lidkit/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "lidkit/rng.h"

namespace lidkit::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Unit {
  bool voiced = true;
  double f0_ratio = 1.0;  // relative to the session pitch
  double formant1 = 500.0, formant2 = 1500.0;
  double bandwidth = 150.0;
  double level = 1.0;
};

struct Language {
  std::vector<double> initial;
  std::vector<std::vector<double>> transition;
  std::vector<double> unit_ms;  // mean duration of each unit
  double pause_ms = 150.0;
};

struct Session {
  double pitch_hz = 140.0;
  double tilt = 0.0;  // one-pole coefficient of the channel
  double noise_db = -40.0;
  double gain = 0.3;
};

std::vector<double> Normalized(std::vector<double> w) {
  double s = 0.0;
  for (double v : w) s += v;
  for (double &v : w) v /= s;
  return w;
}

int Draw(Rng &rng, const std::vector<double> &p) {
  double u = rng.Uniform(), acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

std::vector<Unit> MakeInventory(const CorpusSpec &spec) {
  Rng rng = Rng::Derive(spec.seed, "synth/units");
  std::vector<Unit> units(spec.num_units);
  for (int i = 0; i < spec.num_units; ++i) {
    Unit &u = units[i];
    u.voiced = (i % 4) != 3;
    u.f0_ratio = rng.Uniform(0.85, 1.2);
    u.formant1 = rng.Uniform(250.0, 900.0);
    u.formant2 = rng.Uniform(u.formant1 + 400.0, 3200.0);
    u.bandwidth = u.voiced ? rng.Uniform(80.0, 200.0) : rng.Uniform(300.0, 900.0);
    u.level = rng.Uniform(0.6, 1.0);
  }
  return units;
}

Language MakeLanguage(const CorpusSpec &spec, int lang) {
  // Each distribution mixes a part shared by all languages with a part of
  // the language's own, weighted by spec.distinctness.
  Rng shared_rng = Rng::Derive(spec.seed, "synth/language/shared");
  Rng own_rng = Rng::Derive(spec.seed, "synth/language/" + std::to_string(lang));
  const int n = spec.num_units;
  const double w = spec.distinctness;
  auto draw = [&](Rng &rng, double spread) {
    std::vector<double> v(n);
    for (double &x : v) x = std::exp(spread * rng.Normal());
    return Normalized(v);
  };
  auto mix = [&](const std::vector<double> &a, const std::vector<double> &b) {
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = (1.0 - w) * a[i] + w * b[i];
    return out;
  };
  Language l;
  l.initial = mix(draw(shared_rng, 1.5), draw(own_rng, 1.5));
  l.transition.resize(n);
  for (int i = 0; i < n; ++i) l.transition[i] = mix(draw(shared_rng, 2.0), draw(own_rng, 2.0));
  l.unit_ms.resize(n);
  for (int i = 0; i < n; ++i) {
    double a = shared_rng.Uniform(50.0, 150.0), b = own_rng.Uniform(50.0, 150.0);
    l.unit_ms[i] = (1.0 - w) * a + w * b;
  }
  l.pause_ms = (1.0 - w) * shared_rng.Uniform(80.0, 250.0) + w * own_rng.Uniform(80.0, 250.0);
  return l;
}

Session MakeSession(const CorpusSpec &spec, int lang, int session) {
  Rng rng = Rng::Derive(spec.seed,
                        "synth/session/" + std::to_string(lang) + "/" + std::to_string(session));
  Session s;
  s.pitch_hz = rng.Uniform(90.0, 220.0);
  s.tilt = rng.Uniform(-0.6, 0.6);
  s.noise_db = rng.Uniform(-50.0, -30.0);
  s.gain = std::pow(10.0, rng.Uniform(-16.0, -6.0) / 20.0);
  return s;
}

// Magnitude response of a pair of resonances at frequency f.
double FormantGain(const Unit &u, double f) {
  auto peak = [&](double fc) {
    double x = (f - fc) / u.bandwidth;
    return 1.0 / (1.0 + x * x);
  };
  return peak(u.formant1) + 0.7 * peak(u.formant2) + 0.02;
}

// Two-pole resonator applied in place.
void Resonate(std::vector<double> *x, double fc, double bw, int sr) {
  const double r = std::exp(-std::numbers::pi * bw / sr);
  const double a1 = -2.0 * r * std::cos(kTwoPi * fc / sr), a2 = r * r;
  const double g = (1.0 - r);
  double y1 = 0.0, y2 = 0.0;
  for (double &v : *x) {
    double y = g * v - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

void Envelope(std::vector<double> *x, int ramp) {
  const int n = static_cast<int>(x->size());
  ramp = std::min(ramp, n / 2);
  for (int i = 0; i < ramp; ++i) {
    double w = 0.5 - 0.5 * std::cos(std::numbers::pi * (i + 0.5) / ramp);
    (*x)[i] *= w;
    (*x)[n - 1 - i] *= w;
  }
}

std::vector<double> RenderUnit(const Unit &u, double pitch_hz, int samples, Rng &rng) {
  const int sr = kSampleRate;
  std::vector<double> out(samples, 0.0);
  if (u.voiced) {
    const double f0 = pitch_hz * u.f0_ratio;
    const double glide = rng.Uniform(-0.08, 0.08);
    for (int h = 1; h * f0 < 0.45 * sr; ++h) {
      const double amp = FormantGain(u, h * f0) / std::sqrt(h);
      double phase = rng.Uniform(0.0, kTwoPi);
      for (int i = 0; i < samples; ++i) {
        double f = h * f0 * (1.0 + glide * i / samples);
        phase += kTwoPi * f / sr;
        out[i] += amp * std::sin(phase);
      }
    }
  } else {
    for (double &v : out) v = rng.Normal();
    Resonate(&out, u.formant2, u.bandwidth, sr);
    Resonate(&out, u.formant2, u.bandwidth, sr);
  }
  double p = Power(out);
  if (p > 0.0) {
    double s = u.level / std::sqrt(p);
    for (double &v : out) v *= s;
  }
  Envelope(&out, sr / 100);
  return out;
}

std::vector<double> RenderSpeech(const std::vector<Unit> &units, const Language &lang,
                                 double pitch_hz, int samples, Rng &rng) {
  const int sr = kSampleRate;
  std::vector<double> out;
  out.reserve(samples);
  int prev = -1;
  auto ms = [&](double v) { return static_cast<int>(v * sr / 1000.0); };
  out.resize(ms(rng.Uniform(50.0, 200.0)), 0.0);
  while (static_cast<int>(out.size()) < samples) {
    const int word_len = 3 + static_cast<int>(rng.Index(5));
    for (int k = 0; k < word_len && static_cast<int>(out.size()) < samples; ++k) {
      int u = prev < 0 ? Draw(rng, lang.initial) : Draw(rng, lang.transition[prev]);
      prev = u;
      int len = std::max(ms(20.0), ms(lang.unit_ms[u] * rng.Uniform(0.75, 1.25)));
      auto seg = RenderUnit(units[u], pitch_hz, len, rng);
      out.insert(out.end(), seg.begin(), seg.end());
    }
    out.resize(out.size() + ms(lang.pause_ms * rng.Uniform(0.6, 1.4)), 0.0);
    prev = -1;
  }
  out.resize(samples);
  return out;
}

void Normalize(std::vector<double> *x, double rms) {
  double p = Power(*x);
  if (p <= 0.0) return;
  double s = rms / std::sqrt(p);
  double peak = PeakAbs(*x) * s;
  if (peak > 0.95) s *= 0.95 / peak;
  for (double &v : *x) v *= s;
}

std::string Zero(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d", width, v);
  return buf;
}

}  // namespace

void CorpusSpec::Validate() const {
  if (num_languages < 2) throw UsageError("synthetic corpus needs at least 2 languages");
  if (sessions_per_language < 1 || utterances_per_session < 1)
    throw UsageError("synthetic corpus needs at least one session and utterance");
  if (!(min_duration_s > 0.0) || max_duration_s < min_duration_s)
    throw UsageError("invalid synthetic utterance duration range");
  if (num_units < 2) throw UsageError("synthetic corpus needs at least 2 units");
  if (!(distinctness >= 0.0 && distinctness <= 1.0))
    throw UsageError("distinctness must lie in [0, 1]");
  if (noise_files < 0 || music_files < 0 || babble_files < 0 || rir_files < 0 ||
      !(background_duration_s > 0.0))
    throw UsageError("invalid synthetic background configuration");
}

LabelSet SyntheticLabels(int num_languages) {
  std::vector<std::string> codes;
  for (int i = 0; i < num_languages; ++i) codes.push_back("syn" + std::to_string(i));
  return LabelSet(std::move(codes));
}

AudioBuffer SynthesizeUtterance(const CorpusSpec &spec, int language, int session,
                                int utterance, double duration_s) {
  const std::vector<Unit> units = MakeInventory(spec);
  const Language lang = MakeLanguage(spec, language);
  const Session ses = MakeSession(spec, language, session);
  Rng rng = Rng::Derive(spec.seed, "synth/utt/" + std::to_string(language) + "/" +
                                       std::to_string(session) + "/" + std::to_string(utterance));
  const int samples = static_cast<int>(std::lround(duration_s * kSampleRate));
  std::vector<double> x = RenderSpeech(units, lang, ses.pitch_hz * rng.Uniform(0.95, 1.05),
                                       samples, rng);
  // Channel: first-order tilt, then background noise and gain.
  double prev = 0.0;
  for (double &v : x) {
    double y = v - ses.tilt * prev;
    prev = v;
    v = y;
  }
  Normalize(&x, 1.0);
  const double noise_amp = std::pow(10.0, ses.noise_db / 20.0);
  for (double &v : x) v = ses.gain * (v + noise_amp * rng.Normal());
  for (double &v : x) v = std::clamp(v, -1.0, 1.0);
  AudioBuffer out;
  out.samples = std::move(x);
  return out;
}

namespace {

AudioBuffer Noise(Rng &rng, int samples) {
  std::vector<double> x(samples);
  for (double &v : x) v = rng.Normal();
  // Random spectral colour from a short cascade of resonances.
  int bands = 1 + static_cast<int>(rng.Index(3));
  std::vector<double> mix(samples, 0.0);
  for (int b = 0; b < bands; ++b) {
    auto y = x;
    Resonate(&y, rng.Uniform(200.0, 3000.0), rng.Uniform(300.0, 1500.0), kSampleRate);
    for (int i = 0; i < samples; ++i) mix[i] += y[i];
  }
  for (int i = 0; i < samples; ++i) mix[i] += 0.1 * x[i];
  Normalize(&mix, 0.1);
  AudioBuffer out;
  out.samples = std::move(mix);
  return out;
}

AudioBuffer Music(Rng &rng, int samples) {
  std::vector<double> x(samples, 0.0);
  const int note = kSampleRate / 4;
  for (int start = 0; start < samples; start += note) {
    const int len = std::min(note, samples - start);
    for (int voice = 0; voice < 3; ++voice) {
      const double f = 110.0 * std::pow(2.0, static_cast<double>(rng.Index(36)) / 12.0);
      for (int h = 1; h <= 4 && h * f < 3800.0; ++h) {
        for (int i = 0; i < len; ++i) {
          double decay = std::exp(-3.0 * i / note);
          x[start + i] += decay * std::sin(kTwoPi * h * f * i / kSampleRate) / h;
        }
      }
    }
  }
  Normalize(&x, 0.1);
  AudioBuffer out;
  out.samples = std::move(x);
  return out;
}

AudioBuffer Rir(Rng &rng) {
  const double rt60 = rng.Uniform(0.15, 0.6);
  const int samples = static_cast<int>(rt60 * kSampleRate);
  std::vector<double> h(samples, 0.0);
  const int delay = static_cast<int>(rng.Index(40));
  h[delay] = 1.0;
  const double decay = std::log(1000.0) / (rt60 * kSampleRate);
  for (int i = delay + 1; i < samples; ++i) h[i] = 0.3 * rng.Normal() * std::exp(-decay * i);
  AudioBuffer out;
  out.samples = std::move(h);
  double peak = PeakAbs(out.samples);
  for (double &v : out.samples) v /= peak;
  return out;
}

}  // namespace

CorpusLayout GenerateCorpus(const std::filesystem::path &root, const CorpusSpec &spec) {
  spec.Validate();
  namespace fs = std::filesystem;
  CorpusLayout layout;
  layout.labels = SyntheticLabels(spec.num_languages);
  layout.manifest = root / "manifest.tsv";
  layout.noise_dir = root / "noise";
  layout.rir_dir = root / "rir";
  fs::create_directories(root);

  Manifest manifest(layout.labels);
  for (int l = 0; l < spec.num_languages; ++l) {
    const std::string code = layout.labels.code(l);
    for (int s = 0; s < spec.sessions_per_language; ++s) {
      const std::string session = code + "-s" + Zero(s, 3);
      const fs::path dir = root / "wav" / code / session;
      fs::create_directories(dir);
      for (int u = 0; u < spec.utterances_per_session; ++u) {
        Rng drng = Rng::Derive(spec.seed, "synth/duration/" + std::to_string(l) + "/" +
                                              std::to_string(s) + "/" + std::to_string(u));
        const double dur = drng.Uniform(spec.min_duration_s, spec.max_duration_s);
        AudioBuffer audio = SynthesizeUtterance(spec, l, s, u, dur);
        const std::string id = session + "-u" + Zero(u, 3);
        const fs::path path = dir / (id + ".wav");
        WriteWav(path, audio);
        manifest.Add({id, fs::relative(path, root), code, session, audio.duration_s(),
                      Origin::kOriginal});
      }
    }
  }
  SaveManifest(layout.manifest, manifest);

  const int bg = static_cast<int>(spec.background_duration_s * kSampleRate);
  auto write_set = [&](const fs::path &dir, const std::string &stem, int count, auto make) {
    fs::create_directories(dir);
    for (int i = 0; i < count; ++i) {
      Rng rng = Rng::Derive(spec.seed, "synth/" + stem + "/" + std::to_string(i));
      WriteWav(dir / (stem + Zero(i, 3) + ".wav"), make(rng));
    }
  };
  write_set(layout.noise_dir / "noise", "noise", spec.noise_files,
            [&](Rng &rng) { return Noise(rng, bg); });
  write_set(layout.noise_dir / "music", "music", spec.music_files,
            [&](Rng &rng) { return Music(rng, bg); });
  write_set(layout.noise_dir / "babble", "babble", spec.babble_files, [&](Rng &rng) {
    // Overlapped talkers from every language, at sessions outside the corpus.
    AudioBuffer sum;
    sum.samples.assign(bg, 0.0);
    for (int talker = 0; talker < 5; ++talker) {
      int lang = static_cast<int>(rng.Index(spec.num_languages));
      int ses = spec.sessions_per_language + static_cast<int>(rng.Index(1000));
      AudioBuffer t = SynthesizeUtterance(spec, lang, ses, talker, spec.background_duration_s);
      for (int i = 0; i < bg && i < static_cast<int>(t.size()); ++i) sum.samples[i] += t.samples[i];
    }
    Normalize(&sum.samples, 0.1);
    return sum;
  });
  write_set(layout.rir_dir, "rir", spec.rir_files, [&](Rng &rng) { return Rir(rng); });
  return layout;
}

}  // namespace lidkit::synth
