// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_SYNTH_HPP_
#define TSE_SYNTH_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tse/random.hpp"
#include "tse/signal.hpp"
#include "tse/wav.hpp"

namespace tse {

// Parametric voice: a jittered harmonic source with a fixed formant profile.
// Distinct f0/formant draws give the auxiliary network a learnable identity.
struct SyntheticSpeaker {
  int id = 0;
  double f0 = 120.0;
  std::array<double, 3> formant_hz{500.0, 1500.0, 2500.0};
  std::array<double, 3> formant_bw{80.0, 120.0, 180.0};
  double tilt = 1.3;          // harmonic rolloff exponent, per voice
  double formant_gain = 0.45;  // resonator mix, per voice
  std::uint64_t jitter_seed = 0;
};

inline std::vector<SyntheticSpeaker> make_speakers(int num,
                                                   std::uint64_t master_seed,
                                                   double f0_lo = 90.0,
                                                   double f0_hi = 250.0) {
  if (num < 2) throw std::invalid_argument("make_speakers: need >= 2 speakers");
  if (!(f0_hi > f0_lo) || f0_lo < 50.0)
    throw std::invalid_argument("make_speakers: bad f0 range");
  Rng rng = Rng(master_seed).fork(0xf0f0);
  std::vector<SyntheticSpeaker> out(num);
  const double step = num > 1 ? (f0_hi - f0_lo) / (num - 1) : 0.0;
  for (int i = 0; i < num; ++i) {
    SyntheticSpeaker& s = out[i];
    s.id = i;
    const double wiggle = step > 12.0 ? rng.uniform(-1.0, 1.0) : 0.0;
    s.f0 = f0_lo + i * step + wiggle;
    // Close-f0 speakers are forced apart in the first formant.
    s.formant_hz[0] = 300.0 + 110.0 * (i % 5) + rng.uniform(0.0, 40.0);
    s.formant_hz[1] = 900.0 + rng.uniform(0.0, 1100.0);
    s.formant_hz[2] = 2200.0 + rng.uniform(0.0, 1000.0);
    s.formant_bw = {rng.uniform(60.0, 120.0), rng.uniform(80.0, 160.0),
                    rng.uniform(120.0, 240.0)};
    s.tilt = rng.uniform(1.1, 1.7);
    s.formant_gain = rng.uniform(0.3, 0.7);
    s.jitter_seed = rng.next_u64();
  }
  for (int i = 0; i < num; ++i)
    for (int j = i + 1; j < num; ++j)
      if (std::abs(out[i].f0 - out[j].f0) < 10.0 &&
          std::abs(out[i].formant_hz[0] - out[j].formant_hz[0]) < 100.0)
        throw std::logic_error("make_speakers: speakers " + std::to_string(i) +
                               " and " + std::to_string(j) +
                               " are not distinct");
  return out;
}

namespace detail {

// Two-pole resonator with unit gain at its centre frequency.
struct Resonator {
  double a1, a2, g;
  double z1 = 0.0, z2 = 0.0;

  Resonator(double freq_hz, double bw_hz, int fs) {
    const double r = std::exp(-kPi * bw_hz / fs);
    const double w0 = 2.0 * kPi * freq_hz / fs;
    a1 = 2.0 * r * std::cos(w0);
    a2 = -r * r;
    const std::complex<double> z = std::polar(1.0, w0);
    const std::complex<double> denom = 1.0 - a1 / z - a2 / (z * z);
    g = std::abs(denom);
  }

  double tick(double x) {
    const double y = g * x + a1 * z1 + a2 * z2;
    z2 = z1;
    z1 = y;
    return y;
  }
};

}  // namespace detail

// Deterministic per (speaker, seed): harmonic source at a jittered f0,
// coloured by the formant profile, gated by a 2-6 Hz syllabic envelope,
// RMS-normalized to 0.1.
inline Waveform synth_utterance(const SyntheticSpeaker& speaker,
                                double duration_s, std::uint64_t seed,
                                int sample_rate = 8000) {
  if (duration_s < 0.5)
    throw std::invalid_argument("synth_utterance: duration must be >= 0.5 s");
  const int fs = sample_rate;
  const int n = static_cast<int>(std::lrint(duration_s * fs));
  Rng rng = Rng(speaker.jitter_seed).fork(seed);

  const int harmonics =
      std::max(1, static_cast<int>(0.45 * fs / speaker.f0));
  std::vector<double> amp(harmonics);
  for (int k = 0; k < harmonics; ++k)
    amp[k] = std::pow(static_cast<double>(k + 1), -speaker.tilt);

  const double vib_rate = rng.uniform(4.0, 5.5);
  const double vib_phase = rng.uniform(0.0, 2.0 * kPi);
  const double syll_rate = rng.uniform(2.0, 6.0);
  const double syll_phase = rng.uniform(0.0, 2.0 * kPi);
  const double wob_phase = rng.uniform(0.0, 2.0 * kPi);

  // Slow random f0 drift: one-pole filtered noise.
  double drift = 0.0;
  const double drift_pole = std::exp(-2.0 * kPi * 2.0 / fs);

  std::array<detail::Resonator, 3> reso = {
      detail::Resonator(speaker.formant_hz[0], speaker.formant_bw[0], fs),
      detail::Resonator(speaker.formant_hz[1], speaker.formant_bw[1], fs),
      detail::Resonator(speaker.formant_hz[2], speaker.formant_bw[2], fs)};

  Waveform w{std::vector<double>(n), fs};
  double phase = rng.uniform(0.0, 2.0 * kPi);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    drift = drift_pole * drift + (1.0 - drift_pole) * rng.normal(0.0, 0.4);
    const double f_inst =
        speaker.f0 *
        (1.0 + 0.006 * std::sin(2.0 * kPi * vib_rate * t + vib_phase) +
         0.01 * drift);
    phase += 2.0 * kPi * f_inst / fs;
    if (phase > 2.0 * kPi) phase -= 2.0 * kPi;
    // All harmonics share the fundamental phase track; the angle-addition
    // recurrence avoids a sin() per harmonic.
    const double s1 = std::sin(phase), c1 = std::cos(phase);
    double sk = s1, ck = c1;
    double src = amp[0] * s1;
    for (int k = 1; k < harmonics; ++k) {
      const double sn = sk * c1 + ck * s1;
      const double cn = ck * c1 - sk * s1;
      sk = sn;
      ck = cn;
      src += amp[k] * sk;
    }
    double y = 0.7 * src;
    for (auto& r : reso) y += speaker.formant_gain * r.tick(src);

    double env = 0.525 - 0.475 * std::cos(2.0 * kPi * syll_rate * t + syll_phase);
    env *= 1.0 + 0.1 * std::sin(2.0 * kPi * 0.3 * t + wob_phase);
    w.samples[i] = y * env;
  }
  // 20 ms fades keep file boundaries click-free.
  const int fade = std::min(n / 2, fs / 50);
  for (int i = 0; i < fade; ++i) {
    const double gf = 0.5 - 0.5 * std::cos(kPi * i / fade);
    w.samples[i] *= gf;
    w.samples[n - 1 - i] *= gf;
  }
  const double r = w.rms();
  if (r > 0.0)
    for (double& v : w.samples) v *= 0.1 / r;
  return w;
}

// ---------------------------------------------------------------------------
// Mixtures
// ---------------------------------------------------------------------------

struct MixtureRecord {
  std::string mixture_path;
  std::string target_path;
  std::string interferer_path;
  std::string adaptation_path;
  int target_speaker = -1;
  double sir_db = 0.0;
  double rt60 = 0.0;
  int interferer_speaker = -1;
  std::string tag;  // "hard" (close f0) or "easy"
};

struct MixtureAudio {
  std::vector<Waveform> mixture;  // 1 or 2 channels
  Waveform target;                // reference as heard at channel 1
  Waveform interferer;
};

namespace detail {
inline double quantize_f32(double v) {
  return static_cast<double>(static_cast<float>(v));
}
inline Waveform quantize_f32(Waveform w) {
  for (double& v : w.samples) v = quantize_f32(v);
  return w;
}
}  // namespace detail

// Scales the interferer to the requested SIR (post-reverb powers), sums.
// Sources are pre-quantized to the float32 grid that the files use, so the
// returned mixture equals the sum of the written sources exactly.
inline MixtureAudio make_mixture_audio(const Waveform& target_utt,
                                       const Waveform& interferer_utt,
                                       double sir_db, double rt60,
                                       int channels, std::uint64_t seed) {
  if (sir_db < -10.0 || sir_db > 10.0)
    throw std::invalid_argument("make_mixture: SIR must lie in [-10, 10] dB");
  if (channels != 1 && channels != 2)
    throw std::invalid_argument("make_mixture: channels must be 1 or 2");
  const std::size_t len =
      std::min(target_utt.samples.size(), interferer_utt.samples.size());
  Waveform tgt{{target_utt.samples.begin(), target_utt.samples.begin() + len},
               target_utt.sample_rate};
  Waveform itf{{interferer_utt.samples.begin(),
                interferer_utt.samples.begin() + len},
               interferer_utt.sample_rate};

  MixtureAudio out;
  Rng rng(Rng::mix64(seed));
  double gain = 1.0;  // one interferer level, shared by both channels
  for (int c = 0; c < channels; ++c) {
    const std::uint64_t tgt_seed = rng.next_u64();
    const std::uint64_t itf_seed = rng.next_u64();
    Waveform tgt_c = apply_reverb(tgt, rt60, tgt_seed);
    Waveform itf_c = apply_reverb(itf, rt60, itf_seed);
    if (c == 0) {
      const double pt = tgt_c.rms(), pi = itf_c.rms();
      if (!(pi > 0.0) || !(pt > 0.0))
        throw std::invalid_argument("make_mixture: silent source");
      gain = (pt / pi) * std::pow(10.0, -sir_db / 20.0);
      if (std::abs(gain - 1.0) < 1e-9) gain = 1.0;  // below float32 resolution
    }
    for (double& v : itf_c.samples) v *= gain;
    tgt_c = detail::quantize_f32(std::move(tgt_c));
    itf_c = detail::quantize_f32(std::move(itf_c));
    Waveform mix = tgt_c;
    for (std::size_t i = 0; i < len; ++i) mix.samples[i] += itf_c.samples[i];
    if (c == 0) {
      out.target = tgt_c;
      out.interferer = itf_c;
    }
    out.mixture.push_back(std::move(mix));
  }
  return out;
}

inline MixtureRecord make_mixture(const Waveform& target_utt,
                                  const Waveform& interferer_utt,
                                  double sir_db, double rt60, int channels,
                                  std::uint64_t seed,
                                  const std::string& out_dir,
                                  const std::string& stem) {
  MixtureAudio audio = make_mixture_audio(target_utt, interferer_utt, sir_db,
                                          rt60, channels, seed);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  MixtureRecord rec;
  rec.mixture_path = stem + ".mix.wav";
  rec.target_path = stem + ".target.wav";
  rec.interferer_path = stem + ".interf.wav";
  rec.sir_db = sir_db;
  rec.rt60 = rt60;
  write_wav((fs::path(out_dir) / rec.mixture_path).string(), audio.mixture,
            WavEncoding::float32);
  write_wav((fs::path(out_dir) / rec.target_path).string(), {audio.target},
            WavEncoding::float32);
  write_wav((fs::path(out_dir) / rec.interferer_path).string(),
            {audio.interferer}, WavEncoding::float32);
  return rec;
}

// ---------------------------------------------------------------------------
// Dataset generation and manifests
// ---------------------------------------------------------------------------

struct DatasetSpec {
  int num_speakers = 8;
  int utts_per_speaker = 15;  // utterance pool; two utterances per mixture
  // A narrow pitch range makes roughly half the pairs close-f0 ("hard"),
  // the regime where dynamic speaker bias has something to add.
  double f0_min = 100.0, f0_max = 170.0;
  double split_train = 2.0 / 3;
  double split_val = 1.0 / 6;
  double split_test = 1.0 / 6;
  int channels = 1;
  double sir_min = -5.0, sir_max = 5.0;
  // Anechoic by default: per-mixture random impulse responses do not
  // generalize from 40 training mixtures. Reverberant corpora are one
  // --rt60-min/--rt60-max away.
  double rt60_min = 0.0, rt60_max = 0.0;
  double duration_s = 4.0;
  // Longer enrollments stabilize the speaker embedding on unseen test
  // utterances; mixtures stay at duration_s.
  double adaptation_duration_s = 6.0;
  std::uint64_t master_seed = 1;
};

struct Dataset {
  std::vector<SyntheticSpeaker> speakers;
  std::vector<MixtureRecord> train, val, test;
};

namespace detail {

inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

inline void write_manifest(const std::string& path,
                           const std::vector<MixtureRecord>& records) {
  std::ofstream fs(path, std::ios::binary);
  if (!fs) throw IoError("write_manifest: cannot open '" + path + "'");
  for (const MixtureRecord& r : records)
    fs << r.mixture_path << '\t' << r.target_path << '\t' << r.interferer_path
       << '\t' << r.adaptation_path << '\t' << r.target_speaker << '\t'
       << detail::fmt6(r.sir_db) << '\t' << detail::fmt6(r.rt60) << '\t'
       << r.interferer_speaker << '\t' << r.tag << '\n';
}

inline std::vector<MixtureRecord> read_manifest(const std::string& path) {
  std::ifstream fs(path);
  if (!fs) throw IoError("read_manifest: cannot open '" + path + "'");
  std::vector<MixtureRecord> out;
  std::string line;
  while (std::getline(fs, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    MixtureRecord r;
    std::string ts, sir, rt, is;
    if (!std::getline(ls, r.mixture_path, '\t') ||
        !std::getline(ls, r.target_path, '\t') ||
        !std::getline(ls, r.interferer_path, '\t') ||
        !std::getline(ls, r.adaptation_path, '\t') ||
        !std::getline(ls, ts, '\t') || !std::getline(ls, sir, '\t') ||
        !std::getline(ls, rt, '\t') || !std::getline(ls, is, '\t') ||
        !std::getline(ls, r.tag, '\t'))
      throw IoError("read_manifest: malformed line in '" + path + "'");
    r.target_speaker = std::stoi(ts);
    r.sir_db = std::stod(sir);
    r.rt60 = std::stod(rt);
    r.interferer_speaker = std::stoi(is);
    out.push_back(std::move(r));
  }
  return out;
}

// Builds the synthetic corpus: a pool of utterances, disjoint two-speaker
// pairings, per-mixture anechoic adaptation utterances, manifests. A pure
// function of the spec, so reruns are byte-identical.
inline Dataset gen_dataset(const DatasetSpec& spec, const std::string& out_dir) {
  if (spec.num_speakers < 4)
    throw std::invalid_argument(
        "gen_dataset: need at least 4 speakers for disjoint pairing");
  if (spec.utts_per_speaker < 1)
    throw std::invalid_argument("gen_dataset: utts_per_speaker must be >= 1");
  const double split_sum =
      spec.split_train + spec.split_val + spec.split_test;
  if (spec.split_train < 0 || spec.split_val < 0 || spec.split_test < 0 ||
      std::abs(split_sum - 1.0) > 1e-9)
    throw std::invalid_argument("gen_dataset: splits must sum to 1");

  namespace fs = std::filesystem;
  const fs::path wav_dir = fs::path(out_dir) / "wav";
  fs::create_directories(wav_dir);

  Dataset ds;
  ds.speakers = make_speakers(spec.num_speakers, spec.master_seed,
                              spec.f0_min, spec.f0_max);
  Rng rng = Rng(spec.master_seed).fork(0xda7a);

  // Utterance pool: every entry becomes exactly one mixture side, so no
  // waveform is shared between splits.
  struct PoolEntry {
    int speaker;
    std::uint64_t seed;
  };
  std::vector<PoolEntry> pool;
  for (int s = 0; s < spec.num_speakers; ++s)
    for (int u = 0; u < spec.utts_per_speaker; ++u)
      pool.push_back(
          {s, Rng::mix64(spec.master_seed ^
                         (static_cast<std::uint64_t>(s) * 7919 + u))});
  for (std::size_t i = pool.size(); i > 1; --i)
    std::swap(pool[i - 1], pool[rng.uniform_int(i)]);

  const int num_mixtures = static_cast<int>(pool.size() / 2);
  const int n_train =
      static_cast<int>(std::lround(num_mixtures * spec.split_train));
  const int n_val =
      static_cast<int>(std::lround(num_mixtures * spec.split_val));

  std::vector<bool> used(pool.size(), false);
  int made = 0;
  for (std::size_t i = 0; i < pool.size() && made < num_mixtures; ++i) {
    if (used[i]) continue;
    std::size_t j = i + 1;
    while (j < pool.size() && (used[j] || pool[j].speaker == pool[i].speaker))
      ++j;
    if (j == pool.size()) break;  // only same-speaker leftovers remain
    used[i] = used[j] = true;

    const SyntheticSpeaker& tgt_spk = ds.speakers[pool[i].speaker];
    const SyntheticSpeaker& itf_spk = ds.speakers[pool[j].speaker];
    const double sir = rng.uniform(spec.sir_min, spec.sir_max);
    const double rt60 = rng.uniform(spec.rt60_min, spec.rt60_max);
    const std::uint64_t mix_seed = rng.next_u64();

    Waveform tgt = synth_utterance(tgt_spk, spec.duration_s, pool[i].seed);
    Waveform itf = synth_utterance(itf_spk, spec.duration_s, pool[j].seed);

    char stem[32];
    std::snprintf(stem, sizeof stem, "m%04d", made);
    MixtureRecord rec = make_mixture(tgt, itf, sir, rt60, spec.channels,
                                     mix_seed, wav_dir.string(), stem);
    rec.mixture_path = "wav/" + rec.mixture_path;
    rec.target_path = "wav/" + rec.target_path;
    rec.interferer_path = "wav/" + rec.interferer_path;
    rec.target_speaker = tgt_spk.id;
    rec.interferer_speaker = itf_spk.id;
    rec.tag = std::abs(tgt_spk.f0 - itf_spk.f0) < 30.0 ? "hard" : "easy";

    // The adaptation utterance is a different recording of the target
    // speaker and is always anechoic.
    const std::uint64_t adapt_seed =
        Rng::mix64(spec.master_seed ^ (0xadab000ULL + made));
    Waveform adapt =
        synth_utterance(tgt_spk, spec.adaptation_duration_s, adapt_seed);
    rec.adaptation_path = std::string("wav/") + stem + ".adapt.wav";
    write_wav((fs::path(out_dir) / rec.adaptation_path).string(), {adapt},
              WavEncoding::float32);

    if (made < n_train)
      ds.train.push_back(std::move(rec));
    else if (made < n_train + n_val)
      ds.val.push_back(std::move(rec));
    else
      ds.test.push_back(std::move(rec));
    ++made;
  }
  if (made < num_mixtures)
    throw std::invalid_argument(
        "gen_dataset: could not build disjoint speaker pairs; add speakers "
        "or utterances");

  write_manifest((fs::path(out_dir) / "train.tsv").string(), ds.train);
  write_manifest((fs::path(out_dir) / "val.tsv").string(), ds.val);
  write_manifest((fs::path(out_dir) / "test.tsv").string(), ds.test);
  std::ofstream sp((fs::path(out_dir) / "speakers.tsv").string(),
                   std::ios::binary);
  for (const SyntheticSpeaker& s : ds.speakers)
    sp << s.id << '\t' << detail::fmt6(s.f0) << '\t'
       << detail::fmt6(s.formant_hz[0]) << '\t'
       << detail::fmt6(s.formant_hz[1]) << '\t'
       << detail::fmt6(s.formant_hz[2]) << '\n';
  return ds;
}

}  // namespace tse

#endif  // TSE_SYNTH_HPP_
