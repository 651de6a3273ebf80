// corpus.cpp

// Copyright 2026  tsvkit authors

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

#include "tsv/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace tsv::corpus {

namespace {

constexpr double kPitchLow = 85.0, kPitchHigh = 260.0;
constexpr double kTractLow = 0.82, kTractHigh = 1.18;
constexpr std::array<double, 4> kNeutralFormants = {550.0, 1550.0, 2500.0, 3300.0};
constexpr double kTargetRms = 0.08;

std::string numbered(const char* prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, n);
  return buf;
}

// Second-order sections of the all-pole envelope, as (a1, a2) per resonance.
std::array<std::array<double, 2>, 4> resonators(const std::array<double, 4>& freqs,
                                                const std::array<double, 4>& bws) {
  std::array<std::array<double, 2>, 4> out{};
  for (int i = 0; i < 4; ++i) {
    const double r = std::exp(-std::numbers::pi * bws[i] / dsp::kSampleRate);
    const double theta = 2.0 * std::numbers::pi * freqs[i] / dsp::kSampleRate;
    out[i] = {-2.0 * r * std::cos(theta), r * r};
  }
  return out;
}

}  // namespace

void ToyCorpusSpec::validate() const {
  if (train_speakers < 2) throw std::invalid_argument("toy corpus needs at least 2 training speakers");
  if (eval_speakers < 0) throw std::invalid_argument("eval_speakers must be non-negative");
  if (utterances_per_speaker < 2) throw std::invalid_argument("toy corpus needs at least 2 utterances per speaker");
  if (!(min_seconds >= 0.1 && max_seconds >= min_seconds))
    throw std::invalid_argument("toy durations must satisfy 0.1 <= min_seconds <= max_seconds");
}

std::vector<SpeakerProfile> make_speaker_profiles(const ToyCorpusSpec& spec) {
  const int total = spec.train_speakers + spec.eval_speakers;
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + 17);
  std::vector<int> pitch_strata(total), tract_strata(total);
  std::iota(pitch_strata.begin(), pitch_strata.end(), 0);
  std::iota(tract_strata.begin(), tract_strata.end(), 0);
  std::shuffle(pitch_strata.begin(), pitch_strata.end(), rng);
  std::shuffle(tract_strata.begin(), tract_strata.end(), rng);

  std::uniform_real_distribution<double> inner(0.2, 0.8), jitter(-0.05, 0.05), bw(60.0, 120.0);
  std::vector<SpeakerProfile> out;
  for (int s = 0; s < total; ++s) {
    SpeakerProfile p;
    p.id = numbered(s < spec.train_speakers ? "trn" : "evl", s < spec.train_speakers ? s : s - spec.train_speakers);
    const double u = (pitch_strata[s] + inner(rng)) / total;
    p.pitch_hz = kPitchLow * std::pow(kPitchHigh / kPitchLow, u);
    const double tract = kTractLow + (kTractHigh - kTractLow) * (tract_strata[s] + inner(rng)) / total;
    for (int i = 0; i < 4; ++i) {
      p.formants_hz[i] = std::min(kNeutralFormants[i] * tract * (1.0 + jitter(rng)), 3700.0);
      p.bandwidths_hz[i] = bw(rng);
    }
    out.push_back(p);
  }
  return out;
}

dsp::Waveform synthesize_utterance(const SpeakerProfile& speaker, double seconds, std::mt19937_64& rng) {
  const std::size_t length = std::size_t(std::lround(seconds * dsp::kSampleRate));
  std::vector<double> out(length, 0.0);
  std::uniform_real_distribution<double> syllable(0.12, 0.30), gap(0.02, 0.10), unit(0.0, 1.0), vowel(-0.10, 0.10),
      contour(-0.08, 0.08), jitter(-0.01, 0.01);
  std::normal_distribution<double> noise;

  std::array<double, 4> y1{}, y2{};  // resonator state carried across syllables
  std::size_t pos = std::size_t(gap(rng) * dsp::kSampleRate);
  while (pos < length) {
    const std::size_t dur = std::min<std::size_t>(std::size_t(syllable(rng) * dsp::kSampleRate), length - pos);
    const bool voiced = unit(rng) < 0.85;
    std::array<double, 4> freqs = speaker.formants_hz;
    freqs[0] *= 1.0 + vowel(rng);
    freqs[1] *= 1.0 + vowel(rng);
    const auto coeffs = resonators(freqs, speaker.bandwidths_hz);
    const double start_f0 = speaker.pitch_hz * (1.0 + contour(rng));
    const double end_f0 = speaker.pitch_hz * (1.0 + contour(rng));
    const std::size_t ramp = std::min<std::size_t>(120, dur / 2);
    double phase = unit(rng), period_scale = 1.0;

    for (std::size_t n = 0; n < dur; ++n) {
      double excitation;
      if (voiced) {
        const double f0 = start_f0 + (end_f0 - start_f0) * double(n) / double(dur);
        phase += f0 * period_scale / dsp::kSampleRate;
        excitation = 0.02 * noise(rng);
        if (phase >= 1.0) {
          phase -= 1.0;
          period_scale = 1.0 + jitter(rng);
          excitation += 1.0;
        }
      } else {
        excitation = 0.3 * noise(rng);
      }
      double x = excitation;
      for (int r = 0; r < 4; ++r) {
        const double y = x - coeffs[r][0] * y1[r] - coeffs[r][1] * y2[r];
        y2[r] = y1[r];
        y1[r] = y;
        // Normalize each section to unit gain at its resonance peak region.
        x = y * (1.0 - coeffs[r][1]);
      }
      double env = 1.0;
      if (n < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * double(n) / double(ramp));
      if (dur - n <= ramp) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * double(dur - n) / double(ramp));
      out[pos + n] = env * x;
    }
    pos += dur + std::size_t(gap(rng) * dsp::kSampleRate);
  }

  double energy = 0.0, peak = 0.0;
  for (double v : out) {
    energy += v * v;
    peak = std::max(peak, std::abs(v));
  }
  if (energy > 0.0) {
    double gain = kTargetRms / std::sqrt(energy / double(length));
    gain = std::min(gain, 0.95 / peak);
    for (double& v : out) v *= gain;
  }
  return {std::move(out), dsp::kSampleRate};
}

ToyCorpus generate_toy_corpus(const ToyCorpusSpec& spec) {
  spec.validate();
  ToyCorpus corpus;
  std::vector<SpeakerProfile> all = make_speaker_profiles(spec);
  corpus.train_speakers.assign(all.begin(), all.begin() + spec.train_speakers);
  corpus.eval_speakers.assign(all.begin() + spec.train_speakers, all.end());

  auto fill = [&](const std::vector<SpeakerProfile>& speakers, std::vector<Utterance>& utts, std::uint64_t salt) {
    for (std::size_t s = 0; s < speakers.size(); ++s) {
      for (int u = 0; u < spec.utterances_per_speaker; ++u) {
        std::mt19937_64 rng(spec.seed ^ (salt + 0x100000 * s + u) * 0xD1B54A32D192ED03ull);
        std::uniform_real_distribution<double> dur(spec.min_seconds, spec.max_seconds);
        Utterance utt;
        utt.id = speakers[s].id + "_" + numbered("u", u);
        utt.speaker = int(s);
        utt.wave = synthesize_utterance(speakers[s], dur(rng), rng);
        utts.push_back(std::move(utt));
      }
    }
  };
  fill(corpus.train_speakers, corpus.train, 1);
  fill(corpus.eval_speakers, corpus.eval, 2);
  return corpus;
}

std::vector<std::vector<std::size_t>> utterances_by_speaker(const std::vector<Utterance>& utts, int speakers) {
  std::vector<std::vector<std::size_t>> out(speakers);
  for (std::size_t i = 0; i < utts.size(); ++i) out.at(utts[i].speaker).push_back(i);
  return out;
}

std::vector<MixtureItem> make_mixtures(const std::vector<Utterance>& utts, int speakers,
                                       const std::vector<std::size_t>& exclude, int count, double snr_low,
                                       double snr_high, dsp::MixProtocol protocol, std::uint64_t seed) {
  auto pools = utterances_by_speaker(utts, speakers);
  for (auto& pool : pools)
    std::erase_if(pool, [&](std::size_t i) { return std::find(exclude.begin(), exclude.end(), i) != exclude.end(); });
  std::vector<int> usable;
  for (int s = 0; s < speakers; ++s)
    if (!pools[s].empty()) usable.push_back(s);
  if (usable.size() < 2) throw std::invalid_argument("mixtures need at least two speakers with utterances");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> snr(snr_low, snr_high);
  std::vector<MixtureItem> out;
  for (int m = 0; m < count; ++m) {
    MixtureItem item;
    std::uniform_int_distribution<std::size_t> pick_spk(0, usable.size() - 1);
    item.target_speaker = usable[pick_spk(rng)];
    do {
      item.interferer_speaker = usable[pick_spk(rng)];
    } while (item.interferer_speaker == item.target_speaker);
    const auto& tp = pools[item.target_speaker];
    const auto& ip = pools[item.interferer_speaker];
    item.target_utt = tp[std::uniform_int_distribution<std::size_t>(0, tp.size() - 1)(rng)];
    item.interferer_utt = ip[std::uniform_int_distribution<std::size_t>(0, ip.size() - 1)(rng)];
    item.snr_db = snr(rng);
    item.protocol = protocol;
    item.id = numbered("mix", m);
    item.mix = dsp::mix_at_snr(utts[item.target_utt].wave, utts[item.interferer_utt].wave, item.snr_db, protocol);
    out.push_back(std::move(item));
  }
  return out;
}

EvalSet make_eval_set(const ToyCorpus& corpus, int mixtures, double snr_low, double snr_high,
                      dsp::MixProtocol protocol, std::uint64_t seed) {
  const int speakers = int(corpus.eval_speakers.size());
  if (speakers < 2) throw std::invalid_argument("evaluation needs at least two evaluation speakers");
  EvalSet set;
  for (const auto& pool : utterances_by_speaker(corpus.eval, speakers)) set.enrollment.push_back(pool.front());
  set.mixtures = make_mixtures(corpus.eval, speakers, set.enrollment, mixtures, snr_low, snr_high, protocol, seed);
  for (const auto& m : set.mixtures) {
    for (int s = 0; s < speakers; ++s) {
      const bool present = s == m.target_speaker || s == m.interferer_speaker;
      set.trials.push_back({corpus.eval[set.enrollment[s]].id, m.id, present});
    }
  }
  return set;
}

}  // namespace tsv::corpus
