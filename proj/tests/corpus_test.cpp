// corpus_test.cpp

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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "tsv/corpus.hpp"

using namespace tsv;
using namespace tsv::corpus;

namespace {

ToyCorpusSpec small_spec() {
  ToyCorpusSpec spec;
  spec.train_speakers = 4;
  spec.eval_speakers = 3;
  spec.utterances_per_speaker = 4;
  spec.min_seconds = 0.5;
  spec.max_seconds = 1.0;
  spec.seed = 21;
  return spec;
}

// Pitch from the peak of the frame-averaged real cepstrum in the 80-300 Hz
// quefrency range. Plain DFTs keep it independent of the library STFT.
double cepstral_pitch(const std::vector<double>& x) {
  constexpr int n = 512;
  std::vector<double> cos_t(n), sin_t(n), window(n), acc(n, 0.0);
  for (int i = 0; i < n; ++i) {
    cos_t[i] = std::cos(2 * std::numbers::pi * i / n);
    sin_t[i] = std::sin(2 * std::numbers::pi * i / n);
    window[i] = 0.54 - 0.46 * std::cos(2 * std::numbers::pi * i / (n - 1));
  }
  std::vector<double> logmag(n);
  for (std::size_t s = 0; s + n <= x.size(); s += 128) {
    double energy = 0;
    for (int i = 0; i < n; ++i) energy += x[s + i] * x[s + i];
    if (energy < 1e-6) continue;
    for (int k = 0; k < n; ++k) {
      double re = 0, im = 0;
      for (int i = 0; i < n; ++i) {
        const int j = (k * i) % n;
        re += window[i] * x[s + i] * cos_t[j];
        im -= window[i] * x[s + i] * sin_t[j];
      }
      logmag[k] = std::log(std::hypot(re, im) + 1e-9);
    }
    for (int q = 0; q < n; ++q)
      for (int k = 0; k < n; ++k) acc[q] += logmag[k] * cos_t[(k * q) % n];
  }
  const int lo = dsp::kSampleRate / 300, hi = dsp::kSampleRate / 80;
  int best = lo;
  for (int q = lo; q <= hi; ++q)
    if (acc[q] > acc[best]) best = q;
  return double(dsp::kSampleRate) / best;
}

}  // namespace

TEST(Corpus, RegenerationIsSampleIdentical) {
  const ToyCorpus a = generate_toy_corpus(small_spec()), b = generate_toy_corpus(small_spec());
  ASSERT_EQ(a.train.size(), 16u);
  ASSERT_EQ(a.eval.size(), 12u);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].wave.samples, b.train[i].wave.samples);
  for (std::size_t i = 0; i < a.eval.size(); ++i) EXPECT_EQ(a.eval[i].wave.samples, b.eval[i].wave.samples);
  ToyCorpusSpec other = small_spec();
  other.seed = 22;
  EXPECT_NE(generate_toy_corpus(other).train[0].wave.samples, a.train[0].wave.samples);
}

TEST(Corpus, SpeakerSetsAreDisjoint) {
  const ToyCorpus c = generate_toy_corpus(small_spec());
  std::set<std::string> ids;
  for (const auto& s : c.train_speakers) ids.insert(s.id);
  for (const auto& s : c.eval_speakers) EXPECT_FALSE(ids.count(s.id)) << s.id;
  EXPECT_EQ(c.train_speakers.front().id, "trn000");
  EXPECT_EQ(c.eval_speakers.front().id, "evl000");
  EXPECT_EQ(c.train[5].id, "trn001_u001");
  for (const auto& u : c.train) EXPECT_LT(u.speaker, 4);
}

TEST(Corpus, PitchesOccupyDistinctStrata) {
  ToyCorpusSpec spec = small_spec();
  spec.train_speakers = 10;
  spec.eval_speakers = 6;
  const auto profiles = make_speaker_profiles(spec);
  std::set<int> strata;
  for (const auto& p : profiles) {
    ASSERT_GE(p.pitch_hz, 85.0);
    ASSERT_LE(p.pitch_hz, 260.0);
    strata.insert(int(std::floor(std::log(p.pitch_hz / 85.0) / std::log(260.0 / 85.0) * 16)));
    for (int i = 1; i < 4; ++i) EXPECT_LT(p.formants_hz[i - 1], p.formants_hz[i]);
    EXPECT_LT(p.formants_hz[3], dsp::kSampleRate / 2.0);
  }
  EXPECT_EQ(strata.size(), 16u);
}

TEST(Corpus, UtteranceLevelsAndLengths) {
  const ToyCorpus c = generate_toy_corpus(small_spec());
  for (const auto& u : c.train) {
    const auto& x = u.wave.samples;
    EXPECT_GE(x.size(), 4000u);
    EXPECT_LE(x.size(), 8000u);
    double e = 0, peak = 0;
    for (double v : x) e += v * v, peak = std::max(peak, std::abs(v));
    EXPECT_LE(std::sqrt(e / x.size()), 0.08 + 1e-12);
    EXPECT_LE(peak, 0.95 + 1e-12);
    EXPECT_GT(e, 0.0);
  }
}

TEST(Corpus, VoicedPitchFollowsProfile) {
  ToyCorpusSpec spec = small_spec();
  const auto profiles = make_speaker_profiles(spec);
  int close = 0;
  for (const auto& p : profiles) {
    std::mt19937_64 rng(7);
    const double f0 = cepstral_pitch(synthesize_utterance(p, 1.0, rng).samples);
    if (std::abs(f0 / p.pitch_hz - 1.0) < 0.1) ++close;
  }
  EXPECT_GE(close, int(profiles.size()) - 1);
}

TEST(Mixtures, RespectSnrAndSpeakerRules) {
  const ToyCorpus c = generate_toy_corpus(small_spec());
  const std::vector<std::size_t> exclude{0, 4, 8, 12};
  const auto mixes = make_mixtures(c.train, 4, exclude, 40, 0.0, 5.0, dsp::MixProtocol::kMax, 3);
  ASSERT_EQ(mixes.size(), 40u);
  for (const auto& m : mixes) {
    EXPECT_NE(m.target_speaker, m.interferer_speaker);
    EXPECT_EQ(c.train[m.target_utt].speaker, m.target_speaker);
    EXPECT_EQ(c.train[m.interferer_utt].speaker, m.interferer_speaker);
    for (std::size_t e : exclude) {
      EXPECT_NE(m.target_utt, e);
      EXPECT_NE(m.interferer_utt, e);
    }
    EXPECT_GE(m.snr_db, 0.0);
    EXPECT_LE(m.snr_db, 5.0);
    const std::size_t overlap = std::min(c.train[m.target_utt].wave.size(), c.train[m.interferer_utt].wave.size());
    EXPECT_NEAR(dsp::power_ratio_db(m.mix.target, m.mix.interference, overlap), m.snr_db, 1e-9);
    EXPECT_EQ(m.mix.mixture.size(), std::max(c.train[m.target_utt].wave.size(), c.train[m.interferer_utt].wave.size()));
  }
  const auto again = make_mixtures(c.train, 4, exclude, 40, 0.0, 5.0, dsp::MixProtocol::kMax, 3);
  for (std::size_t i = 0; i < mixes.size(); ++i) EXPECT_EQ(mixes[i].mix.mixture.samples, again[i].mix.mixture.samples);
}

TEST(EvalSet, TrialsCoverEveryEnrollmentAndMixture) {
  const ToyCorpus c = generate_toy_corpus(small_spec());
  const EvalSet set = make_eval_set(c, 10, 0.0, 5.0, dsp::MixProtocol::kMax, 4);
  ASSERT_EQ(set.enrollment.size(), 3u);
  ASSERT_EQ(set.trials.size(), 30u);
  for (std::size_t e : set.enrollment)
    for (const auto& m : set.mixtures) {
      EXPECT_NE(m.target_utt, e);
      EXPECT_NE(m.interferer_utt, e);
    }
  for (std::size_t m = 0; m < set.mixtures.size(); ++m) {
    int targets = 0;
    for (int s = 0; s < 3; ++s) {
      const Trial& t = set.trials[m * 3 + s];
      EXPECT_EQ(t.test, set.mixtures[m].id);
      EXPECT_EQ(t.enrol, c.eval[set.enrollment[s]].id);
      targets += t.target;
    }
    EXPECT_EQ(targets, 2);
  }
}

TEST(Corpus, SpecValidation) {
  ToyCorpusSpec spec = small_spec();
  spec.train_speakers = 1;
  EXPECT_THROW(generate_toy_corpus(spec), std::invalid_argument);
  spec = small_spec();
  spec.max_seconds = 0.2;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}
