// tsv/corpus.hpp

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

#ifndef TSV_CORPUS_HPP_
#define TSV_CORPUS_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tsv/dsp.hpp"

namespace tsv::corpus {

/// Synthetic talker: an 8th-order all-pole envelope (four resonances) driven
/// by a pulse train at the speaker's pitch during voiced syllables and by
/// noise during unvoiced ones.
struct SpeakerProfile {
  std::string id;
  double pitch_hz = 120.0;
  std::array<double, 4> formants_hz{};
  std::array<double, 4> bandwidths_hz{};
};

struct Utterance {
  std::string id;
  int speaker = 0;  // index into the owning speaker list
  dsp::Waveform wave;
};

struct ToyCorpusSpec {
  int train_speakers = 8;
  int eval_speakers = 8;
  int utterances_per_speaker = 12;
  double min_seconds = 1.5;
  double max_seconds = 3.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ToyCorpus {
  std::vector<SpeakerProfile> train_speakers;
  std::vector<SpeakerProfile> eval_speakers;
  std::vector<Utterance> train;  // speaker indexes train_speakers
  std::vector<Utterance> eval;   // speaker indexes eval_speakers
};

/// Profiles are spread over disjoint pitch and vocal-tract strata so that no
/// two speakers of one corpus share a stratum.
std::vector<SpeakerProfile> make_speaker_profiles(const ToyCorpusSpec& spec);

dsp::Waveform synthesize_utterance(const SpeakerProfile& speaker, double seconds, std::mt19937_64& rng);

/// Deterministic in `spec`; regenerating gives sample-identical audio.
ToyCorpus generate_toy_corpus(const ToyCorpusSpec& spec);

/// Indices of the utterances of each speaker, in corpus order.
std::vector<std::vector<std::size_t>> utterances_by_speaker(const std::vector<Utterance>& utts, int speakers);

struct MixtureItem {
  std::string id;
  std::size_t target_utt = 0;
  std::size_t interferer_utt = 0;
  int target_speaker = 0;
  int interferer_speaker = 0;
  double snr_db = 0.0;
  dsp::MixProtocol protocol = dsp::MixProtocol::kMax;
  dsp::Mixture mix;
};

/// Two-talker mixtures of distinct speakers drawn from `utts`, skipping the
/// indices in `exclude`. SNR is uniform in [snr_low, snr_high].
std::vector<MixtureItem> make_mixtures(const std::vector<Utterance>& utts, int speakers,
                                       const std::vector<std::size_t>& exclude, int count, double snr_low,
                                       double snr_high, dsp::MixProtocol protocol, std::uint64_t seed);

struct Trial {
  std::string enrol;
  std::string test;
  bool target = false;
};

/// Evaluation layout: one clean enrollment utterance per evaluation speaker,
/// mixtures from the remaining utterances, and every (enrollment, mixture)
/// pair as a trial. A trial is a target when the enrolled speaker talks in
/// the mixture.
struct EvalSet {
  std::vector<std::size_t> enrollment;  // index into ToyCorpus::eval, one per speaker
  std::vector<MixtureItem> mixtures;
  std::vector<Trial> trials;
};

EvalSet make_eval_set(const ToyCorpus& corpus, int mixtures, double snr_low, double snr_high,
                      dsp::MixProtocol protocol, std::uint64_t seed);

}  // namespace tsv::corpus

#endif  // TSV_CORPUS_HPP_
