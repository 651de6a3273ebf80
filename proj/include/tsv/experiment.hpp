// tsv/experiment.hpp

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

#ifndef TSV_EXPERIMENT_HPP_
#define TSV_EXPERIMENT_HPP_

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tsv/config.hpp"

namespace tsv::exp {

namespace fs = std::filesystem;

// Corpus directory written by cmd_simulate:
//   config.conf                   configuration used
//   train.list                    "UTT SPEAKER PATH" clean training speech
//   enroll.list                   "UTT SPEAKER PATH" one clean utterance per evaluation speaker
//   test_max.list, test_min.list  "MIX TARGET_SPK INTERFERER_SPK SNR MIX_PATH TARGET_PATH"
//   trials, trials_min            "ENROL TEST target|nontarget"
//   wav/...                       PCM16 audio
struct TestItem {
  std::string id;
  std::string target_speaker, interferer_speaker;
  double snr_db = 0.0;
  dsp::Waveform mixture, target;
};

struct Dataset {
  std::vector<std::string> train_speakers;  // label order
  std::vector<corpus::Utterance> train;     // speaker indexes train_speakers
  std::vector<std::string> enroll_speakers;
  std::vector<corpus::Utterance> enroll;    // speaker indexes enroll_speakers
  std::vector<TestItem> tests;
  std::vector<backend::TrialRecord> trials;
};

void cmd_simulate(const ExperimentConfig& config, const fs::path& out_dir);
Dataset load_dataset(const fs::path& corpus_dir, dsp::MixProtocol protocol = dsp::MixProtocol::kMax);

/// Which training runs to perform: stages 1-3 and the direct baseline.
struct StageSelection {
  bool stage1 = false, stage2 = false, stage3 = false, direct = false;
};
/// Comma-separated list of 1, 2, 3 and d; "all" selects everything.
StageSelection parse_stages(const std::string& text);

// Output directory of cmd_train:
//   stage1.ckpt (attention only), stage2.ckpt, stage3.ckpt, direct.ckpt
//   loss-PHASE.txt per training phase
// Stage 2 without stage 1 in the selection resumes from stage1.ckpt, stage 3
// without stage 2 from stage2.ckpt.
void cmd_train(const ExperimentConfig& config, const fs::path& corpus_dir, const fs::path& out_dir,
               const StageSelection& stages, std::ostream* log = nullptr);

/// Rebuilds the model and fills it from a full (stage 2, 3 or direct) checkpoint.
std::unique_ptr<train::TsvModel> load_model(const ExperimentConfig& config, const fs::path& checkpoint);

using EmbeddingArchive = std::vector<std::pair<std::string, Eigen::VectorXd>>;
/// "KEY v1 ... vD" per line with 17 significant digits.
void write_embeddings(const EmbeddingArchive& archive, const fs::path& path);
EmbeddingArchive read_embeddings(const fs::path& path);

// Output directory of cmd_embed:
//   train.emb, train.labels   backend training data ("KEY SPEAKER" labels)
//   enroll.emb                keyed by enrollment utterance
//   test.emb                  keyed "TEST@ENROL" (attended tests depend on the
//                             enrollment reference) or "TEST" in mode none
// Enrollment follows config.enroll_mode. Backend data and tests are attended
// in both attended and direct mode; mode none attends nothing.
void cmd_embed(const ExperimentConfig& config, const fs::path& corpus_dir, const fs::path& checkpoint,
               const fs::path& out_dir, dsp::MixProtocol protocol = dsp::MixProtocol::kMax);

/// LDA, length norm, PLDA and adaptive s-norm fitted on train.emb; one line
/// per trial in trial order. Throws std::runtime_error naming a missing key.
void cmd_score(const ExperimentConfig& config, const fs::path& embed_dir, const fs::path& trials,
               const fs::path& scores_out);

struct Report {
  double eer = 0.0, dcf08 = 0.0, dcf10 = 0.0;
  std::size_t det_points = 0;
};

/// Metrics over the normalized scores; labels come from the trial list.
/// Writes DET points when `det_out` is not empty.
Report cmd_eval(const fs::path& scores, const fs::path& trials, const fs::path& det_out = {});
/// "EER x DCF08 y DCF10 z" with four decimals.
std::string format_report(const Report& report);

}  // namespace tsv::exp

#endif  // TSV_EXPERIMENT_HPP_
