// tsv/training.hpp

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

#ifndef TSV_TRAINING_HPP_
#define TSV_TRAINING_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "tsv/attention.hpp"
#include "tsv/corpus.hpp"
#include "tsv/representation.hpp"

namespace tsv::train {

using ad::Index;
using ad::Tape;
using ad::Tensor;

struct LossWeights {
  double alpha = 0.1;  // second scale in J1
  double beta = 0.1;   // third scale in J1
  double gamma = 10.0; // J2
  double eta = 10.0;   // J3

  void validate() const;
};

/// -[(1-a-b) rho(s1, s) + a rho(s2, s) + b rho(s3, s)] with the tape SI-SDR.
Tensor loss_j1(Tape& tape, const std::array<Tensor, 3>& estimates, const Tensor& target, const LossWeights& w);
/// -log softmax(logits)[label].
Tensor loss_ce(Tape& tape, const Tensor& logits, Index label);
/// J1 + gamma J2 + eta J3; undefined components are skipped.
Tensor total_loss(Tape& tape, const Tensor& j1, const Tensor& j2, const Tensor& j3, const LossWeights& w);

/// Bias-corrected Adam over named parameters.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  explicit Adam(double lr) : lr_(lr) {}
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t steps() const { return step_; }

  /// One update of every parameter in `sets` that has an entry in `grads`.
  void step(const std::vector<nn::ParameterSet*>& sets, const std::map<std::string, Eigen::VectorXd>& grads);
  void step(nn::ParameterSet& params, const std::map<std::string, Eigen::VectorXd>& grads) { step({&params}, grads); }

 private:
  struct Moments {
    Eigen::VectorXd m, v;
  };
  double lr_;
  std::int64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Rescales every gradient so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::map<std::string, Eigen::VectorXd>& grads, double max_norm);

/// Halves the rate when the best epoch loss has not strictly improved for
/// `patience` consecutive epochs. The counter restarts after each halving.
class PlateauHalver {
 public:
  explicit PlateauHalver(int patience = 3) : patience_(patience) {}
  /// Records one epoch loss and returns the rate to use next.
  double update(double epoch_loss, double lr);
  int stagnant() const { return stagnant_; }

 private:
  int patience_;
  int stagnant_ = 0;
  bool has_best_ = false;
  double best_ = 0.0;
};

/// One training example. For single-talker examples y == s.
struct Example {
  Tensor y, x, s;
  Index label = 0;
  bool single = false;
};

struct SamplingOptions {
  Index segment_samples = 32000;
  double snr_low = 0.0, snr_high = 5.0;
  /// Probability of a single-talker example when single-talker data is mixed in.
  double single_fraction = 0.5;
  bool include_single = false;
};

/// `count` examples drawn deterministically from `seed`. Segments start at a
/// random offset and are zero-padded when the utterance is short; the
/// reference is a different utterance of the target speaker.
std::vector<Example> sample_batch(const std::vector<corpus::Utterance>& utts, int speakers,
                                  const SamplingOptions& options, int count, std::uint64_t seed);

/// Fixed-length crop or zero pad of `w` starting at `offset`.
Tensor segment(const dsp::Waveform& w, Index offset, Index length);

/// Both trainable modules and their parameter collections.
class TsvModel {
 public:
  TsvModel(const nn::AttentionConfig& attention, const nn::RepresentationConfig& representation, std::uint64_t seed);
  TsvModel(const TsvModel&) = delete;
  TsvModel& operator=(const TsvModel&) = delete;

  nn::ParameterSet attention_params;
  nn::ParameterSet representation_params;
  std::unique_ptr<nn::SpeakerAttention> attention;
  std::unique_ptr<nn::SpeakerRepresentation> representation;
};

enum class Phase {
  kExtractor,     // stage 1 on mixtures
  kExtractorMc,   // stage 1 fine-tuning on mixtures and single talkers
  kRepresentation,// stage 2, attention frozen
  kJoint,         // stage 3
  kDirect,        // representation on clean single-talker speech, no attention
};

std::string phase_name(Phase phase);

struct StagePlan {
  int stage = 1;
  Phase phase = Phase::kExtractor;
  double lr = 1e-3;
  int epochs = 20;
  int batches_per_epoch = 16;
  int batch_size = 4;
  int patience = 3;
  double clip_norm = 5.0;
  SamplingOptions sampling;
};

/// Default plans: stage 1 at 1e-3 then 1e-4 with single talkers, stage 2
/// at 1e-4 on J3, stage 3 at 1e-5 on the full objective.
std::vector<StagePlan> default_stage_plans(Index segment_samples, int batches_per_epoch, int epochs1 = 20,
                                           int epochs2 = 20, int epochs3 = 10);

struct EpochRecord {
  int stage = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double j1 = 0.0;  // epoch mean of the J1 term (0 when inactive)
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StageContext {
  const std::vector<corpus::Utterance>* utts = nullptr;
  int speakers = 0;
  LossWeights weights;
  std::uint64_t seed = 1;
  int threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains the parameters selected by `plan.phase`. The untouched module keeps
/// its values bit for bit. Throws NonFiniteLoss naming stage and epoch.
std::vector<EpochRecord> run_stage(const StagePlan& plan, TsvModel& model, const StageContext& ctx);

/// "stage epoch loss lr" lines.
void write_loss_curve(std::ostream& os, const std::vector<EpochRecord>& records);

/// Worker count from TSVKIT_THREADS (default 1, minimum 1).
int thread_count_from_env();

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace tsv::train

#endif  // TSV_TRAINING_HPP_
