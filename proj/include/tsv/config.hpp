// tsv/config.hpp

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

#ifndef TSV_CONFIG_HPP_
#define TSV_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsv/backend.hpp"
#include "tsv/corpus.hpp"
#include "tsv/training.hpp"

namespace tsv {

using ad::Index;

/// Carries the offending key; what() reads "KEY: reason".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& reason)
      : std::invalid_argument(key + ": " + reason), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class EnrollMode {
  kAttended,  // enrollment passes through attention with itself as reference
  kDirect,    // enrollment bypasses attention; tests stay attended
  kNone,      // no attention anywhere (zero-effort baseline)
};

EnrollMode parse_enroll_mode(const std::string& text);
std::string enroll_mode_name(EnrollMode mode);

struct ExperimentConfig {
  std::uint64_t seed = 1;

  corpus::ToyCorpusSpec corpus;
  int eval_mixtures = 40;
  double snr_low = 0.0, snr_high = 5.0;

  nn::AttentionConfig attention;
  nn::RepresentationConfig representation;
  train::LossWeights weights;

  Index segment_samples = 32000;
  int batches_per_epoch = 16;
  int batch_size = 4;
  int patience = 3;
  double clip_norm = 5.0;
  double single_fraction = 0.5;
  int epochs1 = 20, epochs_finetune = 10, epochs2 = 20, epochs3 = 10, epochs_direct = 20;
  double lr1 = 1e-3, lr_finetune = 1e-4, lr2 = 1e-4, lr3 = 1e-5, lr_direct = 1e-4;

  backend::ScoringBackend<double>::Options backend;
  /// Attended training mixtures per training speaker added to the backend data.
  int backend_mixtures = 0;

  EnrollMode enroll_mode = EnrollMode::kAttended;

  /// Copies speaker counts and encoder geometry into the module configs.
  void sync();
  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  /// Plans for stage 1, its fine-tuning, stages 2 and 3, and the direct baseline.
  train::StagePlan plan(train::Phase phase) const;

  /// Canonical text of every tensor-shaping field; checkpoints store its hash.
  std::string model_text() const;
  std::uint64_t model_digest() const;
  /// Same for the attention module alone, used by stage-1 checkpoints so one
  /// extractor can seed several representation schemes.
  std::uint64_t attention_digest() const;

  /// One "key = value" line per field, in a fixed order.
  std::string to_text() const;
};

/// Applies a single key; unknown keys and malformed values raise ConfigError.
void apply_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Reads "key = value" lines ('#' starts a comment). "include = FILE" loads
/// FILE (relative to the including file) in place. The result is synced but
/// not validated.
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& dir,
                                   ExperimentConfig base = {});

}  // namespace tsv

#endif  // TSV_CONFIG_HPP_
