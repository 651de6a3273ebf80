// config.cpp

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

#include "tsv/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "tsv/checkpoint.hpp"

namespace tsv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

std::string format_real(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

// One entry per key: how to read it and how to print it. Accessors take a
// mutable config, so getters cast the constness away for the read.
struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T, typename Member>
Field integer(Member member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_integer<T>(k, v);
          },
          [member](const ExperimentConfig& c) { return std::to_string(member(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Member>
Field real(Member member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_real(k, v);
          },
          [member](const ExperimentConfig& c) { return format_real(member(const_cast<ExperimentConfig&>(c))); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", integer<std::uint64_t>([](C& c) -> auto& { return c.seed; })},
      {"corpus.train_speakers", integer<int>([](C& c) -> auto& { return c.corpus.train_speakers; })},
      {"corpus.eval_speakers", integer<int>([](C& c) -> auto& { return c.corpus.eval_speakers; })},
      {"corpus.utterances_per_speaker",
       integer<int>([](C& c) -> auto& { return c.corpus.utterances_per_speaker; })},
      {"corpus.min_seconds", real([](C& c) -> auto& { return c.corpus.min_seconds; })},
      {"corpus.max_seconds", real([](C& c) -> auto& { return c.corpus.max_seconds; })},
      {"corpus.eval_mixtures", integer<int>([](C& c) -> auto& { return c.eval_mixtures; })},
      {"corpus.snr_low", real([](C& c) -> auto& { return c.snr_low; })},
      {"corpus.snr_high", real([](C& c) -> auto& { return c.snr_high; })},
      {"attention.filters", integer<Index>([](C& c) -> auto& { return c.attention.filters; })},
      {"attention.kernels",
       {[](C& c, const std::string& k, const std::string& v) {
          std::stringstream ss(v);
          std::string item;
          std::vector<Index> ks;
          while (std::getline(ss, item, ',')) ks.push_back(parse_integer<Index>(k, trim(item)));
          if (ks.size() != 3) throw ConfigError(k, "expected three comma-separated kernel lengths");
          std::copy(ks.begin(), ks.end(), c.attention.kernels.begin());
        },
        [](const C& c) {
          const auto& k = c.attention.kernels;
          return std::to_string(k[0]) + "," + std::to_string(k[1]) + "," + std::to_string(k[2]);
        }}},
      {"attention.extractor_channels", integer<Index>([](C& c) -> auto& { return c.attention.extractor_channels; })},
      {"attention.tcn_channels", integer<Index>([](C& c) -> auto& { return c.attention.tcn_channels; })},
      {"attention.tcn_kernel", integer<Index>([](C& c) -> auto& { return c.attention.tcn_kernel; })},
      {"attention.tcn_blocks", integer<Index>([](C& c) -> auto& { return c.attention.tcn_blocks; })},
      {"attention.tcn_stacks", integer<Index>([](C& c) -> auto& { return c.attention.tcn_stacks; })},
      {"attention.resnet_blocks", integer<Index>([](C& c) -> auto& { return c.attention.resnet_blocks; })},
      {"attention.speaker_dim", integer<Index>([](C& c) -> auto& { return c.attention.speaker_dim; })},
      {"representation.scheme",
       {[](C& c, const std::string& k, const std::string& v) {
          try {
            c.representation.scheme = nn::parse_scheme(v);
          } catch (const std::invalid_argument&) {
            throw ConfigError(k, "expected one of r, t, f, fa, got '" + v + "'");
          }
        },
        [](const C& c) { return nn::scheme_name(c.representation.scheme); }}},
      {"representation.width", integer<Index>([](C& c) -> auto& { return c.representation.width; })},
      {"representation.resnet_blocks",
       integer<Index>([](C& c) -> auto& { return c.representation.resnet_blocks; })},
      {"representation.pool_hidden", integer<Index>([](C& c) -> auto& { return c.representation.pool_hidden; })},
      {"loss.alpha", real([](C& c) -> auto& { return c.weights.alpha; })},
      {"loss.beta", real([](C& c) -> auto& { return c.weights.beta; })},
      {"loss.gamma", real([](C& c) -> auto& { return c.weights.gamma; })},
      {"loss.eta", real([](C& c) -> auto& { return c.weights.eta; })},
      {"train.segment_samples", integer<Index>([](C& c) -> auto& { return c.segment_samples; })},
      {"train.batches_per_epoch", integer<int>([](C& c) -> auto& { return c.batches_per_epoch; })},
      {"train.batch_size", integer<int>([](C& c) -> auto& { return c.batch_size; })},
      {"train.patience", integer<int>([](C& c) -> auto& { return c.patience; })},
      {"train.clip_norm", real([](C& c) -> auto& { return c.clip_norm; })},
      {"train.single_fraction", real([](C& c) -> auto& { return c.single_fraction; })},
      {"train.epochs1", integer<int>([](C& c) -> auto& { return c.epochs1; })},
      {"train.epochs_finetune", integer<int>([](C& c) -> auto& { return c.epochs_finetune; })},
      {"train.epochs2", integer<int>([](C& c) -> auto& { return c.epochs2; })},
      {"train.epochs3", integer<int>([](C& c) -> auto& { return c.epochs3; })},
      {"train.epochs_direct", integer<int>([](C& c) -> auto& { return c.epochs_direct; })},
      {"train.lr1", real([](C& c) -> auto& { return c.lr1; })},
      {"train.lr_finetune", real([](C& c) -> auto& { return c.lr_finetune; })},
      {"train.lr2", real([](C& c) -> auto& { return c.lr2; })},
      {"train.lr3", real([](C& c) -> auto& { return c.lr3; })},
      {"train.lr_direct", real([](C& c) -> auto& { return c.lr_direct; })},
      {"backend.lda_dim", integer<Index>([](C& c) -> auto& { return c.backend.lda_dim; })},
      {"backend.plda_dim", integer<Index>([](C& c) -> auto& { return c.backend.plda_dim; })},
      {"backend.plda_iterations", integer<int>([](C& c) -> auto& { return c.backend.plda_iterations; })},
      {"backend.top_k", integer<std::size_t>([](C& c) -> auto& { return c.backend.top_k; })},
      {"backend.mixtures", integer<int>([](C& c) -> auto& { return c.backend_mixtures; })},
      {"embed.enroll_mode",
       {[](C& c, const std::string& k, const std::string& v) {
          try {
            c.enroll_mode = parse_enroll_mode(v);
          } catch (const std::invalid_argument&) {
            throw ConfigError(k, "expected attended, direct or none, got '" + v + "'");
          }
        },
        [](const C& c) { return enroll_mode_name(c.enroll_mode); }}},
  };
  return table;
}

void parse_into(ExperimentConfig& config, std::istream& in, const std::filesystem::path& dir, int depth) {
  if (depth > 8) throw ConfigError("include", "includes nested too deeply");
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number), "expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "include") {
      const std::filesystem::path inc = dir / value;
      std::ifstream is(inc);
      if (!is) throw ConfigError("include", "cannot open " + inc.string());
      parse_into(config, is, inc.parent_path(), depth + 1);
    } else {
      apply_config_value(config, key, value);
    }
  }
}

}  // namespace

EnrollMode parse_enroll_mode(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (t == "attended") return EnrollMode::kAttended;
  if (t == "direct") return EnrollMode::kDirect;
  if (t == "none") return EnrollMode::kNone;
  throw std::invalid_argument("unknown enrollment mode '" + text + "'");
}

std::string enroll_mode_name(EnrollMode mode) {
  switch (mode) {
    case EnrollMode::kAttended: return "attended";
    case EnrollMode::kDirect: return "direct";
    case EnrollMode::kNone: return "none";
  }
  return "?";
}

void apply_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, key, value);
      return;
    }
  }
  throw ConfigError(key, "unknown key");
}

void ExperimentConfig::sync() {
  attention.speakers = corpus.train_speakers;
  representation.speakers = corpus.train_speakers;
  representation.filters = attention.filters;
  representation.kernels = attention.kernels;
}

void ExperimentConfig::validate() const {
  auto check = [](const char* key, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  };
  check("corpus", [&] { corpus.validate(); });
  check("attention", [&] { attention.validate(); });
  check("representation", [&] { representation.validate(); });
  check("loss", [&] { weights.validate(); });
  if (attention.speakers != corpus.train_speakers || representation.speakers != corpus.train_speakers)
    throw ConfigError("corpus.train_speakers", "module speaker counts are out of sync; call sync()");
  if (corpus.eval_speakers < 2) throw ConfigError("corpus.eval_speakers", "evaluation needs at least two speakers");
  if (corpus.utterances_per_speaker < 3)
    throw ConfigError("corpus.utterances_per_speaker",
                      "need one enrollment utterance and two more per speaker for mixtures and references");
  if (eval_mixtures < 1) throw ConfigError("corpus.eval_mixtures", "must be positive");
  if (!(snr_low <= snr_high)) throw ConfigError("corpus.snr_low", "must not exceed corpus.snr_high");

  const Index need = std::max(attention.min_reference_samples(),
                              nn::uses_waveform(representation.scheme) ? representation.min_samples() : Index(0));
  if (segment_samples < need)
    throw ConfigError("train.segment_samples", "must be at least " + std::to_string(need) +
                                                   " samples for the configured encoders");
  if (corpus.min_seconds * dsp::kSampleRate < double(need))
    throw ConfigError("corpus.min_seconds", "utterances shorter than " + std::to_string(need) +
                                                " samples cannot be embedded");
  if (batches_per_epoch < 1) throw ConfigError("train.batches_per_epoch", "must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be positive");
  if (patience < 1) throw ConfigError("train.patience", "must be positive");
  if (!(clip_norm > 0)) throw ConfigError("train.clip_norm", "must be positive");
  if (!(single_fraction >= 0 && single_fraction <= 1)) throw ConfigError("train.single_fraction", "must lie in [0, 1]");
  const std::pair<const char*, int> epochs[] = {{"train.epochs1", epochs1},
                                                {"train.epochs_finetune", epochs_finetune},
                                                {"train.epochs2", epochs2},
                                                {"train.epochs3", epochs3},
                                                {"train.epochs_direct", epochs_direct}};
  for (const auto& [key, n] : epochs)
    if (n < 0) throw ConfigError(key, "must be non-negative");
  const std::pair<const char*, double> rates[] = {
      {"train.lr1", lr1}, {"train.lr_finetune", lr_finetune}, {"train.lr2", lr2}, {"train.lr3", lr3},
      {"train.lr_direct", lr_direct}};
  for (const auto& [key, lr] : rates)
    if (!(lr > 0)) throw ConfigError(key, "must be positive");
  if (backend.lda_dim < 1) throw ConfigError("backend.lda_dim", "must be positive");
  if (backend.plda_dim < 0) throw ConfigError("backend.plda_dim", "must be non-negative");
  if (backend.plda_iterations < 0) throw ConfigError("backend.plda_iterations", "must be non-negative");
  if (backend.top_k < 1) throw ConfigError("backend.top_k", "must be positive");
  if (backend_mixtures < 0) throw ConfigError("backend.mixtures", "must be non-negative");
  if (enroll_mode != EnrollMode::kAttended && !nn::uses_waveform(representation.scheme))
    throw ConfigError("embed.enroll_mode", enroll_mode_name(enroll_mode) +
                                               " enrollment needs a waveform scheme (t, f or fa), not r");
}

train::StagePlan ExperimentConfig::plan(train::Phase phase) const {
  train::StagePlan p;
  p.phase = phase;
  p.batches_per_epoch = batches_per_epoch;
  p.batch_size = batch_size;
  p.patience = patience;
  p.clip_norm = clip_norm;
  p.sampling.segment_samples = segment_samples;
  p.sampling.snr_low = snr_low;
  p.sampling.snr_high = snr_high;
  p.sampling.single_fraction = single_fraction;
  p.sampling.include_single = phase != train::Phase::kExtractor;
  switch (phase) {
    case train::Phase::kExtractor: p.stage = 1, p.lr = lr1, p.epochs = epochs1; break;
    case train::Phase::kExtractorMc: p.stage = 1, p.lr = lr_finetune, p.epochs = epochs_finetune; break;
    case train::Phase::kRepresentation: p.stage = 2, p.lr = lr2, p.epochs = epochs2; break;
    case train::Phase::kJoint: p.stage = 3, p.lr = lr3, p.epochs = epochs3; break;
    case train::Phase::kDirect:
      // Clean speech only; the sampler's single-talker switch is irrelevant here.
      p.stage = 0, p.lr = lr_direct, p.epochs = epochs_direct;
      p.sampling.include_single = false;
      break;
  }
  return p;
}

std::string ExperimentConfig::model_text() const {
  std::ostringstream s;
  for (const auto& [name, field] : fields())
    if (name.rfind("attention.", 0) == 0 || name.rfind("representation.", 0) == 0 || name == "corpus.train_speakers")
      s << name << '=' << field.get(*this) << '\n';
  return s.str();
}

std::uint64_t ExperimentConfig::model_digest() const { return io::fnv1a64(model_text()); }

std::uint64_t ExperimentConfig::attention_digest() const {
  std::ostringstream s;
  for (const auto& [name, field] : fields())
    if (name.rfind("attention.", 0) == 0 || name == "corpus.train_speakers") s << name << '=' << field.get(*this) << '\n';
  return io::fnv1a64(s.str());
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream s;
  for (const auto& [name, field] : fields()) s << name << " = " << field.get(*this) << '\n';
  return s.str();
}

ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& dir, ExperimentConfig base) {
  std::istringstream in(text);
  parse_into(base, in, dir, 0);
  base.sync();
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config", "cannot open " + path.string());
  parse_into(base, is, path.parent_path(), 0);
  base.sync();
  return base;
}

}  // namespace tsv
