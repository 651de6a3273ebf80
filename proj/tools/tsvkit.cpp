// tsvkit.cpp

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

// Command-line driver: simulate | train | embed | score | eval.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsv/experiment.hpp"

namespace {

using namespace tsv;

struct Common {
  std::string config_path;
  std::vector<std::string> settings;  // KEY=VALUE overrides
  std::string seed, scheme, enroll_mode;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  for (const auto& kv : c.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(kv, "--set expects KEY=VALUE");
    apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.seed.empty()) apply_config_value(cfg, "seed", c.seed);
  if (!c.scheme.empty()) apply_config_value(cfg, "representation.scheme", c.scheme);
  if (!c.enroll_mode.empty()) apply_config_value(cfg, "embed.enroll_mode", c.enroll_mode);
  cfg.sync();
  cfg.validate();
  return cfg;
}

dsp::MixProtocol parse_protocol(const std::string& p) {
  if (p == "max") return dsp::MixProtocol::kMax;
  if (p == "min") return dsp::MixProtocol::kMin;
  throw std::invalid_argument("protocol must be max or min");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Target speaker verification toolkit"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "Configuration file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--set", common.settings, "Override a configuration key, KEY=VALUE");
  app.add_option("--seed", common.seed, "Random seed");
  app.add_option("--scheme", common.scheme, "Embedding scheme: r, t, f or fa");
  app.add_option("--enroll-mode", common.enroll_mode, "Enrollment: attended, direct or none");

  std::string out, corpus_dir, checkpoint, embeddings, trials, scores, stages = "1,2,3", protocol = "max";

  auto* simulate = app.add_subcommand("simulate", "Generate the toy corpus, mixtures and trial lists");
  simulate->add_option("--out", out, "Corpus directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Run training stages and write checkpoints");
  train_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", out, "Model directory")->required();
  train_cmd->add_option("--stages", stages, "Comma list of 1, 2, 3, d (direct baseline) or all");

  auto* embed = app.add_subcommand("embed", "Extract enrollment, test and backend embeddings");
  embed->add_option("--corpus", corpus_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  embed->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", out, "Embedding directory")->required();
  embed->add_option("--protocol", protocol, "Test mixtures: max or min");

  auto* score = app.add_subcommand("score", "Score trials with LDA, PLDA and adaptive s-norm");
  score->add_option("--embeddings", embeddings, "Embedding directory")->required()->check(CLI::ExistingDirectory);
  score->add_option("--trials", trials, "Trial list")->required()->check(CLI::ExistingFile);
  score->add_option("--out", out, "Score file")->required();

  auto* eval = app.add_subcommand("eval", "Report EER, DCF08 and DCF10");
  eval->add_option("--scores", scores, "Score file")->required()->check(CLI::ExistingFile);
  eval->add_option("--trials", trials, "Trial list")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "DET point dump");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval) {
      std::cout << exp::format_report(exp::cmd_eval(scores, trials, out)) << '\n';
      return 0;
    }
    const ExperimentConfig config = resolve(common);
    if (*simulate) {
      exp::cmd_simulate(config, out);
    } else if (*train_cmd) {
      exp::cmd_train(config, corpus_dir, out, exp::parse_stages(stages), &std::cerr);
    } else if (*embed) {
      exp::cmd_embed(config, corpus_dir, checkpoint, out, parse_protocol(protocol));
    } else if (*score) {
      exp::cmd_score(config, embeddings, trials, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "tsvkit: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
