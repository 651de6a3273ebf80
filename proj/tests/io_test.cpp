// io_test.cpp

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

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "tsv/checkpoint.hpp"
#include "tsv/config.hpp"

using namespace tsv;

namespace {

const std::filesystem::path kConfigDir = TSV_CONFIG_DIR;

std::string error_key(const ExperimentConfig& c) {
  try {
    c.validate();
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

ExperimentConfig toy_with(const std::string& extra) {
  return parse_config_text("include = toy.conf\n" + extra, kConfigDir);
}

std::string bytes_of(const std::vector<const nn::ParameterSet*>& sets, std::uint64_t digest) {
  std::ostringstream os;
  io::save_checkpoint(os, digest, sets);
  return os.str();
}

void append_le(std::string& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

}  // namespace

TEST(Config, DefaultProfileMatchesBuiltInDefaults) {
  ExperimentConfig builtin;
  builtin.sync();
  EXPECT_EQ(load_config(kConfigDir / "default.conf").to_text(), builtin.to_text());
  EXPECT_NO_THROW(builtin.validate());
}

TEST(Config, ToyProfileUsesMiniatureAttention) {
  const ExperimentConfig c = load_config(kConfigDir / "toy.conf");
  EXPECT_NO_THROW(c.validate());
  const nn::AttentionConfig m = nn::AttentionConfig::miniature();
  EXPECT_EQ(c.attention.filters, 32);
  EXPECT_EQ(c.attention.extractor_channels, 32);
  EXPECT_EQ(c.attention.tcn_channels, 64);
  EXPECT_EQ(c.attention.tcn_kernel, 3);
  EXPECT_EQ(c.attention.tcn_blocks, 4);
  EXPECT_EQ(c.attention.tcn_stacks, 1);
  EXPECT_EQ(c.attention.resnet_blocks, 1);
  EXPECT_EQ(c.attention.speaker_dim, m.speaker_dim);
  EXPECT_EQ(c.attention.speakers, 8);
  EXPECT_EQ(c.representation.filters, 32);
}

TEST(Config, LaterLinesOverrideIncludes) {
  const ExperimentConfig c = toy_with("seed = 7\nattention.filters = 16  # comment\n\nrepresentation.scheme = T\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.attention.filters, 16);
  EXPECT_EQ(c.representation.filters, 16);
  EXPECT_EQ(c.representation.scheme, nn::Scheme::kT);
  EXPECT_EQ(c.attention.tcn_channels, 64);
}

TEST(Config, TextRoundTrip) {
  const ExperimentConfig c = toy_with("train.lr3 = 1.5e-5\ncorpus.snr_high = 4.25\n");
  EXPECT_EQ(parse_config_text(c.to_text(), ".").to_text(), c.to_text());
}

TEST(Config, ParseErrorsNameTheKey) {
  auto key_of = [](const std::string& text) {
    try {
      parse_config_text(text, kConfigDir);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string();
  };
  EXPECT_EQ(key_of("no_such.key = 1"), "no_such.key");
  EXPECT_EQ(key_of("attention.filters = 3x"), "attention.filters");
  EXPECT_EQ(key_of("train.clip_norm = five"), "train.clip_norm");
  EXPECT_EQ(key_of("attention.kernels = 20,80"), "attention.kernels");
  EXPECT_EQ(key_of("representation.scheme = q"), "representation.scheme");
  EXPECT_EQ(key_of("embed.enroll_mode = sideways"), "embed.enroll_mode");
  EXPECT_EQ(key_of("just text"), "line 1");
  EXPECT_EQ(key_of("include = missing.conf"), "include");
}

TEST(Config, ValidationNamesTheViolatedConstraint) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"attention.kernels = 21,80,160", "attention"},
      {"attention.tcn_kernel = 4", "attention"},
      {"representation.width = 0", "representation"},
      {"loss.alpha = 0.6\nloss.beta = 0.5", "loss"},
      {"corpus.train_speakers = 1", "corpus"},
      {"corpus.eval_speakers = 1", "corpus.eval_speakers"},
      {"corpus.utterances_per_speaker = 2", "corpus.utterances_per_speaker"},
      {"corpus.snr_low = 6", "corpus.snr_low"},
      {"train.segment_samples = 1000", "train.segment_samples"},
      {"corpus.min_seconds = 0.2", "corpus.min_seconds"},
      {"train.single_fraction = 1.5", "train.single_fraction"},
      {"train.lr2 = 0", "train.lr2"},
      {"train.epochs3 = -1", "train.epochs3"},
      {"backend.top_k = 0", "backend.top_k"},
      {"representation.scheme = r\nembed.enroll_mode = direct", "embed.enroll_mode"},
      {"representation.scheme = r\nembed.enroll_mode = none", "embed.enroll_mode"},
  };
  for (const auto& [text, key] : cases) EXPECT_EQ(error_key(toy_with(text)), key) << text;
  EXPECT_EQ(error_key(toy_with("representation.scheme = f\nembed.enroll_mode = direct")), "");
}

TEST(Config, StagePlans) {
  const ExperimentConfig c = load_config(kConfigDir / "default.conf");
  EXPECT_DOUBLE_EQ(c.plan(train::Phase::kExtractor).lr, 1e-3);
  EXPECT_FALSE(c.plan(train::Phase::kExtractor).sampling.include_single);
  EXPECT_DOUBLE_EQ(c.plan(train::Phase::kExtractorMc).lr, 1e-4);
  EXPECT_TRUE(c.plan(train::Phase::kExtractorMc).sampling.include_single);
  EXPECT_DOUBLE_EQ(c.plan(train::Phase::kRepresentation).lr, 1e-4);
  EXPECT_EQ(c.plan(train::Phase::kRepresentation).stage, 2);
  EXPECT_DOUBLE_EQ(c.plan(train::Phase::kJoint).lr, 1e-5);
  EXPECT_EQ(c.plan(train::Phase::kJoint).sampling.segment_samples, 32000);
  EXPECT_EQ(c.plan(train::Phase::kJoint).batch_size, 4);
}

TEST(Config, DigestTracksModelShapeOnly) {
  const ExperimentConfig base = toy_with("");
  EXPECT_EQ(base.model_digest(), toy_with("train.epochs1 = 3\nbackend.top_k = 5").model_digest());
  EXPECT_NE(base.model_digest(), toy_with("attention.filters = 16").model_digest());
  EXPECT_NE(base.model_digest(), toy_with("representation.scheme = f").model_digest());
  EXPECT_NE(base.model_digest(), toy_with("corpus.train_speakers = 6").model_digest());
  EXPECT_EQ(base.attention_digest(), toy_with("representation.scheme = f").attention_digest());
  EXPECT_NE(base.attention_digest(), toy_with("attention.tcn_blocks = 2").attention_digest());
}

TEST(Checkpoint, Fnv1aReferenceValues) {
  EXPECT_EQ(io::fnv1a64(""), 0xCBF29CE484222325ull);
  EXPECT_EQ(io::fnv1a64("a"), 0xAF63DC4C8601EC8Cull);
}

TEST(Checkpoint, ByteLayout) {
  nn::ParameterSet p;
  p.add("a", ad::Tensor({2}, {1.0, -2.0}));
  std::string want = "TSV1";
  append_le(want, 1, 4);
  append_le(want, 0x0102030405060708ull, 8);
  append_le(want, 1, 8);
  append_le(want, 1, 4);
  want += "a";
  append_le(want, 1, 4);
  append_le(want, 2, 8);
  append_le(want, std::bit_cast<std::uint64_t>(1.0), 8);
  append_le(want, std::bit_cast<std::uint64_t>(-2.0), 8);
  EXPECT_EQ(bytes_of({&p}, 0x0102030405060708ull), want);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  nn::ParameterSet a, b;
  nn::Rng rng(3);
  a.add_uniform("x.w", {3, 4}, 4, rng);
  a.add("x.special", ad::Tensor({5}, {-0.0, std::numeric_limits<double>::denorm_min(), 1e308, -1e-300, 0.1}));
  b.add_uniform("y.conv", {2, 1, 7}, 7, rng);
  const std::string first = bytes_of({&a, &b}, 42);

  nn::ParameterSet a2, b2;
  nn::Rng other(9);
  a2.add_uniform("x.w", {3, 4}, 4, other);
  a2.add("x.special", ad::Tensor({5}));
  b2.add_uniform("y.conv", {2, 1, 7}, 7, other);
  std::istringstream is(first);
  io::load_checkpoint(is, 42, {&a2, &b2});
  EXPECT_EQ(bytes_of({&a2, &b2}, 42), first);
  EXPECT_TRUE(std::signbit(a2.find("x.special").data()[0]));

  const auto path = std::filesystem::temp_directory_path() / "tsvkit_io_test.ckpt";
  io::save_checkpoint(path, 42, {&a, &b});
  std::ifstream f(path, std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(f), {}), first);
  std::filesystem::remove(path);
}

TEST(Checkpoint, LoadErrors) {
  nn::ParameterSet p;
  p.add("w", ad::Tensor({2, 2}));
  const std::string good = bytes_of({&p}, 5);
  auto load = [&](const std::string& bytes, std::uint64_t digest, nn::ParameterSet& into) {
    std::istringstream is(bytes);
    io::load_checkpoint(is, digest, {&into});
  };
  EXPECT_NO_THROW(load(good, 5, p));
  EXPECT_THROW(load(good, 6, p), io::CheckpointError);
  EXPECT_THROW(load("TSV2" + good.substr(4), 5, p), io::CheckpointError);
  EXPECT_THROW(load(good.substr(0, good.size() - 3), 5, p), io::CheckpointError);

  nn::ParameterSet renamed, reshaped, larger;
  renamed.add("v", ad::Tensor({2, 2}));
  reshaped.add("w", ad::Tensor({4}));
  larger.add("w", ad::Tensor({2, 2}));
  larger.add("extra", ad::Tensor({1}));
  EXPECT_THROW(load(good, 5, renamed), io::CheckpointError);
  EXPECT_THROW(load(good, 5, reshaped), io::CheckpointError);
  EXPECT_THROW(load(good, 5, larger), io::CheckpointError);
  try {
    load(good, 6, p);
  } catch (const io::CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("digest"), std::string::npos);
  }
}
