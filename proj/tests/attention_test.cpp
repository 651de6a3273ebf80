// attention_test.cpp

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

#include "net_test_util.hpp"
#include "tsv/attention.hpp"
#include "tsv/dsp.hpp"

using namespace tsv;
using namespace tsv::nn;
using testutil::random_wave;

namespace {

Index expected_frames(Index samples, Index l1) { return 2 * (samples - l1) / l1 + 1; }

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(SpeechEncoder, FullConfigFrameCount) {
  ParameterSet params;
  Rng rng(1);
  AttentionConfig config;  // N = 256, L = 20/80/160
  SpeakerAttention att(config, params, rng);
  std::mt19937_64 wrng(2);
  ad::Tape tape;
  const Tensor y = att.speech_encode(tape, random_wave(32000, wrng));
  EXPECT_EQ(expected_frames(32000, 20), 3199);
  EXPECT_EQ(y.shape(), (ad::Shape{768, 3199}));
  EXPECT_GE(y.vector().minCoeff(), 0.0);

  const Tensor edge = att.speech_encode(tape, random_wave(20, wrng));
  EXPECT_EQ(edge.shape(), (ad::Shape{768, 1}));
  EXPECT_THROW(att.speech_encode(tape, random_wave(19, wrng)), ad::ShapeError);
}

TEST(SpeechEncoder, ScalesAlignForRandomLengths) {
  ParameterSet params;
  Rng rng(3);
  SpeakerAttention att(AttentionConfig::miniature(), params, rng);
  std::mt19937_64 wrng(4);
  std::uniform_int_distribution<Index> len(20, 3000);
  for (int i = 0; i < 100; ++i) {
    const Index n = len(wrng);
    ad::Tape tape;
    std::array<Tensor, 3> scales;
    const Tensor y = att.speech_encode(tape, random_wave(n, wrng), &scales);
    const Index k = (n - 20) / 10 + 1;
    for (const auto& s : scales) EXPECT_EQ(s.shape(), (ad::Shape{32, k})) << "length " << n;
    EXPECT_EQ(y.shape(), (ad::Shape{96, k}));
    EXPECT_GE(y.vector().minCoeff(), 0.0);
  }
}

TEST(SpeakerEncoder, ShapesAndDeterminism) {
  ParameterSet params;
  Rng rng(5);
  AttentionConfig config;
  config.speakers = 8;
  SpeakerAttention att(config, params, rng);
  std::mt19937_64 wrng(6);
  const Tensor x = random_wave(600, wrng);
  ad::Tape t1, t2;
  Tensor v1, l1, v2, l2;
  att.speaker_encode(t1, att.speech_encode(t1, x), v1, l1);
  att.speaker_encode(t2, att.speech_encode(t2, x), v2, l2);
  EXPECT_EQ(v1.shape(), (ad::Shape{256, 1}));
  EXPECT_EQ(l1.numel(), 8);
  EXPECT_EQ(values(v1), values(v2));
  EXPECT_EQ(values(l1), values(l2));
}

TEST(SpeakerEncoder, RejectsReferenceTooShortForPooling) {
  ParameterSet params;
  Rng rng(7);
  AttentionConfig config = AttentionConfig::miniature();
  config.resnet_blocks = 2;  // needs 9 frames
  SpeakerAttention att(config, params, rng);
  std::mt19937_64 wrng(8);
  ad::Tape tape;
  Tensor v, logits;
  EXPECT_EQ(config.min_reference_samples(), 100);
  EXPECT_NO_THROW(att.speaker_encode(tape, att.speech_encode(tape, random_wave(100, wrng)), v, logits));
  EXPECT_THROW(att.speaker_encode(tape, att.speech_encode(tape, random_wave(99, wrng)), v, logits), ad::ShapeError);
}

TEST(Extractor, StackInputWidthAndMaskShapes) {
  ParameterSet params;
  Rng rng(9);
  AttentionConfig config;
  config.tcn_blocks = 2;
  config.tcn_stacks = 2;
  SpeakerAttention att(config, params, rng);
  // O + D = 512 channels enter the first block of every stack.
  EXPECT_EQ(params.find("attention.extractor.stack1.block1.in_conv.weight").shape(), (ad::Shape{512, 512}));
  EXPECT_EQ(params.find("attention.extractor.stack2.block1.in_conv.weight").shape(), (ad::Shape{512, 512}));
  EXPECT_EQ(params.find("attention.extractor.stack1.block2.in_conv.weight").shape(), (ad::Shape{512, 256}));

  std::mt19937_64 wrng(10);
  ad::Tape tape;
  const Tensor y = att.speech_encode(tape, random_wave(400, wrng));
  Tensor v, logits;
  att.speaker_encode(tape, att.speech_encode(tape, random_wave(400, wrng)), v, logits);
  const auto masks = att.extract(tape, y, v);
  for (const auto& m : masks) {
    EXPECT_EQ(m.shape(), (ad::Shape{256, 39}));
    EXPECT_GE(m.vector().minCoeff(), 0.0);
  }
  EXPECT_THROW(att.extract(tape, y, Tensor({3, 1})), ad::ShapeError);
}

TEST(Decoder, LengthAndZeroInput) {
  ParameterSet params;
  Rng rng(11);
  SpeakerAttention att(AttentionConfig::miniature(), params, rng);
  ad::Tape tape;
  // (3199 - 1) * 10 + 20 = 32000: no trimming needed.
  const Tensor out = att.decode(tape, Tensor::zeros({32, 3199}), 0, 32000);
  EXPECT_EQ(out.shape(), (ad::Shape{1, 32000}));
  EXPECT_EQ(out.vector().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(att.decode(tape, Tensor::zeros({32, 5}), 3, 60), std::out_of_range);
}

TEST(Decoder, IdentityMaskRoundTripIsPositivelyCorrelated) {
  ParameterSet params;
  Rng rng(12);
  SpeakerAttention att(AttentionConfig::miniature(), params, rng);
  std::mt19937_64 wrng(13);
  for (int i = 0; i < 5; ++i) {
    const Tensor s = random_wave(1000, wrng);
    ad::Tape tape;
    std::array<Tensor, 3> scales;
    att.speech_encode(tape, s, &scales);
    const Tensor r = att.decode(tape, scales[0], 0, 1000);
    EXPECT_GT(r.vector().dot(s.vector()), 0.0);
  }
}

TEST(Decoder, UnitMaskReconstructsInteriorExactly) {
  // First-scale bank at hop 10: every sample past the first and before the
  // last half-frame is covered by two overlapping frames.
  ParameterSet params;
  Rng rng(14);
  SpeakerAttention att(AttentionConfig::miniature(), params, rng);
  std::mt19937_64 wrng(15);
  for (Index len : {200, 1000, 4010}) {
    const Tensor s = random_wave(len, wrng);
    ad::Tape tape;
    std::array<Tensor, 3> scales;
    att.speech_encode(tape, s, &scales);
    const Tensor r = att.decode(tape, scales[0], 0, len);
    const Index frames = scales[0].cols();
    const Index covered = (frames - 1) * 10 + 20;
    const auto diff = (r.vector() - s.vector()).segment(10, covered - 20);
    EXPECT_LE(diff.cwiseAbs().maxCoeff(), 1e-12 * s.vector().cwiseAbs().maxCoeff()) << len;
  }
}

TEST(Forward, CompositionContract) {
  ParameterSet params;
  Rng rng(14);
  SpeakerAttention att(AttentionConfig::miniature(), params, rng);
  std::mt19937_64 wrng(15);
  const Tensor y = random_wave(1234, wrng), x = random_wave(900, wrng);
  ad::Tape tape;
  const AttentionOutput out = att.forward(tape, y, x);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(out.signals[i].shape(), (ad::Shape{1, 1234}));
    // Modulation is exactly elementwise.
    const auto m = out.masks[i].data(), c = out.coefficients[i].data(), s = out.modulated[i].data();
    for (std::size_t j = 0; j < s.size(); ++j) ASSERT_EQ(s[j], m[j] * c[j]);
  }
  EXPECT_EQ(out.modulated_all.rows(), 96);
  EXPECT_EQ(out.speaker.shape(), (ad::Shape{32, 1}));
}

TEST(Forward, ZeroMasksGiveSilence) {
  ParameterSet params;
  Rng rng(16);
  SpeakerAttention att(AttentionConfig::miniature(), params, rng);
  for (int i = 1; i <= 3; ++i) {
    params.find("attention.extractor.mask" + std::to_string(i) + ".weight").mutable_vector().setZero();
    params.find("attention.extractor.mask" + std::to_string(i) + ".bias").mutable_vector().setZero();
  }
  std::mt19937_64 wrng(17);
  ad::Tape tape;
  const AttentionOutput out = att.forward(tape, random_wave(500, wrng), random_wave(500, wrng));
  for (const auto& s : out.signals) EXPECT_EQ(s.vector().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, ConfigValidation) {
  AttentionConfig c = AttentionConfig::miniature();
  c.kernels = {20, 20, 160};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = AttentionConfig::miniature();
  c.kernels = {15, 80, 160};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = AttentionConfig::miniature();
  c.tcn_stacks = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Forward, EndToEndGradCheck) {
  ParameterSet params;
  Rng rng(18);
  SpeakerAttention att(testutil::tiny_attention(), params, rng);
  std::mt19937_64 wrng(19);
  Tensor y = random_wave(200, wrng), x = random_wave(200, wrng), s = random_wave(200, wrng);
  y.set_requires_grad(true);
  x.set_requires_grad(true);

  std::vector<Tensor> inputs{y, x};
  for (const auto& p : params.items()) inputs.push_back(p.tensor);
  const ad::OpInstance op = [&](ad::Tape& tape, const std::vector<Tensor>&) {
    const AttentionOutput out = att.forward(tape, y, x);
    return ad::concat_rows(tape, {ad::reshape(tape, out.signals[0], {200, 1}), ad::reshape(tape, out.signals[2], {200, 1}),
                                  out.logits});
  };
  auto draw = [&](std::mt19937_64& r) {
    std::normal_distribution<double> nd(0.0, 0.5);
    for (double& v : y.mutable_data()) v = nd(r);
    for (double& v : x.mutable_data()) v = nd(r);
  };
  const double worst = testutil::worst_error(op, inputs, draw, 10, 6, wrng);
  EXPECT_LE(worst, 1e-4);
}
