// representation.cpp

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

#include "tsv/representation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tsv::nn {

Scheme parse_scheme(const std::string& text) {
  std::string s = text;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (s == "r") return Scheme::kR;
  if (s == "t") return Scheme::kT;
  if (s == "f") return Scheme::kF;
  if (s == "fa") return Scheme::kFA;
  throw std::invalid_argument("unknown scheme '" + text + "' (expected r, t, f or fa)");
}

std::string scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::kR: return "r";
    case Scheme::kT: return "t";
    case Scheme::kF: return "f";
    case Scheme::kFA: return "fa";
  }
  return "?";
}

void RepresentationConfig::validate() const {
  if (width < 1 || resnet_blocks < 0 || pool_hidden < 1 || speakers < 1 || filters < 1)
    throw std::invalid_argument("representation sizes must be positive");
  if (kernels[0] < 2 || kernels[0] % 2 != 0 || !(kernels[0] < kernels[1] && kernels[1] < kernels[2]))
    throw std::invalid_argument("representation kernels must be even L1 < L2 < L3");
}

Index RepresentationConfig::input_channels() const {
  switch (scheme) {
    case Scheme::kR:
    case Scheme::kT: return 3 * filters;
    case Scheme::kF: return dsp::kStftBins;
    case Scheme::kFA: return 3 * dsp::kStftBins;
  }
  return 0;
}

Index RepresentationConfig::min_samples() const {
  Index frames = 1;
  for (Index i = 0; i < resnet_blocks; ++i) frames *= 3;
  if (scheme == Scheme::kF || scheme == Scheme::kFA) return (frames - 1) * dsp::kStftHop + dsp::kStftWindow;
  return (frames - 1) * (kernels[0] / 2) + kernels[0];
}

Tensor stft_filters() {
  const Index n = dsp::kStftWindow, bins = dsp::kStftBins;
  const Eigen::VectorXd window = dsp::hamming_window(n);
  Tensor f({2 * bins, 1, n});
  auto m = f.mutable_data();
  for (Index k = 0; k < bins; ++k) {
    for (Index t = 0; t < n; ++t) {
      // Reduce k*t modulo n before scaling so every row is exactly periodic.
      const double phase = 2.0 * std::numbers::pi * double((k * t) % n) / double(n);
      m[k * n + t] = window[t] * std::cos(phase);
      m[(bins + k) * n + t] = -window[t] * std::sin(phase);
    }
  }
  return f;
}

Tensor stft_magnitude(Tape& tape, const Tensor& waveform, const Tensor& filters) {
  if (waveform.cols() < dsp::kStftWindow)
    throw ad::ShapeError("waveform of " + std::to_string(waveform.cols()) + " samples is shorter than one STFT window");
  return ad::complex_magnitude(tape, ad::conv1d(tape, waveform, filters, dsp::kStftHop));
}

SpeakerRepresentation::SpeakerRepresentation(const RepresentationConfig& config, ParameterSet& params, Rng& rng)
    : config_(config) {
  config_.validate();
  if (config_.scheme == Scheme::kT)
    encoder_ = MultiScaleEncoder::make(params, "representation.encoder", config_.filters,
                                       {config_.kernels.begin(), config_.kernels.end()}, rng);
  if (config_.scheme == Scheme::kF || config_.scheme == Scheme::kFA) stft_ = stft_filters();

  const Index in = config_.input_channels(), w = config_.width;
  norm_ = Norm::make(params, "representation.norm", in, false);
  in_ = Pointwise::make(params, "representation.in", in, w, rng);
  for (Index b = 0; b < config_.resnet_blocks; ++b)
    blocks_.push_back(ResNetBlock::make(params, "representation.block" + std::to_string(b + 1), w, w, rng));
  out_ = Pointwise::make(params, "representation.out", w, kEmbeddingDim, rng);
  if (config_.scheme == Scheme::kFA) {
    pool_hidden_ = Pointwise::make(params, "representation.pool.hidden", kEmbeddingDim, config_.pool_hidden, rng);
    pool_score_ = Pointwise::make(params, "representation.pool.score", config_.pool_hidden, 1, rng);
  }
  const Index dim = config_.embedding_dim();
  head_w_ = params.add_uniform("representation.head.weight", {config_.speakers, dim}, dim, rng);
  head_b_ = params.add_uniform("representation.head.bias", {config_.speakers}, dim, rng);
}

Tensor SpeakerRepresentation::trunk(Tape& tape, const Tensor& features) const {
  Index frames = features.cols();
  for (Index b = 0; b < config_.resnet_blocks; ++b, frames /= 3)
    if (frames < 3)
      throw ad::ShapeError("input of " + std::to_string(features.cols()) + " frames does not survive " +
                           std::to_string(config_.resnet_blocks) + " max3 poolings");
  Tensor h = in_(tape, norm_(tape, features));
  for (const auto& block : blocks_) h = block(tape, h);
  return out_(tape, h);
}

Tensor SpeakerRepresentation::attentive_stat_pool(Tape& tape, const Tensor& frames, Tensor* weights) const {
  Tensor scores = pool_score_(tape, ad::relu(tape, pool_hidden_(tape, frames)));
  Tensor w = ad::softmax(tape, scores, 1);
  if (weights) *weights = w;
  return ad::weighted_stats(tape, frames, w);
}

Tensor SpeakerRepresentation::embed_coefficients(Tape& tape, const Tensor& modulated) const {
  if (config_.scheme != Scheme::kR) throw std::logic_error("coefficient input is only valid for scheme r");
  return ad::pool(tape, trunk(tape, modulated), ad::PoolKind::kMean);
}

Tensor SpeakerRepresentation::embed_waveform(Tape& tape, const Tensor& waveform) const {
  switch (config_.scheme) {
    case Scheme::kR:
      throw std::logic_error("scheme r has no waveform input");
    case Scheme::kT:
      return ad::pool(tape, trunk(tape, ad::concat_rows(tape, (*encoder_)(tape, waveform))), ad::PoolKind::kMean);
    case Scheme::kF:
      return ad::pool(tape, trunk(tape, stft_magnitude(tape, waveform, stft_)), ad::PoolKind::kMean);
    case Scheme::kFA:
      return attentive_stat_pool(tape, trunk(tape, ad::append_deltas(tape, stft_magnitude(tape, waveform, stft_))));
  }
  return {};
}

Tensor SpeakerRepresentation::embed(Tape& tape, const AttentionOutput& attended) const {
  return config_.scheme == Scheme::kR ? embed_coefficients(tape, attended.modulated_all)
                                      : embed_waveform(tape, attended.signals[0]);
}

Tensor SpeakerRepresentation::classify(Tape& tape, const Tensor& embedding) const {
  if (embedding.numel() != config_.embedding_dim())
    throw ad::ShapeError("embedding of width " + std::to_string(embedding.numel()) + " does not match scheme " +
                         scheme_name(config_.scheme));
  return ad::affine(tape, embedding, head_w_, head_b_);
}

}  // namespace tsv::nn
