// attention.cpp

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

#include "tsv/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tsv::nn {

namespace {

void require_positive(Index value, const char* name) {
  if (value < 1) throw std::invalid_argument(std::string(name) + " must be positive");
}

}  // namespace

void AttentionConfig::validate() const {
  require_positive(filters, "filters");
  require_positive(extractor_channels, "extractor_channels");
  require_positive(tcn_channels, "tcn_channels");
  require_positive(tcn_kernel, "tcn_kernel");
  require_positive(tcn_blocks, "tcn_blocks");
  require_positive(tcn_stacks, "tcn_stacks");
  require_positive(resnet_blocks, "resnet_blocks");
  require_positive(speaker_dim, "speaker_dim");
  require_positive(speakers, "speakers");
  if (kernels[0] < 2 || kernels[0] % 2 != 0) throw std::invalid_argument("kernel L1 must be even and >= 2");
  if (!(kernels[0] < kernels[1] && kernels[1] < kernels[2]))
    throw std::invalid_argument("kernels must satisfy L1 < L2 < L3");
  if (tcn_kernel % 2 != 1) throw std::invalid_argument("tcn_kernel must be odd");
}

Index AttentionConfig::min_reference_samples() const {
  Index frames = 1;
  for (Index i = 0; i < resnet_blocks; ++i) frames *= 3;
  return (frames - 1) * stride() + kernels[0];
}

AttentionConfig AttentionConfig::miniature() {
  AttentionConfig c;
  c.filters = 32;
  c.extractor_channels = 32;
  c.tcn_channels = 64;
  c.tcn_kernel = 3;
  c.tcn_blocks = 4;
  c.tcn_stacks = 1;
  c.resnet_blocks = 1;
  c.speaker_dim = 32;
  return c;
}

SpeakerAttention::SpeakerAttention(const AttentionConfig& config, ParameterSet& params, Rng& rng)
    : config_(config) {
  config_.validate();
  const Index n = config_.filters, o = config_.extractor_channels, d = config_.speaker_dim;
  encoder_ = MultiScaleEncoder::make(params, "attention.encoder", n, {config_.kernels.begin(), config_.kernels.end()},
                                     rng);

  spk_norm_ = Norm::make(params, "attention.speaker.norm", 3 * n, false);
  spk_in_ = Pointwise::make(params, "attention.speaker.in", 3 * n, o, rng);
  for (Index b = 0; b < config_.resnet_blocks; ++b)
    spk_blocks_.push_back(ResNetBlock::make(params, "attention.speaker.block" + std::to_string(b + 1), o, o, rng));
  spk_out_ = Pointwise::make(params, "attention.speaker.out", o, d, rng);
  spk_head_w_ = params.add_uniform("attention.speaker.head.weight", {config_.speakers, d}, d, rng);
  spk_head_b_ = params.add_uniform("attention.speaker.head.bias", {config_.speakers}, d, rng);

  ext_norm_ = Norm::make(params, "attention.extractor.norm", 3 * n, false);
  ext_in_ = Pointwise::make(params, "attention.extractor.in", 3 * n, o, rng);
  for (Index s = 0; s < config_.tcn_stacks; ++s) {
    Index dilation = 1;
    for (Index i = 0; i < config_.tcn_blocks; ++i, dilation *= 2) {
      const std::string prefix =
          "attention.extractor.stack" + std::to_string(s + 1) + ".block" + std::to_string(i + 1);
      tcn_.push_back(TcnBlock::make(params, prefix, o, i == 0 ? d : 0, config_.tcn_channels, config_.tcn_kernel,
                                    dilation, rng));
    }
  }
  for (int i = 0; i < 3; ++i)
    mask_heads_[i] = Pointwise::make(params, "attention.extractor.mask" + std::to_string(i + 1), o, n, rng);
  // Each decoder basis starts as a copy of its encoder filter bank, so the
  // untrained encode/decode round trip is positively correlated with its input.
  for (int i = 0; i < 3; ++i)
    bases_[i] = params.add_copy("attention.decoder.V" + std::to_string(i + 1), encoder_.filters[i],
                                {n, config_.kernels[i]});

  // When the first bank is wide enough, its leading rows become +/- pairs of a
  // sine-window MDCT basis at hop L1/2. Through the ReLU each pair carries the
  // signed coefficient, so a unit mask reconstructs the input exactly away
  // from the two edge half-frames. The spare decoder rows start at zero.
  const Index l1 = config_.kernels[0], hop = l1 / 2;
  if (n >= l1) {
    auto u = encoder_.filters[0].mutable_data();
    auto v = bases_[0].mutable_data();
    for (Index k = 0; k < hop; ++k) {
      for (Index t = 0; t < l1; ++t) {
        const double w = std::sin(std::numbers::pi * (t + 0.5) / double(l1));
        const double b = w * std::sqrt(2.0 / double(hop)) *
                         std::cos(std::numbers::pi / double(hop) * (t + 0.5 + hop / 2.0) * (k + 0.5));
        u[(2 * k) * l1 + t] = v[(2 * k) * l1 + t] = b;
        u[(2 * k + 1) * l1 + t] = v[(2 * k + 1) * l1 + t] = -b;
      }
    }
    std::fill(v.begin() + 2 * hop * l1, v.end(), 0.0);
  }
}

Tensor SpeakerAttention::speech_encode(Tape& tape, const Tensor& waveform, std::array<Tensor, 3>* scales) const {
  std::vector<Tensor> parts = encoder_(tape, waveform);
  if (scales)
    for (int i = 0; i < 3; ++i) (*scales)[i] = parts[i];
  return ad::concat_rows(tape, parts);
}

void SpeakerAttention::speaker_encode(Tape& tape, const Tensor& reference, Tensor& v, Tensor& logits) const {
  Index frames = reference.cols();
  for (Index b = 0; b < config_.resnet_blocks; ++b, frames /= 3)
    if (frames < 3)
      throw ad::ShapeError("reference of " + std::to_string(reference.cols()) + " frames does not survive " +
                           std::to_string(config_.resnet_blocks) + " max3 poolings");
  Tensor h = spk_in_(tape, spk_norm_(tape, reference));
  for (const auto& block : spk_blocks_) h = block(tape, h);
  v = ad::pool(tape, spk_out_(tape, h), ad::PoolKind::kMean);
  logits = ad::affine(tape, v, spk_head_w_, spk_head_b_);
}

std::array<Tensor, 3> SpeakerAttention::extract(Tape& tape, const Tensor& mixture_coeffs, const Tensor& v) const {
  if (v.numel() != config_.speaker_dim)
    throw ad::ShapeError("speaker vector has " + std::to_string(v.numel()) + " entries, config expects " +
                         std::to_string(config_.speaker_dim));
  if (mixture_coeffs.rows() != 3 * config_.filters)
    throw ad::ShapeError("mixture coefficients must have 3N rows");
  Tensor aux = v.ndim() == 2 ? v : ad::reshape(tape, v, {v.numel(), 1});
  Tensor h = ext_in_(tape, ext_norm_(tape, mixture_coeffs));
  for (std::size_t b = 0; b < tcn_.size(); ++b) {
    const bool first = b % std::size_t(config_.tcn_blocks) == 0;
    h = first ? tcn_[b](tape, h, aux) : tcn_[b](tape, h);
  }
  std::array<Tensor, 3> masks;
  for (int i = 0; i < 3; ++i) masks[i] = ad::relu(tape, mask_heads_[i](tape, h));
  return masks;
}

Tensor SpeakerAttention::decode(Tape& tape, const Tensor& modulated, int scale, Index length) const {
  if (scale < 0 || scale > 2) throw std::out_of_range("decoder scale must be 0, 1 or 2");
  Tensor raw = ad::conv_transpose1d(tape, modulated, bases_[scale], config_.stride());
  return ad::fit_cols(tape, raw, length);
}

AttentionOutput SpeakerAttention::forward(Tape& tape, const Tensor& y, const Tensor& x) const {
  AttentionOutput out;
  Tensor mixture_coeffs = speech_encode(tape, y, &out.coefficients);
  Tensor reference_coeffs = speech_encode(tape, x);
  speaker_encode(tape, reference_coeffs, out.speaker, out.logits);
  out.masks = extract(tape, mixture_coeffs, out.speaker);
  for (int i = 0; i < 3; ++i) {
    out.modulated[i] = ad::mul(tape, out.masks[i], out.coefficients[i]);
    out.signals[i] = decode(tape, out.modulated[i], i, y.cols());
  }
  out.modulated_all = ad::concat_rows(tape, {out.modulated[0], out.modulated[1], out.modulated[2]});
  return out;
}

}  // namespace tsv::nn
