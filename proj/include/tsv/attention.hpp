// tsv/attention.hpp

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

#ifndef TSV_ATTENTION_HPP_
#define TSV_ATTENTION_HPP_

#include <array>
#include <vector>

#include "tsv/layers.hpp"

namespace tsv::nn {

struct AttentionConfig {
  Index filters = 256;                        // N
  std::array<Index, 3> kernels = {20, 80, 160};  // L1, L2, L3
  Index extractor_channels = 256;             // O
  Index tcn_channels = 512;                   // P
  Index tcn_kernel = 3;                       // Q
  Index tcn_blocks = 8;                       // I
  Index tcn_stacks = 4;                       // N_S
  Index resnet_blocks = 3;                    // N_R
  Index speaker_dim = 256;                    // D
  Index speakers = 8;                         // C

  Index stride() const { return kernels[0] / 2; }
  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
  /// Minimum reference length that survives every max3 pooling.
  Index min_reference_samples() const;

  static AttentionConfig miniature();
};

struct AttentionOutput {
  std::array<Tensor, 3> coefficients;  // Y_i
  std::array<Tensor, 3> masks;         // M_i
  std::array<Tensor, 3> modulated;     // S_i = M_i * Y_i
  Tensor modulated_all;                // [S_1; S_2; S_3], 3N x K
  std::array<Tensor, 3> signals;       // decoded, each [1 x T]
  Tensor speaker;                      // v, D x 1
  Tensor logits;                       // C x 1
};

/// Speaker attention module: shared multi-scale speech encoder, speaker
/// encoder over the reference, TCN mask estimator and per-scale decoders.
class SpeakerAttention {
 public:
  SpeakerAttention(const AttentionConfig& config, ParameterSet& params, Rng& rng);

  const AttentionConfig& config() const { return config_; }

  /// [3N x K] non-negative coefficients; per-scale pieces in `scales` when given.
  Tensor speech_encode(Tape& tape, const Tensor& waveform, std::array<Tensor, 3>* scales = nullptr) const;
  void speaker_encode(Tape& tape, const Tensor& reference, Tensor& v, Tensor& logits) const;
  std::array<Tensor, 3> extract(Tape& tape, const Tensor& mixture_coeffs, const Tensor& v) const;
  Tensor decode(Tape& tape, const Tensor& modulated, int scale, Index length) const;

  /// y and x are [1 x T] waveforms.
  AttentionOutput forward(Tape& tape, const Tensor& y, const Tensor& x) const;

 private:
  AttentionConfig config_;
  MultiScaleEncoder encoder_;
  // Speaker encoder.
  Norm spk_norm_;
  Pointwise spk_in_;
  std::vector<ResNetBlock> spk_blocks_;
  Pointwise spk_out_;
  Tensor spk_head_w_, spk_head_b_;
  // Extractor.
  Norm ext_norm_;
  Pointwise ext_in_;
  std::vector<TcnBlock> tcn_;
  std::array<Pointwise, 3> mask_heads_;
  // Decoder bases V_i, [N x L_i].
  std::array<Tensor, 3> bases_;
};

}  // namespace tsv::nn

#endif  // TSV_ATTENTION_HPP_
