// tsv/representation.hpp

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

#ifndef TSV_REPRESENTATION_HPP_
#define TSV_REPRESENTATION_HPP_

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tsv/attention.hpp"

namespace tsv::nn {

enum class Scheme { kR, kT, kF, kFA };

/// "r", "t", "f", "fa" (case-insensitive); throws std::invalid_argument.
Scheme parse_scheme(const std::string& text);
std::string scheme_name(Scheme scheme);
/// True for the schemes that consume the decoded waveform.
inline bool uses_waveform(Scheme scheme) { return scheme != Scheme::kR; }

inline constexpr Index kEmbeddingDim = 256;
inline constexpr Index kStatsEmbeddingDim = 2 * kEmbeddingDim;

struct RepresentationConfig {
  Scheme scheme = Scheme::kFA;
  Index width = 256;        // trunk channels after the input 1x1 conv
  Index resnet_blocks = 3;  // N_R
  Index pool_hidden = 500;  // attentive pooling hidden units
  Index speakers = 8;       // C
  // Scheme T encoder and scheme R input geometry, copied from the attention config.
  Index filters = 256;
  std::array<Index, 3> kernels = {20, 80, 160};

  void validate() const;
  Index embedding_dim() const { return scheme == Scheme::kFA ? kStatsEmbeddingDim : kEmbeddingDim; }
  Index input_channels() const;
  /// Shortest waveform (scheme T/F/FA) whose frames survive every max3 pooling.
  Index min_samples() const;
};

/// Windowed cosine and negated sine rows for the magnitude STFT, [2B x 1 x 256].
Tensor stft_filters();
/// Differentiable counterpart of dsp::stft_magnitude, returned as [bins x frames].
Tensor stft_magnitude(Tape& tape, const Tensor& waveform, const Tensor& filters);

/// Speaker representation module: scheme front-end, ResNet trunk, pooling and
/// the speaker classifier used by the classification loss.
class SpeakerRepresentation {
 public:
  SpeakerRepresentation(const RepresentationConfig& config, ParameterSet& params, Rng& rng);

  const RepresentationConfig& config() const { return config_; }

  /// Scheme R consumes the modulated coefficients [3N x K].
  Tensor embed_coefficients(Tape& tape, const Tensor& modulated) const;
  /// Schemes T/F/FA consume a [1 x T] waveform.
  Tensor embed_waveform(Tape& tape, const Tensor& waveform) const;
  /// Dispatches on the scheme using the attention output.
  Tensor embed(Tape& tape, const AttentionOutput& attended) const;

  /// Frame-level trunk output [256 x T'] for the given front-end features.
  Tensor trunk(Tape& tape, const Tensor& features) const;
  /// [2C_h x 1] weighted mean and standard deviation; `weights` receives the
  /// softmax frame weights when given.
  Tensor attentive_stat_pool(Tape& tape, const Tensor& frames, Tensor* weights = nullptr) const;
  Tensor classify(Tape& tape, const Tensor& embedding) const;

 private:
  RepresentationConfig config_;
  std::optional<MultiScaleEncoder> encoder_;
  Tensor stft_;
  Norm norm_;
  Pointwise in_;
  std::vector<ResNetBlock> blocks_;
  Pointwise out_;
  Pointwise pool_hidden_, pool_score_;
  Tensor head_w_, head_b_;
};

}  // namespace tsv::nn

#endif  // TSV_REPRESENTATION_HPP_
