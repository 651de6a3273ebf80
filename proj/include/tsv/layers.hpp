// tsv/layers.hpp

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

#ifndef TSV_LAYERS_HPP_
#define TSV_LAYERS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tsv/autodiff.hpp"
#include "tsv/dsp.hpp"

namespace tsv::nn {

using ad::Index;
using ad::Tape;
using ad::Tensor;

using Rng = std::mt19937_64;

struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Named trainable tensors. Names are unique; insertion order is preserved
/// and defines the serialization order.
class ParameterSet {
 public:
  /// Registers `t` (shared, not copied) as a trainable parameter.
  Tensor add(const std::string& name, Tensor t);
  /// Uniform in +-sqrt(1/fan_in).
  Tensor add_uniform(const std::string& name, ad::Shape shape, Index fan_in, Rng& rng);
  Tensor add_constant(const std::string& name, ad::Shape shape, double value);
  /// New parameter holding a copy of `source` under `shape` (equal numel).
  Tensor add_copy(const std::string& name, const Tensor& source, ad::Shape shape);

  const std::vector<Parameter>& items() const { return items_; }
  std::vector<Parameter>& items() { return items_; }
  Tensor find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return items_.size(); }
  Index scalar_count() const;

  void set_trainable(bool trainable);
  /// Copies values from `other`, matching by name and shape.
  void copy_values_from(const ParameterSet& other);
  bool all_finite() const;

 private:
  std::vector<Parameter> items_;
  std::map<std::string, std::size_t> index_;
};

/// Gradient of every parameter in `params`, zero where disconnected.
std::map<std::string, Eigen::VectorXd> collect_gradients(const ParameterSet& params, const ad::Gradients& grads);

/// [1 x T] constant tensor holding the samples of `w`.
Tensor waveform_tensor(const dsp::Waveform& w);
dsp::Waveform tensor_waveform(const Tensor& t, int sample_rate = dsp::kSampleRate);

struct Pointwise {
  Tensor weight;
  Tensor bias;

  static Pointwise make(ParameterSet& params, const std::string& prefix, Index in, Index out, Rng& rng);
  Tensor operator()(Tape& tape, const Tensor& x) const { return ad::pointwise_conv(tape, x, weight, bias); }
};

struct Norm {
  Tensor gain;
  Tensor bias;
  bool global = false;

  static Norm make(ParameterSet& params, const std::string& prefix, Index channels, bool global);
  Tensor operator()(Tape& tape, const Tensor& x) const {
    return global ? ad::global_layer_norm(tape, x, gain, bias) : ad::channel_layer_norm(tape, x, gain, bias);
  }
};

/// 1x1 conv -> cLN -> ReLU -> 1x1 conv -> cLN -> residual add -> max3 pool.
struct ResNetBlock {
  Pointwise conv1;
  Norm norm1;
  Pointwise conv2;
  Norm norm2;

  static ResNetBlock make(ParameterSet& params, const std::string& prefix, Index channels, Index hidden, Rng& rng);
  Tensor operator()(Tape& tape, const Tensor& x) const;
};

/// One temporal block: 1x1 conv -> ReLU -> gLN -> dilated depthwise conv ->
/// ReLU -> gLN -> 1x1 conv, added back onto the block input. When `aux` is
/// given it is tiled over time and stacked under the input before the first
/// 1x1 conv; the residual path carries the input alone.
struct TcnBlock {
  Pointwise in_conv;
  Norm norm1;
  Tensor depthwise;
  Norm norm2;
  Pointwise out_conv;
  Index dilation = 1;

  static TcnBlock make(ParameterSet& params, const std::string& prefix, Index channels, Index aux_channels,
                       Index hidden, Index kernel, Index dilation, Rng& rng);
  Tensor operator()(Tape& tape, const Tensor& x, const std::optional<Tensor>& aux = std::nullopt) const;
};

/// Three parallel ReLU convolutions with stride L1/2. The waveform is
/// zero-padded on the right so every scale yields the same frame count.
struct MultiScaleEncoder {
  std::vector<Tensor> filters;  // [N x 1 x L_i]
  std::vector<Index> kernels;
  Index stride = 1;

  static MultiScaleEncoder make(ParameterSet& params, const std::string& prefix, Index filters,
                                const std::vector<Index>& kernels, Rng& rng);
  Index frame_count(Index samples) const;
  /// Per-scale coefficients, each [N x K].
  std::vector<Tensor> operator()(Tape& tape, const Tensor& waveform) const;
};

}  // namespace tsv::nn

#endif  // TSV_LAYERS_HPP_
