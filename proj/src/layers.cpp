// layers.cpp

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

#include "tsv/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace tsv::nn {

Tensor ParameterSet::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
  t.set_requires_grad(true);
  index_[name] = items_.size();
  items_.push_back({name, t});
  return t;
}

Tensor ParameterSet::add_uniform(const std::string& name, ad::Shape shape, Index fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / double(std::max<Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.mutable_data()) v = dist(rng);
  return add(name, t);
}

Tensor ParameterSet::add_constant(const std::string& name, ad::Shape shape, double value) {
  Tensor t(std::move(shape));
  t.mutable_vector().setConstant(value);
  return add(name, t);
}

Tensor ParameterSet::add_copy(const std::string& name, const Tensor& source, ad::Shape shape) {
  return add(name, source.view(std::move(shape)));
}

Tensor ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return items_[it->second].tensor;
}

Index ParameterSet::scalar_count() const {
  Index n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

void ParameterSet::set_trainable(bool trainable) {
  for (auto& p : items_) p.tensor.set_requires_grad(trainable);
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (auto& p : items_) {
    Tensor src = other.find(p.name);
    if (src.shape() != p.tensor.shape())
      throw std::invalid_argument("shape mismatch for parameter " + p.name + ": " + ad::shape_string(src.shape()) +
                                  " vs " + ad::shape_string(p.tensor.shape()));
    p.tensor.mutable_vector() = src.vector();
  }
}

bool ParameterSet::all_finite() const {
  for (const auto& p : items_)
    if (!p.tensor.all_finite()) return false;
  return true;
}

std::map<std::string, Eigen::VectorXd> collect_gradients(const ParameterSet& params, const ad::Gradients& grads) {
  std::map<std::string, Eigen::VectorXd> out;
  for (const auto& p : params.items()) out[p.name] = grads.get(p.tensor);
  return out;
}

Tensor waveform_tensor(const dsp::Waveform& w) {
  Tensor t({1, Index(w.size())});
  t.mutable_vector() = w.vector();
  return t;
}

dsp::Waveform tensor_waveform(const Tensor& t, int sample_rate) {
  return {std::vector<double>(t.data().begin(), t.data().end()), sample_rate};
}

Pointwise Pointwise::make(ParameterSet& params, const std::string& prefix, Index in, Index out, Rng& rng) {
  Pointwise p;
  p.weight = params.add_uniform(prefix + ".weight", {out, in}, in, rng);
  p.bias = params.add_uniform(prefix + ".bias", {out}, in, rng);
  return p;
}

Norm Norm::make(ParameterSet& params, const std::string& prefix, Index channels, bool global) {
  Norm n;
  n.gain = params.add_constant(prefix + ".gain", {channels}, 1.0);
  n.bias = params.add_constant(prefix + ".bias", {channels}, 0.0);
  n.global = global;
  return n;
}

ResNetBlock ResNetBlock::make(ParameterSet& params, const std::string& prefix, Index channels, Index hidden,
                              Rng& rng) {
  ResNetBlock b;
  b.conv1 = Pointwise::make(params, prefix + ".conv1", channels, hidden, rng);
  b.norm1 = Norm::make(params, prefix + ".norm1", hidden, false);
  b.conv2 = Pointwise::make(params, prefix + ".conv2", hidden, channels, rng);
  b.norm2 = Norm::make(params, prefix + ".norm2", channels, false);
  return b;
}

Tensor ResNetBlock::operator()(Tape& tape, const Tensor& x) const {
  Tensor h = ad::relu(tape, norm1(tape, conv1(tape, x)));
  h = norm2(tape, conv2(tape, h));
  return ad::pool(tape, ad::add(tape, h, x), ad::PoolKind::kMax3);
}

TcnBlock TcnBlock::make(ParameterSet& params, const std::string& prefix, Index channels, Index aux_channels,
                        Index hidden, Index kernel, Index dilation, Rng& rng) {
  TcnBlock b;
  b.in_conv = Pointwise::make(params, prefix + ".in_conv", channels + aux_channels, hidden, rng);
  b.norm1 = Norm::make(params, prefix + ".norm1", hidden, true);
  b.depthwise = params.add_uniform(prefix + ".depthwise", {hidden, kernel}, kernel, rng);
  b.norm2 = Norm::make(params, prefix + ".norm2", hidden, true);
  b.out_conv = Pointwise::make(params, prefix + ".out_conv", hidden, channels, rng);
  b.dilation = dilation;
  return b;
}

Tensor TcnBlock::operator()(Tape& tape, const Tensor& x, const std::optional<Tensor>& aux) const {
  Tensor input = aux ? ad::concat_rows(tape, {x, ad::repeat_cols(tape, *aux, x.cols())}) : x;
  Tensor h = norm1(tape, ad::relu(tape, in_conv(tape, input)));
  h = norm2(tape, ad::relu(tape, ad::depthwise_conv1d(tape, h, depthwise, dilation)));
  return ad::add(tape, x, out_conv(tape, h));
}

MultiScaleEncoder MultiScaleEncoder::make(ParameterSet& params, const std::string& prefix, Index filters,
                                          const std::vector<Index>& kernels, Rng& rng) {
  if (kernels.empty() || kernels.front() < 2 || kernels.front() % 2 != 0)
    throw std::invalid_argument("encoder needs an even shortest kernel");
  MultiScaleEncoder e;
  e.kernels = kernels;
  e.stride = kernels.front() / 2;
  for (std::size_t i = 0; i < kernels.size(); ++i)
    e.filters.push_back(
        params.add_uniform(prefix + ".U" + std::to_string(i + 1), {filters, 1, kernels[i]}, kernels[i], rng));
  return e;
}

Index MultiScaleEncoder::frame_count(Index samples) const {
  if (samples < kernels.front()) return 0;
  return (samples - kernels.front()) / stride + 1;
}

std::vector<Tensor> MultiScaleEncoder::operator()(Tape& tape, const Tensor& waveform) const {
  const Index frames = frame_count(waveform.cols());
  if (frames < 1)
    throw ad::ShapeError("waveform of " + std::to_string(waveform.cols()) + " samples is shorter than the " +
                         std::to_string(kernels.front()) + "-sample encoder window");
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    Tensor padded = ad::fit_cols(tape, waveform, (frames - 1) * stride + kernels[i]);
    out.push_back(ad::relu(tape, ad::conv1d(tape, padded, filters[i], stride)));
  }
  return out;
}

}  // namespace tsv::nn
