// tsv/autodiff.hpp

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

#ifndef TSV_AUTODIFF_HPP_
#define TSV_AUTODIFF_HPP_

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace tsv::ad {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Raised for shape disagreements and violated operator preconditions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Index shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float64 array. Copies are handles onto the same storage,
/// so a Tensor recorded on a tape stays valid after the caller drops it.
///
/// Tensors with more than one dimension are viewed as a matrix of
/// shape[0] rows by numel/shape[0] columns; a 1-D tensor is a column.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor from_matrix(const Eigen::Ref<const RowMatrix>& m);
  /// Column vector of shape {n, 1}.
  static Tensor column(const Eigen::Ref<const Eigen::VectorXd>& v);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  Index dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t ndim() const { return impl_->shape.size(); }
  Index numel() const { return impl_->data.size(); }
  Index rows() const;
  Index cols() const;

  std::span<const double> data() const { return {impl_->data.data(), std::size_t(numel())}; }
  std::span<double> mutable_data() { return {impl_->data.data(), std::size_t(numel())}; }
  const Eigen::VectorXd& vector() const { return impl_->data; }
  Eigen::VectorXd& mutable_vector() { return impl_->data; }
  ConstMatrixMap matrix() const { return {impl_->data.data(), rows(), cols()}; }
  MatrixMap mutable_matrix() { return {impl_->data.data(), rows(), cols()}; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  /// Marks a leaf as trainable. Returns *this for chaining.
  Tensor& set_requires_grad(bool flag);

  /// Deep copy with a fresh identity; requires_grad is not carried over.
  Tensor clone() const;
  /// Same storage reinterpreted under another shape with equal numel.
  /// The result is a new leaf; use ad::reshape to stay on the tape.
  Tensor view(Shape shape) const;

  const void* id() const { return impl_.get(); }
  bool all_finite() const { return impl_->data.allFinite(); }

 private:
  struct Impl {
    Shape shape;
    Eigen::VectorXd data;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

class Tape;

/// Gradients keyed by tensor identity. Tensors that were not on a path to the
/// loss report a zero gradient of their own shape.
class Gradients {
 public:
  Eigen::VectorXd get(const Tensor& t) const;
  bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }

 private:
  friend class Tape;
  std::unordered_map<const void*, Eigen::VectorXd> grads_;
};

/// Ordered record of executed operations. Operations whose inputs do not
/// require gradients are evaluated but never recorded, so a tape over a
/// frozen module costs nothing beyond the forward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Eigen::VectorXd& grad_output)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `output` as produced from `inputs`. When none of the inputs
  /// requires a gradient the op is dropped and `output` stays a constant.
  Tensor record(Tensor output, std::initializer_list<Tensor> inputs, BackwardFn backward);
  Tensor record(Tensor output, const std::vector<Tensor>& inputs, BackwardFn backward);

  static bool any_requires_grad(std::initializer_list<Tensor> inputs);

  /// Zero-initialized accumulation buffer for `t`, viewed as its matrix.
  /// Only valid while backward() runs.
  MatrixMap grad_buffer(const Tensor& t);

  std::size_t size() const { return ops_.size(); }

  /// Reverse sweep from a scalar loss. The tape can be replayed again; each
  /// call starts from zeroed gradients.
  Gradients backward(const Tensor& loss);

 private:
  struct Op {
    Tensor output;
    std::vector<Tensor> inputs;
    BackwardFn backward;
  };
  std::vector<Op> ops_;
  std::unordered_map<const void*, Eigen::VectorXd>* active_ = nullptr;
};

inline Gradients backward(Tape& tape, const Tensor& loss) { return tape.backward(loss); }

// ---------------------------------------------------------------------------
// Operators. Every function records onto `tape` when an input requires grad.

/// Strided valid cross-correlation. input [C_in x T], filters [C_out x C_in x L].
Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& filters, Index stride);

/// Overlap-add synthesis. input [C_in x K], basis [C_in x L] -> [1 x (K-1)*stride + L].
Tensor conv_transpose1d(Tape& tape, const Tensor& input, const Tensor& basis, Index stride);

/// Per-channel dilated convolution with same-length zero padding;
/// (Q-1)*dilation/2 zeros on the left, the rest on the right.
Tensor depthwise_conv1d(Tape& tape, const Tensor& input, const Tensor& filters, Index dilation);

/// weight [C_out x C_in] applied at every frame of input [C_in x T], plus bias.
/// An undefined bias is skipped.
Tensor pointwise_conv(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias);

/// weight * input + bias for a vector input of D_in entries ({D_in} or {D_in,1}).
Tensor affine(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias);

inline constexpr double kNormEps = 1e-8;

/// Per frame: remove mean and variance over channels, then gain/bias per channel.
Tensor channel_layer_norm(Tape& tape, const Tensor& input, const Tensor& gain, const Tensor& bias);
/// Mean and variance over all C*T entries, then gain/bias per channel.
Tensor global_layer_norm(Tape& tape, const Tensor& input, const Tensor& gain, const Tensor& bias);

Tensor relu(Tape& tape, const Tensor& input);
/// Softmax of a 2-D tensor along axis 0 (down columns) or 1 (along rows).
/// 1-D tensors only accept axis 0.
Tensor softmax(Tape& tape, const Tensor& input, int axis);

enum class PoolKind { kMean, kMax3 };
/// kMean averages over time to [C x 1]; kMax3 takes window 3, stride 3.
Tensor pool(Tape& tape, const Tensor& input, PoolKind kind);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
/// Sum of all entries as a {1} tensor.
Tensor sum(Tape& tape, const Tensor& a);
/// Weighted sum of {1} tensors.
Tensor weighted_sum(Tape& tape, const std::vector<Tensor>& terms, const std::vector<double>& weights);

Tensor reshape(Tape& tape, const Tensor& a, Shape shape);
Tensor transpose(Tape& tape, const Tensor& a);
/// Stack 2-D tensors with equal column counts along the channel axis.
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_rows(Tape& tape, const Tensor& a, Index begin, Index count);
/// [D x 1] column tiled to [D x count].
Tensor repeat_cols(Tape& tape, const Tensor& column, Index count);
/// Zero-pad on the right or trim the trailing columns to reach `length`.
Tensor fit_cols(Tape& tape, const Tensor& a, Index length);

/// sqrt(re^2 + im^2) where rows [0, B) hold real parts and [B, 2B) imaginary
/// parts of input [2B x F]. The gradient at a zero magnitude is taken as 0.
Tensor complex_magnitude(Tape& tape, const Tensor& input);

/// Regression deltas along time with replicated edges:
/// [C x F] -> [3C x F] stacking static, delta and acceleration.
Tensor append_deltas(Tape& tape, const Tensor& input, Index window = 2);

/// Concatenated weighted mean and standard deviation over frames.
/// frames [C x T], weights [1 x T] -> [2C x 1]. The variance is floored at 0
/// and the square-root gradient is taken as 0 where the floor is active.
Tensor weighted_stats(Tape& tape, const Tensor& frames, const Tensor& weights);

inline constexpr double kSiSdrFloor = 1e-12;
/// Differentiable zero-mean SI-SDR in dB for [1 x T] signals. The residual
/// energy is floored at kSiSdrFloor times the projected-target energy.
Tensor si_sdr(Tape& tape, const Tensor& estimate, const Tensor& reference);

/// -log softmax(logits)[label] for logits of C entries.
Tensor cross_entropy(Tape& tape, const Tensor& logits, Index label);

}  // namespace tsv::ad

#endif  // TSV_AUTODIFF_HPP_
