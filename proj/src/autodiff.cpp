// autodiff.cpp

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

#include "tsv/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tsv::ad {

Index shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape) : impl_(std::make_shared<Impl>()) {
  for (Index d : shape)
    if (d < 0) throw ShapeError("negative dimension in " + shape_string(shape));
  impl_->data = Eigen::VectorXd::Zero(shape_numel(shape));
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : Tensor(std::move(shape)) {
  if (Index(values.size()) != numel())
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_string(impl_->shape));
  std::copy(values.begin(), values.end(), impl_->data.data());
}

Tensor Tensor::from_matrix(const Eigen::Ref<const RowMatrix>& m) {
  Tensor t({m.rows(), m.cols()});
  t.mutable_matrix() = m;
  return t;
}

Tensor Tensor::column(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Tensor t({v.size(), 1});
  t.mutable_vector() = v;
  return t;
}

Index Tensor::rows() const {
  if (impl_->shape.empty()) return 1;
  return impl_->shape[0];
}

Index Tensor::cols() const {
  if (impl_->shape.size() <= 1) return 1;
  return impl_->shape[0] == 0 ? 0 : numel() / impl_->shape[0];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape);
  t.impl_->data = impl_->data;
  return t;
}

Tensor Tensor::view(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw ShapeError("cannot view " + shape_string(impl_->shape) + " as " + shape_string(shape));
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = impl_->data;
  return t;
}

Eigen::VectorXd Gradients::get(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Eigen::VectorXd::Zero(t.numel());
  return it->second;
}

bool Tape::any_requires_grad(std::initializer_list<Tensor> inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

Tensor Tape::record(Tensor output, std::initializer_list<Tensor> inputs, BackwardFn backward) {
  return record(std::move(output), std::vector<Tensor>(inputs), std::move(backward));
}

Tensor Tape::record(Tensor output, const std::vector<Tensor>& inputs, BackwardFn backward) {
  bool needed = std::any_of(inputs.begin(), inputs.end(),
                            [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!needed) return output;
  output.set_requires_grad(true);
  ops_.push_back(Op{output, inputs, std::move(backward)});
  return output;
}

MatrixMap Tape::grad_buffer(const Tensor& t) {
  if (active_ == nullptr) throw std::logic_error("grad_buffer outside of backward()");
  auto [it, inserted] = active_->try_emplace(t.id());
  if (inserted) it->second = Eigen::VectorXd::Zero(t.numel());
  return {it->second.data(), t.rows(), t.cols()};
}

Gradients Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_string(loss.shape()));
  Gradients out;
  active_ = &out.grads_;
  out.grads_[loss.id()] = Eigen::VectorXd::Ones(1);
  for (auto op = ops_.rbegin(); op != ops_.rend(); ++op) {
    auto it = out.grads_.find(op->output.id());
    if (it == out.grads_.end()) continue;
    Eigen::VectorXd grad_output = std::move(it->second);
    out.grads_.erase(it);
    op->backward(*this, grad_output);
  }
  active_ = nullptr;
  return out;
}

namespace {

void require(bool cond, const std::string& message) {
  if (!cond) throw ShapeError(message);
}

void require_2d(const Tensor& t, const char* what) {
  require(t.defined() && t.ndim() == 2, std::string(what) + " must be a 2-D tensor, got " +
                                            (t.defined() ? shape_string(t.shape()) : "undefined"));
}

ConstMatrixMap as_matrix(const Eigen::VectorXd& v, Index rows, Index cols) { return {v.data(), rows, cols}; }

// Delta regression along columns with replicated edge frames.
RowMatrix regression_delta(const RowMatrix& f, Index window) {
  const Index frames = f.cols();
  double denom = 0.0;
  for (Index n = 1; n <= window; ++n) denom += double(n * n);
  denom *= 2.0;
  RowMatrix out = RowMatrix::Zero(f.rows(), frames);
  for (Index t = 0; t < frames; ++t) {
    for (Index n = 1; n <= window; ++n) {
      Index ahead = std::min(t + n, frames - 1);
      Index behind = std::max(t - n, Index{0});
      out.col(t) += (double(n) / denom) * (f.col(ahead) - f.col(behind));
    }
  }
  return out;
}

RowMatrix regression_delta_adjoint(const RowMatrix& g, Index window) {
  const Index frames = g.cols();
  double denom = 0.0;
  for (Index n = 1; n <= window; ++n) denom += double(n * n);
  denom *= 2.0;
  RowMatrix out = RowMatrix::Zero(g.rows(), frames);
  for (Index t = 0; t < frames; ++t) {
    for (Index n = 1; n <= window; ++n) {
      Index ahead = std::min(t + n, frames - 1);
      Index behind = std::max(t - n, Index{0});
      out.col(ahead) += (double(n) / denom) * g.col(t);
      out.col(behind) -= (double(n) / denom) * g.col(t);
    }
  }
  return out;
}

}  // namespace

Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& filters, Index stride) {
  require_2d(input, "conv1d input");
  require(filters.defined() && filters.ndim() == 3, "conv1d filters must be [C_out x C_in x L]");
  require(stride >= 1, "conv1d stride must be positive");
  const Index c_in = input.rows(), length = input.cols();
  const Index c_out = filters.dim(0), kernel = filters.dim(2);
  require(filters.dim(1) == c_in, "conv1d channel mismatch: input has " + std::to_string(c_in) +
                                      " channels, filters expect " + std::to_string(filters.dim(1)));
  require(length >= kernel, "conv1d input shorter than the kernel");
  const Index frames = (length - kernel) / stride + 1;

  // Unfolded input: row (j*L + l) holds input[j, k*stride + l] over k.
  auto cols = std::make_shared<RowMatrix>(c_in * kernel, frames);
  const double* x = input.data().data();
  for (Index j = 0; j < c_in; ++j)
    for (Index l = 0; l < kernel; ++l)
      cols->row(j * kernel + l) =
          Eigen::Map<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>(x + j * length + l, frames,
                                                                         Eigen::InnerStride<>(stride));

  ConstMatrixMap w(filters.data().data(), c_out, c_in * kernel);
  Tensor out({c_out, frames});
  out.mutable_matrix().noalias() = w * (*cols);

  return tape.record(out, {input, filters}, [=](Tape& t, const Eigen::VectorXd& g) {
    auto gout = as_matrix(g, c_out, frames);
    if (filters.requires_grad()) {
      MatrixMap gw(t.grad_buffer(filters).data(), c_out, c_in * kernel);
      gw.noalias() += gout * cols->transpose();
    }
    if (input.requires_grad()) {
      ConstMatrixMap wm(filters.data().data(), c_out, c_in * kernel);
      RowMatrix gcols = wm.transpose() * gout;
      MatrixMap gx = t.grad_buffer(input);
      for (Index j = 0; j < c_in; ++j)
        for (Index l = 0; l < kernel; ++l) {
          Eigen::Map<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> dst(gx.data() + j * length + l, frames,
                                                                     Eigen::InnerStride<>(stride));
          dst += gcols.row(j * kernel + l);
        }
    }
  });
}

Tensor conv_transpose1d(Tape& tape, const Tensor& input, const Tensor& basis, Index stride) {
  require_2d(input, "conv_transpose1d input");
  require_2d(basis, "conv_transpose1d basis");
  require(stride >= 1, "conv_transpose1d stride must be positive");
  require(input.numel() > 0, "conv_transpose1d input is empty");
  const Index c_in = input.rows(), frames = input.cols(), kernel = basis.cols();
  require(basis.rows() == c_in, "conv_transpose1d channel mismatch");
  const Index length = (frames - 1) * stride + kernel;

  RowMatrix segments = basis.matrix().transpose() * input.matrix();  // L x K
  Tensor out({1, length});
  double* y = out.mutable_data().data();
  for (Index l = 0; l < kernel; ++l) {
    Eigen::Map<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> dst(y + l, frames, Eigen::InnerStride<>(stride));
    dst += segments.row(l);
  }

  return tape.record(out, {input, basis}, [=](Tape& t, const Eigen::VectorXd& g) {
    RowMatrix gseg(kernel, frames);
    for (Index l = 0; l < kernel; ++l)
      gseg.row(l) = Eigen::Map<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>(g.data() + l, frames,
                                                                                  Eigen::InnerStride<>(stride));
    if (input.requires_grad()) t.grad_buffer(input).noalias() += basis.matrix() * gseg;
    if (basis.requires_grad()) t.grad_buffer(basis).noalias() += input.matrix() * gseg.transpose();
  });
}

Tensor depthwise_conv1d(Tape& tape, const Tensor& input, const Tensor& filters, Index dilation) {
  require_2d(input, "depthwise_conv1d input");
  require_2d(filters, "depthwise_conv1d filters");
  require(dilation >= 1, "depthwise_conv1d dilation must be positive");
  const Index channels = input.rows(), length = input.cols(), taps = filters.cols();
  require(filters.rows() == channels, "depthwise_conv1d channel mismatch");
  const Index pad_left = (taps - 1) * dilation / 2;

  auto x = input.matrix();
  auto w = filters.matrix();
  Tensor out({channels, length});
  auto y = out.mutable_matrix();
  for (Index q = 0; q < taps; ++q) {
    const Index offset = q * dilation - pad_left;
    const Index t0 = std::max(Index{0}, -offset);
    const Index t1 = std::min(length, length - offset);
    if (t1 <= t0) continue;
    y.middleCols(t0, t1 - t0) += w.col(q).asDiagonal() * x.middleCols(t0 + offset, t1 - t0);
  }

  return tape.record(out, {input, filters}, [=](Tape& t, const Eigen::VectorXd& g) {
    auto gout = as_matrix(g, channels, length);
    auto xm = input.matrix();
    auto wm = filters.matrix();
    for (Index q = 0; q < taps; ++q) {
      const Index offset = q * dilation - pad_left;
      const Index t0 = std::max(Index{0}, -offset);
      const Index t1 = std::min(length, length - offset);
      if (t1 <= t0) continue;
      const Index n = t1 - t0;
      if (input.requires_grad())
        t.grad_buffer(input).middleCols(t0 + offset, n) += wm.col(q).asDiagonal() * gout.middleCols(t0, n);
      if (filters.requires_grad())
        t.grad_buffer(filters).col(q) +=
            gout.middleCols(t0, n).cwiseProduct(xm.middleCols(t0 + offset, n)).rowwise().sum();
    }
  });
}

Tensor pointwise_conv(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_2d(input, "pointwise_conv input");
  require_2d(weight, "pointwise_conv weight");
  const Index c_out = weight.rows(), c_in = weight.cols(), frames = input.cols();
  require(input.rows() == c_in, "pointwise_conv: weight expects " + std::to_string(c_in) +
                                    " channels, input has " + std::to_string(input.rows()));
  if (bias.defined()) require(bias.numel() == c_out, "pointwise_conv bias size mismatch");

  Tensor out({c_out, frames});
  auto y = out.mutable_matrix();
  y.noalias() = weight.matrix() * input.matrix();
  if (bias.defined()) y.colwise() += bias.vector();

  return tape.record(out, {input, weight, bias}, [=](Tape& t, const Eigen::VectorXd& g) {
    auto gout = as_matrix(g, c_out, frames);
    if (input.requires_grad()) t.grad_buffer(input).noalias() += weight.matrix().transpose() * gout;
    if (weight.requires_grad()) t.grad_buffer(weight).noalias() += gout * input.matrix().transpose();
    if (bias.defined() && bias.requires_grad()) {
      MatrixMap gb = t.grad_buffer(bias);
      Eigen::Map<Eigen::VectorXd>(gb.data(), c_out) += gout.rowwise().sum();
    }
  });
}

Tensor affine(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require(input.defined() && (input.ndim() == 1 || (input.ndim() == 2 && input.dim(1) == 1)),
          "affine input must be a vector");
  const bool flat = input.ndim() == 1;
  Tensor column = flat ? reshape(tape, input, {input.numel(), 1}) : input;
  Tensor out = pointwise_conv(tape, column, weight, bias);
  return flat ? reshape(tape, out, {out.numel()}) : out;
}

namespace {

Tensor layer_norm(Tape& tape, const Tensor& input, const Tensor& gain, const Tensor& bias, bool global) {
  require_2d(input, "layer norm input");
  const Index channels = input.rows(), frames = input.cols();
  require(frames >= 1, "layer norm needs at least one frame");
  require(gain.numel() == channels && bias.numel() == channels, "layer norm gain/bias size mismatch");
  auto x = input.matrix();
  Eigen::Map<const Eigen::VectorXd> gvec(gain.data().data(), channels);
  Eigen::Map<const Eigen::VectorXd> bvec(bias.data().data(), channels);

  auto normalized = std::make_shared<RowMatrix>(channels, frames);
  auto inv_std = std::make_shared<Eigen::RowVectorXd>();
  if (global) {
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    *inv_std = Eigen::RowVectorXd::Constant(1, 1.0 / std::sqrt(var + kNormEps));
    *normalized = (x.array() - mean) * (*inv_std)(0);
  } else {
    Eigen::RowVectorXd mean = x.colwise().mean();
    RowMatrix centered = x.rowwise() - mean;
    Eigen::RowVectorXd var = centered.array().square().colwise().mean();
    *inv_std = (var.array() + kNormEps).rsqrt();
    *normalized = centered.array().rowwise() * inv_std->array();
  }
  Tensor out({channels, frames});
  auto y = out.mutable_matrix();
  y = normalized->array().colwise() * gvec.array();
  y.colwise() += bvec;

  return tape.record(out, {input, gain, bias}, [=](Tape& t, const Eigen::VectorXd& g) {
    auto gout = as_matrix(g, channels, frames);
    if (gain.requires_grad()) {
      MatrixMap gg = t.grad_buffer(gain);
      Eigen::Map<Eigen::VectorXd>(gg.data(), channels) += gout.cwiseProduct(*normalized).rowwise().sum();
    }
    if (bias.requires_grad()) {
      MatrixMap gb = t.grad_buffer(bias);
      Eigen::Map<Eigen::VectorXd>(gb.data(), channels) += gout.rowwise().sum();
    }
    if (input.requires_grad()) {
      Eigen::Map<const Eigen::VectorXd> gv(gain.data().data(), channels);
      RowMatrix gnorm = gout.array().colwise() * gv.array();
      if (global) {
        const double m1 = gnorm.mean();
        const double m2 = gnorm.cwiseProduct(*normalized).mean();
        t.grad_buffer(input).array() += (*inv_std)(0) * (gnorm.array() - m1 - normalized->array() * m2);
      } else {
        Eigen::RowVectorXd m1 = gnorm.colwise().mean();
        Eigen::RowVectorXd m2 = gnorm.cwiseProduct(*normalized).colwise().mean();
        RowMatrix d = gnorm.rowwise() - m1;
        d -= (normalized->array().rowwise() * m2.array()).matrix();
        t.grad_buffer(input).array() += d.array().rowwise() * inv_std->array();
      }
    }
  });
}

}  // namespace

Tensor channel_layer_norm(Tape& tape, const Tensor& input, const Tensor& gain, const Tensor& bias) {
  return layer_norm(tape, input, gain, bias, false);
}

Tensor global_layer_norm(Tape& tape, const Tensor& input, const Tensor& gain, const Tensor& bias) {
  return layer_norm(tape, input, gain, bias, true);
}

Tensor relu(Tape& tape, const Tensor& input) {
  Tensor out(input.shape());
  out.mutable_vector() = input.vector().cwiseMax(0.0);
  return tape.record(out, {input}, [=](Tape& t, const Eigen::VectorXd& g) {
    MatrixMap gx = t.grad_buffer(input);
    Eigen::Map<Eigen::VectorXd> flat(gx.data(), input.numel());
    flat.array() += (input.vector().array() > 0.0).select(g.array(), 0.0);
  });
}

Tensor softmax(Tape& tape, const Tensor& input, int axis) {
  require(input.ndim() == 1 || input.ndim() == 2, "softmax expects a 1-D or 2-D tensor");
  require(axis == 0 || (axis == 1 && input.ndim() == 2), "softmax axis out of range");
  const Index rows = input.rows(), cols = input.cols();
  auto x = input.matrix();
  Tensor out(input.shape());
  auto y = out.mutable_matrix();
  if (axis == 0) {
    y = (x.rowwise() - x.colwise().maxCoeff()).array().exp();
    const Eigen::RowVectorXd totals = y.colwise().sum();
    y.array().rowwise() /= totals.array();
  } else {
    y = (x.colwise() - x.rowwise().maxCoeff()).array().exp();
    const Eigen::VectorXd totals = y.rowwise().sum();
    y.array().colwise() /= totals.array();
  }
  return tape.record(out, {input}, [=](Tape& t, const Eigen::VectorXd& g) {
    auto gout = as_matrix(g, rows, cols);
    auto ym = out.matrix();
    RowMatrix gy = gout.cwiseProduct(ym);
    if (axis == 0)
      t.grad_buffer(input) += (gy - (ym.array().rowwise() * gy.colwise().sum().array()).matrix());
    else
      t.grad_buffer(input) += (gy - (ym.array().colwise() * gy.rowwise().sum().array()).matrix());
  });
}

Tensor pool(Tape& tape, const Tensor& input, PoolKind kind) {
  require_2d(input, "pool input");
  const Index channels = input.rows(), frames = input.cols();
  auto x = input.matrix();
  if (kind == PoolKind::kMean) {
    require(frames >= 1, "mean pool over zero frames");
    Tensor out({channels, 1});
    out.mutable_vector() = x.rowwise().mean();
    return tape.record(out, {input}, [=](Tape& t, const Eigen::VectorXd& g) {
      t.grad_buffer(input).colwise() += g / double(frames);
    });
  }
  constexpr Index kWindow = 3;
  require(frames >= kWindow, "max3 pool needs at least 3 frames, got " + std::to_string(frames));
  const Index out_frames = frames / kWindow;
  Tensor out({channels, out_frames});
  auto y = out.mutable_matrix();
  auto argmax = std::make_shared<std::vector<Index>>(channels * out_frames);
  for (Index c = 0; c < channels; ++c)
    for (Index k = 0; k < out_frames; ++k) {
      Index best = k * kWindow;
      for (Index j = best + 1; j < (k + 1) * kWindow; ++j)
        if (x(c, j) > x(c, best)) best = j;
      y(c, k) = x(c, best);
      (*argmax)[c * out_frames + k] = best;
    }
  return tape.record(out, {input}, [=](Tape& t, const Eigen::VectorXd& g) {
    MatrixMap gx = t.grad_buffer(input);
    for (Index c = 0; c < channels; ++c)
      for (Index k = 0; k < out_frames; ++k) gx(c, (*argmax)[c * out_frames + k]) += g[c * out_frames + k];
  });
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + " shape mismatch: " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

Eigen::Map<Eigen::VectorXd> flat_grad(Tape& t, const Tensor& x) {
  MatrixMap m = t.grad_buffer(x);
  return {m.data(), x.numel()};
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  out.mutable_vector() = a.vector() + b.vector();
  return tape.record(out, {a, b}, [=](Tape& t, const Eigen::VectorXd& g) {
    if (a.requires_grad()) flat_grad(t, a) += g;
    if (b.requires_grad()) flat_grad(t, b) += g;
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  out.mutable_vector() = a.vector() - b.vector();
  return tape.record(out, {a, b}, [=](Tape& t, const Eigen::VectorXd& g) {
    if (a.requires_grad()) flat_grad(t, a) += g;
    if (b.requires_grad()) flat_grad(t, b) -= g;
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  out.mutable_vector() = a.vector().cwiseProduct(b.vector());
  return tape.record(out, {a, b}, [=](Tape& t, const Eigen::VectorXd& g) {
    if (a.requires_grad()) flat_grad(t, a) += g.cwiseProduct(b.vector());
    if (b.requires_grad()) flat_grad(t, b) += g.cwiseProduct(a.vector());
  });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out(a.shape());
  out.mutable_vector() = a.vector() * factor;
  return tape.record(out, {a}, [=](Tape& t, const Eigen::VectorXd& g) { flat_grad(t, a) += factor * g; });
}

Tensor sum(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::scalar(a.vector().sum());
  return tape.record(out, {a}, [=](Tape& t, const Eigen::VectorXd& g) { flat_grad(t, a).array() += g[0]; });
}

Tensor weighted_sum(Tape& tape, const std::vector<Tensor>& terms, const std::vector<double>& weights) {
  require(terms.size() == weights.size(), "weighted_sum needs one weight per term");
  double value = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) value += weights[i] * terms[i].item();
  Tensor out = Tensor::scalar(value);
  return tape.record(out, terms, [=](Tape& t, const Eigen::VectorXd& g) {
    for (std::size_t i = 0; i < terms.size(); ++i)
      if (terms[i].requires_grad()) flat_grad(t, terms[i])[0] += weights[i] * g[0];
  });
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  Tensor out = a.view(std::move(shape));
  return tape.record(out, {a}, [=](Tape& t, const Eigen::VectorXd& g) { flat_grad(t, a) += g; });
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_2d(a, "transpose input");
  Tensor out({a.cols(), a.rows()});
  out.mutable_matrix() = a.matrix().transpose();
  const Index r = a.cols(), c = a.rows();
  return tape.record(out, {a}, [=](Tape& t, const Eigen::VectorXd& g) {
    t.grad_buffer(a) += as_matrix(g, r, c).transpose();
  });
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows of nothing");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows part");
    require(p.cols() == cols, "concat_rows column mismatch");
    rows += p.rows();
  }
  Tensor out({rows, cols});
  auto y = out.mutable_matrix();
  Index offset = 0;
  for (const auto& p : parts) {
    y.middleRows(offset, p.rows()) = p.matrix();
    offset += p.rows();
  }
  return tape.record(out, parts, [=](Tape& t, const Eigen::VectorXd& g) {
    auto gout = as_matrix(g, rows, cols);
    Index at = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) t.grad_buffer(p) += gout.middleRows(at, p.rows());
      at += p.rows();
    }
  });
}

Tensor slice_rows(Tape& tape, const Tensor& a, Index begin, Index count) {
  require_2d(a, "slice_rows input");
  require(begin >= 0 && count >= 0 && begin + count <= a.rows(), "slice_rows range out of bounds");
  const Index cols = a.cols();
  Tensor out({count, cols});
  out.mutable_matrix() = a.matrix().middleRows(begin, count);
  return tape.record(out, {a}, [=](Tape& t, const Eigen::VectorXd& g) {
    t.grad_buffer(a).middleRows(begin, count) += as_matrix(g, count, cols);
  });
}

Tensor repeat_cols(Tape& tape, const Tensor& column, Index count) {
  require(column.numel() == column.rows(), "repeat_cols expects a column");
  require(count >= 1, "repeat_cols count must be positive");
  const Index rows = column.rows();
  Tensor out({rows, count});
  out.mutable_matrix() = column.vector().replicate(1, count);
  return tape.record(out, {column}, [=](Tape& t, const Eigen::VectorXd& g) {
    flat_grad(t, column) += as_matrix(g, rows, count).rowwise().sum();
  });
}

Tensor fit_cols(Tape& tape, const Tensor& a, Index length) {
  require_2d(a, "fit_cols input");
  require(length >= 1, "fit_cols length must be positive");
  const Index rows = a.rows(), keep = std::min(length, a.cols());
  Tensor out({rows, length});
  out.mutable_matrix().leftCols(keep) = a.matrix().leftCols(keep);
  return tape.record(out, {a}, [=](Tape& t, const Eigen::VectorXd& g) {
    t.grad_buffer(a).leftCols(keep) += as_matrix(g, rows, length).leftCols(keep);
  });
}

Tensor complex_magnitude(Tape& tape, const Tensor& input) {
  require_2d(input, "complex_magnitude input");
  require(input.rows() % 2 == 0, "complex_magnitude needs stacked real/imaginary rows");
  const Index bins = input.rows() / 2, frames = input.cols();
  auto x = input.matrix();
  Tensor out({bins, frames});
  out.mutable_matrix() = (x.topRows(bins).array().square() + x.bottomRows(bins).array().square()).sqrt();
  return tape.record(out, {input}, [=](Tape& t, const Eigen::VectorXd& g) {
    auto gout = as_matrix(g, bins, frames);
    auto xm = input.matrix();
    auto mag = out.matrix();
    RowMatrix scale = (mag.array() > 0.0).select(gout.array() / mag.array(), 0.0);
    MatrixMap gx = t.grad_buffer(input);
    gx.topRows(bins) += scale.cwiseProduct(xm.topRows(bins));
    gx.bottomRows(bins) += scale.cwiseProduct(xm.bottomRows(bins));
  });
}

Tensor append_deltas(Tape& tape, const Tensor& input, Index window) {
  require_2d(input, "append_deltas input");
  require(window >= 1, "append_deltas window must be positive");
  const Index channels = input.rows(), frames = input.cols();
  require(frames >= 1, "append_deltas needs at least one frame");
  RowMatrix stat = input.matrix();
  RowMatrix delta = regression_delta(stat, window);
  RowMatrix accel = regression_delta(delta, window);
  Tensor out({3 * channels, frames});
  auto y = out.mutable_matrix();
  y.topRows(channels) = stat;
  y.middleRows(channels, channels) = delta;
  y.bottomRows(channels) = accel;
  return tape.record(out, {input}, [=](Tape& t, const Eigen::VectorXd& g) {
    auto gout = as_matrix(g, 3 * channels, frames);
    RowMatrix g_delta = gout.middleRows(channels, channels);
    g_delta += regression_delta_adjoint(gout.bottomRows(channels), window);
    t.grad_buffer(input) += gout.topRows(channels) + regression_delta_adjoint(g_delta, window);
  });
}

Tensor weighted_stats(Tape& tape, const Tensor& frames_in, const Tensor& weights) {
  require_2d(frames_in, "weighted_stats frames");
  const Index channels = frames_in.rows(), frames = frames_in.cols();
  require(frames >= 1, "weighted_stats needs at least one frame");
  require(weights.numel() == frames, "weighted_stats needs one weight per frame");
  auto h = frames_in.matrix();
  Eigen::Map<const Eigen::VectorXd> w(weights.data().data(), frames);

  // Moments are taken about the first frame so identical frames give an
  // exactly zero deviation.
  auto dev = std::make_shared<RowMatrix>(h.colwise() - h.col(0));
  Eigen::VectorXd m1 = (*dev) * w;
  Eigen::VectorXd m2 = dev->cwiseProduct(*dev) * w;
  Eigen::VectorXd var = m2 - m1.cwiseProduct(m1);
  Eigen::VectorXd stdev = var.cwiseMax(0.0).cwiseSqrt();

  Tensor out({2 * channels, 1});
  out.mutable_vector().head(channels) = h.col(0) + m1;
  out.mutable_vector().tail(channels) = stdev;

  return tape.record(out, {frames_in, weights}, [=](Tape& t, const Eigen::VectorXd& g) {
    auto wv = Eigen::Map<const Eigen::VectorXd>(weights.data().data(), frames);
    Eigen::VectorXd g_mean = g.head(channels);
    Eigen::VectorXd g_var = (var.array() > 0.0).select(g.tail(channels).array() / (2.0 * stdev.array()), 0.0);
    Eigen::VectorXd g_m1 = g_mean - 2.0 * m1.cwiseProduct(g_var);
    const Eigen::VectorXd& g_m2 = g_var;
    if (frames_in.requires_grad()) {
      MatrixMap gh = t.grad_buffer(frames_in);
      RowMatrix contrib = g_m1 * wv.transpose();
      contrib += 2.0 * (dev->array().colwise() * g_m2.array()).matrix() * wv.asDiagonal();
      gh += contrib;
      // Frame 0 also enters every deviation as the subtracted origin.
      gh.col(0) += g_mean - wv.sum() * g_m1 - 2.0 * m1.cwiseProduct(g_m2);
    }
    if (weights.requires_grad()) {
      flat_grad(t, weights) += dev->transpose() * g_m1 + dev->cwiseProduct(*dev).transpose() * g_m2;
    }
  });
}

Tensor si_sdr(Tape& tape, const Tensor& estimate, const Tensor& reference) {
  require(estimate.numel() == reference.numel(), "si_sdr needs equal lengths");
  require(estimate.numel() >= 1, "si_sdr on empty signals");
  const Eigen::VectorXd ez = estimate.vector().array() - estimate.vector().mean();
  const Eigen::VectorXd rz = reference.vector().array() - reference.vector().mean();
  const double rr = rz.squaredNorm();
  require(rr > 0.0, "si_sdr reference has zero energy");
  const double er = ez.dot(rz);
  const Eigen::VectorXd proj = (er / rr) * rz;
  const Eigen::VectorXd res = proj - ez;
  const double p = proj.squaredNorm();
  const double r = res.squaredNorm();
  constexpr double kDb = 10.0 / 2.302585092994045684;  // 10 / ln 10

  double value;
  bool active = true;
  if (p + r == 0.0) {
    value = 10.0 * std::log10(kSiSdrFloor);
    active = false;
  } else if (r < kSiSdrFloor * p) {
    value = -10.0 * std::log10(kSiSdrFloor);
    active = false;
  } else if (p < kSiSdrFloor * r) {
    value = 10.0 * std::log10(kSiSdrFloor);
    active = false;
  } else {
    value = 10.0 * std::log10(p / r);
  }
  Tensor out = Tensor::scalar(value);
  if (!active) return out;
  return tape.record(out, {estimate, reference}, [=](Tape& t, const Eigen::VectorXd& g) {
    const double c = kDb * g[0];
    if (estimate.requires_grad()) {
      Eigen::VectorXd ge = c * (2.0 * proj / p + 2.0 * res / r);
      flat_grad(t, estimate).array() += ge.array() - ge.mean();
    }
    if (reference.requires_grad()) {
      Eigen::VectorXd dp = (2.0 * er / rr) * ez - (2.0 * er * er / (rr * rr)) * rz;
      Eigen::VectorXd gr = c * (1.0 / p + 1.0 / r) * dp;
      flat_grad(t, reference).array() += gr.array() - gr.mean();
    }
  });
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, Index label) {
  const Index classes = logits.numel();
  require(label >= 0 && label < classes,
          "cross_entropy label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
  const Eigen::VectorXd& z = logits.vector();
  const double top = z.maxCoeff();
  const Eigen::VectorXd e = (z.array() - top).exp();
  const double total = e.sum();
  Tensor out = Tensor::scalar(top + std::log(total) - z[label]);
  return tape.record(out, {logits}, [=](Tape& t, const Eigen::VectorXd& g) {
    Eigen::VectorXd grad = e / total;
    grad[label] -= 1.0;
    flat_grad(t, logits) += g[0] * grad;
  });
}

}  // namespace tsv::ad
