// grad_check.cpp

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

#include "tsv/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace tsv::ad {

namespace {

constexpr double kDenominatorFloor = 1e-8;

double evaluate(const OpInstance& op, const std::vector<Tensor>& inputs, const Eigen::VectorXd& projection) {
  Tape tape;
  Tensor out = op(tape, inputs);
  return out.vector().dot(projection);
}

}  // namespace

GradCheckReport grad_check(const OpInstance& op, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options) {
  if (options.perturbation < 1e-7 || options.perturbation > 1e-4)
    throw std::invalid_argument("grad_check perturbation must lie in [1e-7, 1e-4]");
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;

  Eigen::VectorXd projection;
  Gradients grads;
  {
    Tape tape;
    Tensor out = op(tape, inputs);
    projection.resize(out.numel());
    if (out.numel() == 1) {
      projection[0] = 1.0;
    } else {
      for (Index i = 0; i < out.numel(); ++i) projection[i] = normal(rng);
    }
    Tensor weights = Tensor(out.shape());
    weights.mutable_vector() = projection;
    Tensor loss = sum(tape, mul(tape, out, weights));
    grads = tape.backward(loss);
  }

  const double h = options.perturbation;
  GradCheckReport report;
  for (const Tensor& input : inputs) {
    if (!input.defined() || !input.requires_grad()) continue;
    Eigen::VectorXd analytic = grads.get(input);
    std::vector<Index> coords(std::size_t(input.numel()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (options.max_coords_per_input > 0 && Index(coords.size()) > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(std::size_t(options.max_coords_per_input));
    }
    Tensor handle = input;
    auto data = handle.mutable_data();
    for (Index i : coords) {
      const double saved = data[std::size_t(i)];
      data[std::size_t(i)] = saved + h;
      const double f_plus = evaluate(op, inputs, projection);
      data[std::size_t(i)] = saved - h;
      const double f_minus = evaluate(op, inputs, projection);
      data[std::size_t(i)] = saved;
      const double f_zero = evaluate(op, inputs, projection);

      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kDenominatorFloor});
      if (err > 1e-4) {
        const double right = (f_plus - f_zero) / h;
        const double left = (f_zero - f_minus) / h;
        if (std::abs(right - left) > 0.5 * std::abs(a - numeric))
          throw NonDifferentiablePoint("finite-difference probe crosses a kink");
      }
      report.max_relative_error = std::max(report.max_relative_error, err);
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace tsv::ad
