// tsv/grad_check.hpp

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

#ifndef TSV_GRAD_CHECK_HPP_
#define TSV_GRAD_CHECK_HPP_

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "tsv/autodiff.hpp"

namespace tsv::ad {

/// Thrown when a finite-difference probe straddles a kink (e.g. relu at 0).
/// Resample the inputs and try again.
class NonDifferentiablePoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using OpInstance = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckOptions {
  double perturbation = 1e-6;
  /// Coordinates probed per input; <= 0 probes every entry.
  Index max_coords_per_input = 0;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  Index coords_checked = 0;
};

/// Compares tape gradients of every input with requires_grad against central
/// differences. Non-scalar outputs are reduced by a fixed random projection.
/// Relative error is |tape - fd| / max(|tape|, |fd|, 1e-8).
GradCheckReport grad_check(const OpInstance& op, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace tsv::ad

#endif  // TSV_GRAD_CHECK_HPP_
