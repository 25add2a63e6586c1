// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "rcf/parameter.hpp"

namespace rcf {

struct GradCheckOptions {
  double eps = 1e-6;
  double tol = 1e-4;
  /// Coordinates checked per tensor; 0 checks every coordinate. Larger
  /// tensors are sampled without replacement, deterministically from seed.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Combine the central differences at eps and eps/2 as (4·D(eps/2) − D(eps)) / 3,
  /// cancelling the eps² truncation term so that a larger eps can be used.
  bool extrapolate = false;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose perturbation flipped a relu or max-pool branch.
  std::size_t skipped_kinks = 0;
  bool passed = false;
};

/**
 * Compares tape gradients of a scalar program against central differences
 * (f(θ+eps) − f(θ−eps)) / (2·eps), per coordinate.
 *
 * Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator. A
 * coordinate is skipped when the branch fingerprint (relu signs, max-pool
 * argmax) at θ±eps differs from the one at θ, since the function is not
 * differentiable across that step. All parameters must be f64.
 *
 * Round-off in a loss of order 1 is a few 1e-16, so the plain difference
 * resolves a gradient only to ~1e-16 / eps absolute; extrapolation keeps
 * that floor low for coordinates whose true gradient is near zero.
 */
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           const ParamList& params,
                           const GradCheckOptions& options = {});

}  // namespace rcf
