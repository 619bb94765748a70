// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "segattn/rng.hpp"

namespace segattn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double delta = 1e-3;
  /// Coordinates compared; 0 checks every coordinate.
  std::size_t max_coordinates = 0;
  /// Denominator floor for the relative error so that gradients that are
  /// zero analytically and numerically compare as equal.
  double floor = 1e-6;
  std::uint64_t seed = 7;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Central differences of `loss` against `analytic`, perturbing `params` in
/// place (each coordinate is restored afterwards). When max_coordinates is
/// smaller than the parameter count a seeded subset is checked.
GradCheckResult grad_check(const std::function<double()>& loss, std::span<double> params,
                           std::span<const double> analytic, const GradCheckOptions& options = {});

}  // namespace segattn
