// SPDX-License-Identifier: Apache-2.0
#include "segattn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "segattn/errors.hpp"

namespace segattn {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckResult grad_check(const std::function<double()>& loss, std::span<double> params,
                           std::span<const double> analytic, const GradCheckOptions& options) {
  if (params.size() != analytic.size()) {
    throw DimensionError("grad_check: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(analytic.size()) + " analytic gradients");
  }
  std::vector<std::size_t> coords(params.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coordinates != 0 && options.max_coordinates < coords.size()) {
    Rng rng(options.seed);
    rng.shuffle(std::span<std::size_t>(coords));
    coords.resize(options.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }
  GradCheckResult result;
  for (std::size_t i : coords) {
    const double saved = params[i];
    params[i] = saved + options.delta;
    const double up = loss();
    params[i] = saved - options.delta;
    const double down = loss();
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * options.delta);
    const double err = relative_error(analytic[i], numeric, options.floor);
    ++result.checked;
    if (err > result.max_relative_error || result.checked == 1) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.analytic_at_worst = analytic[i];
      result.numeric_at_worst = numeric;
    }
  }
  return result;
}

}  // namespace segattn
