// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segattn/tensor.hpp"

namespace segattn {

/// Running averages kept per parameter element.
template <typename T>
struct AdaDeltaState {
  std::vector<T> mean_sq_grad;
  std::vector<T> mean_sq_update;
  double rho = 0.95;
  double epsilon = 1e-6;

  AdaDeltaState() = default;
  AdaDeltaState(std::size_t n, double rho_, double epsilon_)
      : mean_sq_grad(n, T(0)), mean_sq_update(n, T(0)), rho(rho_), epsilon(epsilon_) {}
};

/// One AdaDelta update of `param` in place. Throws TrainingError naming
/// `name` when the gradient holds a non-finite value; the parameter and
/// state are left untouched in that case.
template <typename T>
void adadelta_step(BasicTensor<T>& param, std::span<const T> grad, AdaDeltaState<T>& state,
                   std::string_view name = "parameter");

}  // namespace segattn
