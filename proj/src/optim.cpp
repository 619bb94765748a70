// SPDX-License-Identifier: Apache-2.0
#include "segattn/optim.hpp"

#include <cmath>

#include "segattn/errors.hpp"

namespace segattn {

template <typename T>
void adadelta_step(BasicTensor<T>& param, std::span<const T> grad, AdaDeltaState<T>& state, std::string_view name) {
  if (grad.size() != param.size() || state.mean_sq_grad.size() != param.size() ||
      state.mean_sq_update.size() != param.size()) {
    throw DimensionError("adadelta_step: " + std::string(name) + " " + param.shape_str() + " given gradient of " +
                         std::to_string(grad.size()) + " values");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw TrainingError("non-finite gradient in " + std::string(name) + " at element " + std::to_string(i));
    }
  }
  const T rho = static_cast<T>(state.rho);
  const T eps = static_cast<T>(state.epsilon);
  auto values = param.values();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const T g = grad[i];
    T& eg = state.mean_sq_grad[i];
    T& ed = state.mean_sq_update[i];
    eg = rho * eg + (T(1) - rho) * g * g;
    const T delta = -std::sqrt(ed + eps) / std::sqrt(eg + eps) * g;
    ed = rho * ed + (T(1) - rho) * delta * delta;
    values[i] += delta;
  }
}

template void adadelta_step<float>(BasicTensor<float>&, std::span<const float>, AdaDeltaState<float>&,
                                   std::string_view);
template void adadelta_step<double>(BasicTensor<double>&, std::span<const double>, AdaDeltaState<double>&,
                                    std::string_view);

}  // namespace segattn
