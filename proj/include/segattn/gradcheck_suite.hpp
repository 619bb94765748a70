// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification of every layer's backward pass and of the
// full model at a small fixed configuration, computed in double precision.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "segattn/model.hpp"

namespace segattn {

struct GradSuiteOptions {
  double threshold = 5e-3;
  double delta = 1e-3;
  std::uint64_t seed = 11;
  /// Test hook: the named row's analytic gradient is perturbed before the
  /// comparison, simulating a broken backward pass.
  std::string corrupt;
};

struct GradSuiteRow {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

struct GradSuiteReport {
  std::vector<GradSuiteRow> rows;
  double threshold = 0.0;

  bool passed() const;
  /// Names of the failing rows.
  std::vector<std::string> failures() const;
};

/// d=8, L=5, K=2, filters {2,3} x 4, hidden 6, dense 8, trainable embeddings.
ModelConfig gradcheck_model_config();

/// Row names of the layer checks, in report order. Full-model rows follow,
/// one per parameter group, named "model:<parameter name>".
const std::vector<std::string>& gradcheck_layer_names();

GradSuiteReport run_gradcheck_suite(const GradSuiteOptions& options = {});

/// "check maxRelError coordinates status" TSV.
void write_gradcheck_report(std::ostream& out, const GradSuiteReport& report);

}  // namespace segattn
