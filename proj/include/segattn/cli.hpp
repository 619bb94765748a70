// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the segattn executable. They live in a
// library so tests can drive them without spawning processes.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "segattn/corpus.hpp"
#include "segattn/training.hpp"

namespace segattn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitThreshold = 1;
inline constexpr int kExitUsage = 2;

/// Everything a command can be configured with. The JSON form is what
/// --config reads and what every command echoes to <out>/config.json, so an
/// echoed file reproduces the run.
struct CliSettings {
  std::string command;
  TrainConfig train;
  bool k_explicit = false;  // K came from a flag or a config file

  std::vector<std::string> corpus;
  std::optional<CorpusFormat> format;
  std::string out;
  std::optional<SynthSpec> synth;
  double min_avg_segment = 0.0;

  std::string checkpoint;
  std::string input;
  std::string output;
  bool oracle = false;
  bool random_baseline = false;
  std::size_t trials = 1;
  std::optional<double> max_windiff;

  std::vector<std::size_t> k_values;
  std::size_t parallel = 1;

  /// Test hook for gradcheck.
  std::string corrupt;
};

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CliSettings& settings);
/// Applies a config file object: TrainConfig keys plus the command keys
/// (corpus, format, out, synth, kValues, parallel, ...). Unknown keys raise
/// ConfigError.
void apply_json(CliSettings& settings, const nlohmann::json& j);

/// Documents named by settings.corpus plus, when settings.synth is set, a
/// generated corpus; then the optional mean-segment-length filter.
std::vector<Document> load_documents(const CliSettings& settings);

/// Writes <out>/config.json when an output directory is set.
void echo_config(const CliSettings& settings);

int cmd_train(const CliSettings& settings, std::ostream& out);
int cmd_eval(const CliSettings& settings, std::ostream& out);
int cmd_segment(const CliSettings& settings, std::ostream& out);
int cmd_gradcheck(const CliSettings& settings, std::ostream& out);
int cmd_synth(const CliSettings& settings, std::ostream& out);
int cmd_sweep_k(const CliSettings& settings, std::ostream& out);

struct SweepRow {
  std::size_t k = 0;
  double dev_windiff = 0.0;
  double dev_pk = 0.0;
  std::size_t best_epoch = 0;
  std::string error;  // empty when the point trained
};

/// One model per K on the same corpus and seed, `parallel` points at a time.
/// A failing K is recorded in its row and does not stop the others.
std::vector<SweepRow> sweep_k(const std::vector<Document>& docs, const TrainConfig& base,
                              const std::vector<std::size_t>& k_values, std::size_t parallel);
void write_sweep_tsv(std::ostream& out, const std::vector<SweepRow>& rows, std::uint64_t seed);

/// Parses argv, dispatches, and maps errors to exit codes: 0 success,
/// 1 threshold failure, 2 usage or data error (with a one-line cause on err).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace segattn
