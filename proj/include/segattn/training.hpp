// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "segattn/model.hpp"
#include "segattn/optim.hpp"
#include "segattn/text.hpp"

namespace segattn {

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 30;
  std::size_t batch_size = 40;
  double rho = 0.95;
  double epsilon = 1e-6;
  std::uint64_t seed = 1;
  double dev_fraction = 0.2;
  std::string vectors;  // optional pretrained vector file

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Flat JSON object; keys are the camelCase field names ("K", "L", "d",
/// "filterSizes", "batchSize", ...). Unknown keys raise ConfigError.
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
/// Applies the keys present in `j` on top of `cfg`.
void apply_json(TrainConfig& cfg, const nlohmann::json& j);
/// Keys accepted by train_config_from_json.
const std::vector<std::string>& train_config_keys();

// ---------------------------------------------------------------------------

inline constexpr double kLossClamp = 1e-7;

struct BceResult {
  double loss = 0.0;
  std::array<double, 2> d_logits{};  // gradient w.r.t. the two softmax logits
};

/// -(t log o + w (1 - t) log(1 - o)) with o = P(class 1), clamped to
/// [1e-7, 1 - 1e-7] before the log.
BceResult weighted_bce(double p_boundary, int target, double class_weight);

/// Mean of weighted_bce over a batch of (probabilities, target) pairs.
double weighted_bce_mean(std::span<const std::array<double, 2>> probs, std::span<const int> targets,
                         double class_weight);

// ---------------------------------------------------------------------------

class AdaDelta {
 public:
  AdaDelta(ModelParams<float>& params, double rho, double epsilon);

  /// Applies one update from the gradients currently held by `params`.
  void step(ModelParams<float>& params);

  const std::vector<AdaDeltaState<float>>& states() const { return states_; }

 private:
  std::vector<AdaDeltaState<float>> states_;
};

/// One shuffled pass: forward, weighted loss, backward and an optimizer step
/// per batch. Returns the mean per-sample loss. Throws DataError on an empty
/// sample list and TrainingError on a non-finite loss.
double train_epoch(ModelParams<float>& params, AdaDelta& optimizer, std::span<const ContextSample> samples,
                   double class_weight, std::size_t batch_size, Rng& rng);

struct LossReport {
  std::size_t epoch = 0;
  double mean_train_loss = 0.0;
  double dev_windiff = 0.0;
  double dev_pk = 0.0;
  double seconds = 0.0;
};

/// "epoch meanTrainLoss devWinDiff devPk" header plus one row per epoch.
/// Wall-clock time is left out so reruns produce identical files.
void write_epoch_tsv(std::ostream& out, std::span<const LossReport> reports);

struct FitResult {
  ModelParams<float> best;
  Vocabulary vocab;
  std::vector<LossReport> reports;
  std::size_t best_epoch = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> dev_ids;
};

struct Split {
  std::vector<Document> train;
  std::vector<Document> dev;
};

/// Document-level split: a seeded shuffle, then round(devFraction * n)
/// documents for dev. Both parts keep corpus order.
Split split_documents(std::span<const Document> corpus, double dev_fraction, std::uint64_t seed);

/// Mean dev metrics of `params` over `docs`.
CorpusScore evaluate_model(const ModelParams<float>& params, const Vocabulary& vocab, std::span<const Document> docs);

using EpochCallback = std::function<void(const LossReport&)>;

/// Splits, trains cfg.epochs epochs and returns the parameters of the epoch
/// with the lowest dev WinDiff (the earliest on ties).
FitResult fit(std::span<const Document> corpus, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------

struct Checkpoint {
  TrainConfig config;
  Vocabulary vocab;
  ModelParams<float> params;
};

inline constexpr std::string_view kCheckpointMagic = "SEGATTN v1";

/// Line 1 the magic, line 2 the config as one JSON object (with the
/// vocabulary under "vocabulary"), then per tensor a name line, a shape line
/// and one line per row of shortest round-trip decimals.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);

/// Throws LoadError naming the offending block. With `expected`, every
/// tensor must also have the shape a model of that configuration would have.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);
Checkpoint read_checkpoint(std::istream& in, const ModelConfig* expected = nullptr);

}  // namespace segattn
