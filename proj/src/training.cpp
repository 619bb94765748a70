// SPDX-License-Identifier: Apache-2.0
#include "segattn/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "segattn/errors.hpp"

namespace segattn {

namespace {

using json = nlohmann::json;

template <typename Fn>
void with_key(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

bool parse_switch(const json& v, const std::string& key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "on" || s == "true") return true;
    if (s == "off" || s == "false") return false;
  }
  throw ConfigError("config key '" + key + "' must be a boolean or \"on\"/\"off\"");
}

std::size_t parse_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batchSize must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must be in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(dev_fraction >= 0.0 && dev_fraction < 1.0)) throw ConfigError("devFraction must be in [0, 1)");
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "K",       "L",         "d",          "filterSizes", "filtersPerSize",        "hidden",
      "denseHidden", "encoder", "attention", "tieContexts", "trainEmbeddings",     "recurrentInputDropout",
      "recurrentStateDropout", "denseDropout", "epochs", "batchSize", "rho", "epsilon",
      "seed",    "devFraction", "vectors"};
  return keys;
}

json to_json(const TrainConfig& cfg) {
  const auto& m = cfg.model;
  json j;
  j["K"] = m.context_size;
  j["L"] = m.sentence_length;
  j["d"] = m.embedding_width;
  j["filterSizes"] = m.filter_sizes;
  j["filtersPerSize"] = m.filters_per_size;
  j["hidden"] = m.hidden;
  j["denseHidden"] = m.dense_hidden;
  j["encoder"] = std::string(to_string(m.encoder));
  j["attention"] = m.attention ? "on" : "off";
  j["tieContexts"] = m.tie_contexts;
  j["trainEmbeddings"] = m.train_embeddings;
  j["recurrentInputDropout"] = m.recurrent_input_dropout;
  j["recurrentStateDropout"] = m.recurrent_state_dropout;
  j["denseDropout"] = m.dense_dropout;
  j["epochs"] = cfg.epochs;
  j["batchSize"] = cfg.batch_size;
  j["rho"] = cfg.rho;
  j["epsilon"] = cfg.epsilon;
  j["seed"] = cfg.seed;
  j["devFraction"] = cfg.dev_fraction;
  j["vectors"] = cfg.vectors;
  return j;
}

void apply_json(TrainConfig& cfg, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  auto& m = cfg.model;
  for (const auto& [key, v] : j.items()) {
    with_key(key, [&, &key = key, &v = v] {
      if (key == "K") m.context_size = parse_count(v, key);
      else if (key == "L") m.sentence_length = parse_count(v, key);
      else if (key == "d") m.embedding_width = parse_count(v, key);
      else if (key == "filterSizes") {
        if (!v.is_array()) throw ConfigError("config key 'filterSizes' must be an array");
        m.filter_sizes.clear();
        for (const auto& e : v) m.filter_sizes.push_back(parse_count(e, key));
      } else if (key == "filtersPerSize") m.filters_per_size = parse_count(v, key);
      else if (key == "hidden") m.hidden = parse_count(v, key);
      else if (key == "denseHidden") m.dense_hidden = parse_count(v, key);
      else if (key == "encoder") m.encoder = parse_encoder(v.get<std::string>());
      else if (key == "attention") m.attention = parse_switch(v, key);
      else if (key == "tieContexts") m.tie_contexts = parse_switch(v, key);
      else if (key == "trainEmbeddings") m.train_embeddings = parse_switch(v, key);
      else if (key == "recurrentInputDropout") m.recurrent_input_dropout = v.get<double>();
      else if (key == "recurrentStateDropout") m.recurrent_state_dropout = v.get<double>();
      else if (key == "denseDropout") m.dense_dropout = v.get<double>();
      else if (key == "epochs") cfg.epochs = parse_count(v, key);
      else if (key == "batchSize") cfg.batch_size = parse_count(v, key);
      else if (key == "rho") cfg.rho = v.get<double>();
      else if (key == "epsilon") cfg.epsilon = v.get<double>();
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "devFraction") cfg.dev_fraction = v.get<double>();
      else if (key == "vectors") cfg.vectors = v.get<std::string>();
      else throw ConfigError("unknown config key '" + key + "'");
    });
  }
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  apply_json(cfg, j);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

BceResult weighted_bce(double p_boundary, int target, double class_weight) {
  const double o = std::clamp(p_boundary, kLossClamp, 1.0 - kLossClamp);
  const double t = target ? 1.0 : 0.0;
  BceResult r;
  r.loss = -(t * std::log(o) + class_weight * (1.0 - t) * std::log(1.0 - o));
  // o = softmax(z)[1]; dL/dz1 = -t (1 - o) + w (1 - t) o and dL/dz0 = -dL/dz1.
  const double dz1 = -t * (1.0 - p_boundary) + class_weight * (1.0 - t) * p_boundary;
  r.d_logits = {-dz1, dz1};
  return r;
}

double weighted_bce_mean(std::span<const std::array<double, 2>> probs, std::span<const int> targets,
                         double class_weight) {
  if (probs.size() != targets.size() || probs.empty()) {
    throw DimensionError("weighted_bce_mean: " + std::to_string(probs.size()) + " predictions for " +
                         std::to_string(targets.size()) + " targets");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) total += weighted_bce(probs[i][1], targets[i], class_weight).loss;
  return total / static_cast<double>(probs.size());
}

// ---------------------------------------------------------------------------

AdaDelta::AdaDelta(ModelParams<float>& params, double rho, double epsilon) {
  for (auto& p : params.parameters()) states_.emplace_back(p.tensor->size(), rho, epsilon);
}

void AdaDelta::step(ModelParams<float>& params) {
  auto list = params.parameters();
  if (list.size() != states_.size()) throw InternalError("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < list.size(); ++i) {
    adadelta_step<float>(*list[i].tensor, list[i].tensor->grad(), states_[i], list[i].name);
  }
}

namespace {

std::string worst_parameter(ModelParams<float>& params) {
  std::string name = "(none)";
  double worst = -1.0;
  for (auto& p : params.parameters()) {
    for (float g : p.tensor->grad()) {
      const double mag = std::isfinite(g) ? std::abs(g) : INFINITY;
      if (mag > worst) {
        worst = mag;
        name = p.name;
      }
    }
  }
  return name;
}

}  // namespace

double train_epoch(ModelParams<float>& params, AdaDelta& optimizer, std::span<const ContextSample> samples,
                   double class_weight, std::size_t batch_size, Rng& rng) {
  if (samples.empty()) throw DataError("no training samples; mean loss is undefined");
  params.enable_grads();
  const auto plan = batches(samples.size(), batch_size, true, rng);
  double total = 0.0;
  for (std::size_t b = 0; b < plan.size(); ++b) {
    const auto& batch = plan[b];
    params.zero_grads();
    const float scale = 1.0f / static_cast<float>(batch.size());
    double batch_loss = 0.0;
    for (std::size_t idx : batch) {
      const auto& sample = samples[idx];
      ForwardTrace<float> tr = forward(sample, params, Mode::kTrain, rng);
      const BceResult loss = weighted_bce(tr.probs[1], sample.label, class_weight);
      const std::array<float, 2> d = {static_cast<float>(loss.d_logits[0]) * scale,
                                      static_cast<float>(loss.d_logits[1]) * scale};
      backward<float>(tr, params, d);
      batch_loss += loss.loss;
    }
    if (!std::isfinite(batch_loss)) {
      throw TrainingError("non-finite loss in batch " + std::to_string(b) + "; largest gradient in " +
                          worst_parameter(params));
    }
    optimizer.step(params);
    total += batch_loss;
  }
  return total / static_cast<double>(samples.size());
}

void write_epoch_tsv(std::ostream& out, std::span<const LossReport> reports) {
  out << "epoch\tmeanTrainLoss\tdevWinDiff\tdevPk\n";
  char buf[128];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\n", r.epoch, r.mean_train_loss, r.dev_windiff, r.dev_pk);
    out << buf;
  }
}

// ---------------------------------------------------------------------------

Split split_documents(std::span<const Document> corpus, double dev_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed ^ 0x5eed5011ULL);
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_dev = static_cast<std::size_t>(std::llround(dev_fraction * static_cast<double>(corpus.size())));
  std::vector<std::size_t> dev(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_dev, order.size())));
  std::sort(dev.begin(), dev.end());
  Split s;
  std::size_t next = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (next < dev.size() && dev[next] == i) {
      s.dev.push_back(corpus[i]);
      ++next;
    } else {
      s.train.push_back(corpus[i]);
    }
  }
  return s;
}

CorpusScore evaluate_model(const ModelParams<float>& params, const Vocabulary& vocab, std::span<const Document> docs) {
  std::vector<EncodedDocument> encoded;
  std::vector<Reference> refs;
  encoded.reserve(docs.size());
  for (const auto& d : docs) {
    encoded.push_back(encode_document(d, vocab, params.config.sentence_length));
    refs.push_back({d.id, Segmentation(d.labels)});
  }
  return evaluate_corpus(refs, [&](std::size_t i) { return predict_document(encoded[i], params); });
}

namespace {

std::unordered_set<std::string> vector_keep_set(std::span<const Document> docs) {
  std::unordered_set<std::string> keep;
  for (const auto& d : docs) {
    for (const auto& s : d.sentences) {
      for (const auto& t : tokenize(s)) {
        for (const auto& l : lemma_candidates(t)) keep.insert(l);
        keep.insert(t);
      }
    }
  }
  return keep;
}

}  // namespace

FitResult fit(std::span<const Document> corpus, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (corpus.size() < 2) throw DataError("training needs at least 2 documents, got " + std::to_string(corpus.size()));
  Split split = split_documents(corpus, cfg.dev_fraction, cfg.seed);
  if (split.dev.empty()) throw ConfigError("development split is empty; raise devFraction");
  if (split.train.empty()) throw ConfigError("training split is empty; lower devFraction");

  Rng rng(cfg.seed);
  Rng embed_rng = rng.fork();
  Rng init_rng = rng.fork();
  Rng train_rng = rng.fork();

  std::optional<PretrainedVectors> vectors;
  if (!cfg.vectors.empty()) {
    const auto keep = vector_keep_set(split.train);
    vectors = read_vectors(cfg.vectors, cfg.model.embedding_width, &keep);
  }
  VocabBuild built = build_vocab(split.train, cfg.model.embedding_width, vectors ? &*vectors : nullptr, embed_rng);

  FitResult result;
  result.vocab = built.vocab;
  for (const auto& d : split.train) result.train_ids.push_back(d.id);
  for (const auto& d : split.dev) result.dev_ids.push_back(d.id);

  ModelParams<float> params = init_model<float>(cfg.model, std::move(built.embedding.table), init_rng);
  params.enable_grads();
  AdaDelta optimizer(params, cfg.rho, cfg.epsilon);

  std::vector<EncodedDocument> train_docs;
  for (const auto& d : split.train) train_docs.push_back(encode_document(d, result.vocab, cfg.model.sentence_length));
  const auto samples = make_samples(train_docs, static_cast<int>(cfg.model.context_size));
  const double weight = class_weight(samples);

  double best = INFINITY;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    LossReport report;
    report.epoch = epoch;
    report.mean_train_loss = train_epoch(params, optimizer, samples, weight, cfg.batch_size, train_rng);
    const CorpusScore dev = evaluate_model(params, result.vocab, split.dev);
    report.dev_windiff = dev.mean_windiff;
    report.dev_pk = dev.mean_pk;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (report.dev_windiff < best) {
      best = report.dev_windiff;
      result.best = params;
      result.best_epoch = epoch;
    }
    result.reports.push_back(report);
    if (on_epoch) on_epoch(report);
  }
  for (auto& p : result.best.parameters()) p.tensor->drop_grad();
  return result;
}

// ---------------------------------------------------------------------------

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  json header = to_json(ckpt.config);
  header["vocabulary"] = ckpt.vocab.tokens();
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  ModelParams<float> params = ckpt.params;
  char buf[32];
  for (const auto& [name, tensor] : params.tensors()) {
    out << name << '\n';
    const auto& shape = tensor->shape();
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? " " : "") << shape[i];
    out << '\n';
    const std::size_t cols = tensor->cols();
    const auto values = tensor->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      auto res = std::to_chars(buf, buf + sizeof buf, values[i]);
      out.write(buf, res.ptr - buf);
      out << ((i + 1) % cols == 0 ? '\n' : ' ');
    }
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  write_checkpoint(out, ckpt);
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(std::istream& in, const ModelConfig* expected) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw LoadError("not a checkpoint or unsupported version: expected '" + std::string(kCheckpointMagic) +
                    "', found '" + line + "'");
  }
  if (!std::getline(in, line)) throw LoadError("truncated checkpoint: missing config line");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed checkpoint config: ") + e.what());
  }
  if (!header.is_object() || !header.contains("vocabulary")) throw LoadError("checkpoint config lacks a vocabulary");
  std::vector<std::string> tokens = header["vocabulary"].get<std::vector<std::string>>();
  header.erase("vocabulary");

  Checkpoint ckpt;
  try {
    ckpt.config = train_config_from_json(header);
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint config: ") + e.what());
  }
  ckpt.vocab = Vocabulary::from_tokens(std::move(tokens));

  const ModelConfig& shape_cfg = expected ? *expected : ckpt.config.model;
  Rng scratch(0);
  ckpt.params = init_model<float>(shape_cfg, Tensor({ckpt.vocab.size(), shape_cfg.embedding_width}), scratch);
  for (auto& [name, tensor] : ckpt.params.tensors()) {
    if (!std::getline(in, line)) throw LoadError("truncated checkpoint: missing block '" + name + "'");
    if (line != name) throw LoadError("expected block '" + name + "', found '" + line + "'");
    if (!std::getline(in, line)) throw LoadError("truncated checkpoint: block '" + name + "' has no shape");
    Shape shape;
    {
      std::istringstream ss(line);
      std::size_t extent;
      while (ss >> extent) shape.push_back(extent);
    }
    if (shape != tensor->shape()) {
      throw LoadError("block '" + name + "' has shape " + shape_string(shape) + ", expected " + tensor->shape_str());
    }
    auto values = tensor->values();
    std::size_t filled = 0;
    while (filled < values.size()) {
      if (!std::getline(in, line)) throw LoadError("truncated checkpoint in block '" + name + "'");
      const char* p = line.data();
      const char* end = line.data() + line.size();
      while (p < end && filled < values.size()) {
        while (p < end && *p == ' ') ++p;
        if (p == end) break;
        auto res = std::from_chars(p, end, values[filled]);
        if (res.ec != std::errc{}) throw LoadError("malformed value in block '" + name + "'");
        ++filled;
        p = res.ptr;
      }
    }
  }
  while (std::getline(in, line)) {
    if (!line.empty()) throw LoadError("unexpected trailing block '" + line + "'");
  }
  if (!expected) ckpt.params.config = ckpt.config.model;
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  return read_checkpoint(in, expected);
}

}  // namespace segattn
