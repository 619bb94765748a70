// SPDX-License-Identifier: Apache-2.0
#include "segattn/cli.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "segattn/errors.hpp"
#include "segattn/gradcheck_suite.hpp"
#include "segattn/metrics.hpp"

namespace segattn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

template <typename Fn>
void with_key(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

fs::path require_out(const CliSettings& s) {
  if (s.out.empty()) throw ConfigError("--out is required for '" + s.command + "'");
  fs::create_directories(s.out);
  return fs::path(s.out);
}

std::ofstream open_for_write(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------
// settings

json to_json(const SynthSpec& s) {
  return json{{"nDocs", s.n_docs},
              {"minSegments", s.min_segments},
              {"maxSegments", s.max_segments},
              {"segmentLengthMean", s.segment_length_mean},
              {"segmentLengthStd", s.segment_length_std},
              {"sentenceLength", s.sentence_length},
              {"nTopics", s.n_topics},
              {"wordsPerTopic", s.words_per_topic},
              {"seed", s.seed},
              {"bleed", s.bleed}};
}

SynthSpec synth_spec_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("'synth' must be a JSON object");
  SynthSpec s;
  for (const auto& [key, v] : j.items()) {
    with_key(key, [&, &key = key, &v = v] {
      if (key == "nDocs") s.n_docs = v.get<std::size_t>();
      else if (key == "minSegments") s.min_segments = v.get<std::size_t>();
      else if (key == "maxSegments") s.max_segments = v.get<std::size_t>();
      else if (key == "segmentLengthMean") s.segment_length_mean = v.get<double>();
      else if (key == "segmentLengthStd") s.segment_length_std = v.get<double>();
      else if (key == "sentenceLength") s.sentence_length = v.get<std::size_t>();
      else if (key == "nTopics") s.n_topics = v.get<std::size_t>();
      else if (key == "wordsPerTopic") s.words_per_topic = v.get<std::size_t>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "bleed") s.bleed = v.get<double>();
      else throw ConfigError("unknown synth key '" + key + "'");
    });
  }
  s.validate();
  return s;
}

json to_json(const CliSettings& s) {
  json j = to_json(s.train);
  j["command"] = s.command;
  j["corpus"] = s.corpus;
  if (s.format) j["format"] = std::string(to_string(*s.format));
  j["out"] = s.out;
  if (s.synth) j["synth"] = to_json(*s.synth);
  j["minAvgSegmentLength"] = s.min_avg_segment;
  j["checkpoint"] = s.checkpoint;
  j["input"] = s.input;
  j["output"] = s.output;
  j["oracle"] = s.oracle;
  j["randomBaseline"] = s.random_baseline;
  j["trials"] = s.trials;
  if (s.max_windiff) j["maxWinDiff"] = *s.max_windiff;
  j["kValues"] = s.k_values;
  j["parallel"] = s.parallel;
  return j;
}

void apply_json(CliSettings& s, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  json train = json::object();
  for (const auto& [key, v] : j.items()) {
    with_key(key, [&, &key = key, &v = v] {
      if (key == "command") {
        const auto name = v.get<std::string>();
        if (!s.command.empty() && name != s.command) {
          throw ConfigError("config was written for '" + name + "', not '" + s.command + "'");
        }
      } else if (key == "corpus") {
        s.corpus = v.is_string() ? std::vector<std::string>{v.get<std::string>()} : v.get<std::vector<std::string>>();
      } else if (key == "format") {
        s.format = parse_format(v.get<std::string>());
      } else if (key == "out") {
        s.out = v.get<std::string>();
      } else if (key == "synth") {
        if (v.is_null()) s.synth.reset();
        else s.synth = synth_spec_from_json(v);
      } else if (key == "minAvgSegmentLength") {
        s.min_avg_segment = v.get<double>();
      } else if (key == "checkpoint") {
        s.checkpoint = v.get<std::string>();
      } else if (key == "input") {
        s.input = v.get<std::string>();
      } else if (key == "output") {
        s.output = v.get<std::string>();
      } else if (key == "oracle") {
        s.oracle = v.get<bool>();
      } else if (key == "randomBaseline") {
        s.random_baseline = v.get<bool>();
      } else if (key == "trials") {
        s.trials = v.get<std::size_t>();
      } else if (key == "maxWinDiff") {
        s.max_windiff = v.get<double>();
      } else if (key == "kValues") {
        s.k_values = v.get<std::vector<std::size_t>>();
      } else if (key == "parallel") {
        s.parallel = v.get<std::size_t>();
      } else {
        if (key == "K") s.k_explicit = true;
        train[key] = v;
      }
    });
  }
  apply_json(s.train, train);
}

std::vector<Document> load_documents(const CliSettings& s) {
  std::vector<Document> docs;
  for (const auto& path : s.corpus) {
    auto part = read_corpus(path, s.format);
    docs.insert(docs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (s.synth) {
    auto part = synth_corpus(*s.synth);
    docs.insert(docs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (docs.empty()) throw DataError("no documents: give --corpus or a synth spec");
  if (s.min_avg_segment > 0.0) docs = filter_min_average_segment(std::move(docs), s.min_avg_segment);
  return docs;
}

void echo_config(const CliSettings& s) {
  if (s.out.empty()) return;
  fs::create_directories(s.out);
  auto f = open_for_write(fs::path(s.out) / "config.json");
  f << to_json(s).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// commands

int cmd_train(const CliSettings& s, std::ostream& out) {
  s.train.validate();
  const fs::path dir = require_out(s);
  const auto docs = load_documents(s);
  echo_config(s);
  out << "epoch\tmeanTrainLoss\tdevWinDiff\tdevPk\n";
  const FitResult result = fit(docs, s.train, [&](const LossReport& r) {
    out << r.epoch << '\t' << fixed6(r.mean_train_loss) << '\t' << fixed6(r.dev_windiff) << '\t' << fixed6(r.dev_pk)
        << '\n'
        << std::flush;
  });
  {
    auto f = open_for_write(dir / "epochs.tsv");
    write_epoch_tsv(f, result.reports);
  }
  save_checkpoint(Checkpoint{s.train, result.vocab, result.best}, dir / "model.ckpt");
  const auto& best = result.reports[result.best_epoch - 1];
  out << "best epoch " << result.best_epoch << ": devWinDiff " << fixed6(best.dev_windiff) << " devPk "
      << fixed6(best.dev_pk) << '\n';
  return kExitOk;
}

int cmd_eval(const CliSettings& s, std::ostream& out) {
  if (s.oracle && s.random_baseline) throw ConfigError("--oracle and --random-baseline are exclusive");
  if (s.trials == 0) throw ConfigError("trials must be positive");
  const auto docs = load_documents(s);
  std::vector<Reference> refs;
  for (const auto& d : docs) refs.push_back({d.id, Segmentation(d.labels)});

  CorpusScore score;
  if (s.oracle) {
    score = evaluate_corpus(refs, [&](std::size_t i) { return refs[i].boundaries; });
  } else if (s.random_baseline) {
    Rng rng(s.train.seed);
    for (std::size_t t = 0; t < s.trials; ++t) {
      const CorpusScore trial = evaluate_corpus(refs, [&](std::size_t i) {
        const auto& ref = refs[i].boundaries;
        return random_segmentation(ref.size(), matched_boundary_rate(ref), rng);
      });
      if (t == 0) {
        score = trial;
        continue;
      }
      for (std::size_t i = 0; i < score.documents.size(); ++i) {
        score.documents[i].pk += trial.documents[i].pk;
        score.documents[i].windiff += trial.documents[i].windiff;
      }
      score.mean_pk += trial.mean_pk;
      score.mean_windiff += trial.mean_windiff;
    }
    const double n = static_cast<double>(s.trials);
    for (auto& d : score.documents) {
      d.pk /= n;
      d.windiff /= n;
    }
    score.mean_pk /= n;
    score.mean_windiff /= n;
  } else {
    if (s.checkpoint.empty()) throw ConfigError("eval needs --checkpoint, --oracle or --random-baseline");
    const Checkpoint ckpt = load_checkpoint(s.checkpoint);
    if (s.k_explicit && s.train.model.context_size != ckpt.config.model.context_size) {
      throw ConfigError("checkpoint was trained with K=" + std::to_string(ckpt.config.model.context_size) +
                        " but K=" + std::to_string(s.train.model.context_size) + " was requested");
    }
    std::vector<EncodedDocument> encoded;
    for (const auto& d : docs) encoded.push_back(encode_document(d, ckpt.vocab, ckpt.config.model.sentence_length));
    score = evaluate_corpus(refs, [&](std::size_t i) { return predict_document(encoded[i], ckpt.params); });
  }
  if (score.documents.empty()) throw DataError("no document long enough to score");

  write_report(out, score);
  if (!s.out.empty()) {
    echo_config(s);
    auto f = open_for_write(fs::path(s.out) / "report.tsv");
    write_report(f, score);
  }
  if (s.max_windiff && score.mean_windiff > *s.max_windiff) return kExitThreshold;
  return kExitOk;
}

int cmd_segment(const CliSettings& s, std::ostream& out) {
  if (s.checkpoint.empty()) throw ConfigError("segment needs --checkpoint");
  if (s.input.empty()) throw ConfigError("segment needs --input");
  const Checkpoint ckpt = load_checkpoint(s.checkpoint);
  ReadOptions opts;
  opts.require_labels = false;
  const auto docs = read_corpus(s.input, s.format, opts);
  std::vector<Segmentation> predicted;
  for (const auto& d : docs) {
    predicted.push_back(predict_document(encode_document(d, ckpt.vocab, ckpt.config.model.sentence_length), ckpt.params));
  }
  echo_config(s);
  if (s.output.empty()) {
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (i) out << '\n';
      write_segments(out, docs[i], predicted[i]);
    }
  } else {
    write_segments(fs::path(s.output), docs, predicted);
  }
  return kExitOk;
}

int cmd_gradcheck(const CliSettings& s, std::ostream& out) {
  GradSuiteOptions opts;
  opts.corrupt = s.corrupt;
  const GradSuiteReport report = run_gradcheck_suite(opts);
  write_gradcheck_report(out, report);
  if (!s.out.empty()) {
    echo_config(s);
    auto f = open_for_write(fs::path(s.out) / "gradcheck.tsv");
    write_gradcheck_report(f, report);
  }
  return report.passed() ? kExitOk : kExitThreshold;
}

int cmd_synth(const CliSettings& s, std::ostream& out) {
  if (!s.synth) throw ConfigError("synth needs a spec");
  if (s.output.empty()) throw ConfigError("synth needs --output");
  const auto docs = synth_corpus(*s.synth);
  const fs::path path(s.output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (s.format.value_or(guess_format(path)) == CorpusFormat::kJsonl) {
    write_jsonl(path, docs);
  } else {
    std::vector<Segmentation> labels;
    for (const auto& d : docs) labels.emplace_back(d.labels);
    write_segments(path, docs, labels);
  }
  echo_config(s);
  std::size_t sentences = 0;
  for (const auto& d : docs) sentences += d.size();
  out << "wrote " << docs.size() << " documents, " << sentences << " sentences to " << path.string() << '\n';
  return kExitOk;
}

std::vector<SweepRow> sweep_k(const std::vector<Document>& docs, const TrainConfig& base,
                              const std::vector<std::size_t>& k_values, std::size_t parallel) {
  std::vector<SweepRow> rows(k_values.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < k_values.size(); i = next++) {
      SweepRow& row = rows[i];
      row.k = k_values[i];
      try {
        TrainConfig cfg = base;
        cfg.model.context_size = row.k;
        const FitResult r = fit(docs, cfg);
        const auto& best = r.reports[r.best_epoch - 1];
        row.dev_windiff = best.dev_windiff;
        row.dev_pk = best.dev_pk;
        row.best_epoch = r.best_epoch;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(parallel, k_values.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return rows;
}

void write_sweep_tsv(std::ostream& out, const std::vector<SweepRow>& rows, std::uint64_t seed) {
  out << "K\tdevWinDiff\tdevPk\tbestEpoch\tseed\tstatus\n";
  for (const auto& r : rows) {
    if (r.error.empty()) {
      out << r.k << '\t' << fixed6(r.dev_windiff) << '\t' << fixed6(r.dev_pk) << '\t' << r.best_epoch << '\t' << seed
          << "\tok\n";
    } else {
      std::string cause = r.error;
      for (auto& c : cause) {
        if (c == '\t' || c == '\n') c = ' ';
      }
      out << r.k << "\t-\t-\t-\t" << seed << "\tfailed: " << cause << '\n';
    }
  }
}

int cmd_sweep_k(const CliSettings& s, std::ostream& out) {
  if (s.k_values.empty()) throw ConfigError("sweep-k needs at least one K (--k-values)");
  if (s.parallel == 0) throw ConfigError("parallel must be positive");
  for (std::size_t k : s.k_values) {
    if (k == 0) throw ConfigError("K values must be positive");
  }
  s.train.validate();
  const auto docs = load_documents(s);
  echo_config(s);
  const auto rows = sweep_k(docs, s.train, s.k_values, s.parallel);
  write_sweep_tsv(out, rows, s.train.seed);
  if (!s.out.empty()) {
    auto f = open_for_write(fs::path(s.out) / "sweep.tsv");
    write_sweep_tsv(f, rows, s.train.seed);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// argument parsing

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> corpus;
  std::string format, out, encoder, attention, checkpoint, input, output, corrupt;
  std::uint64_t seed = 0;
  std::size_t k = 0, epochs = 0, parallel = 1, trials = 1, docs = 0;
  double max_windiff = 0.0, bleed = 0.0;
  bool oracle = false, random_baseline = false;
  std::vector<std::size_t> k_values;
};

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config file " + path + ": " + e.what());
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Supervised text segmentation with attention-based BiLSTM context encoders", "segattn"};
  app.require_subcommand(1);
  Flags f;
  std::map<std::string, CLI::Option*> opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file (TrainConfig keys plus command keys)");
    sub->add_option("--out", f.out, "Output directory");
    sub->add_option("--seed", f.seed, "Random seed");
  };
  auto add_corpus = [&](CLI::App* sub) {
    sub->add_option("--corpus", f.corpus, "Corpus file (repeatable)");
    sub->add_option("--format", f.format, "Corpus format")->check(CLI::IsMember({"jsonl", "markers"}));
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--k", f.k, "Context size K")->check(CLI::PositiveNumber);
    sub->add_option("--epochs", f.epochs, "Training epochs")->check(CLI::PositiveNumber);
    sub->add_option("--encoder", f.encoder, "Sentence encoder")->check(CLI::IsMember({"cnn", "meanbow"}));
    sub->add_option("--attention", f.attention, "Attention over context positions")
        ->check(CLI::IsMember({"on", "off"}));
  };

  auto* train = app.add_subcommand("train", "Train a model and write model.ckpt, epochs.tsv and config.json");
  add_common(train);
  add_corpus(train);
  add_model(train);

  auto* eval = app.add_subcommand("eval", "Score a checkpoint (or the oracle/random predictor) on a corpus");
  add_common(eval);
  add_corpus(eval);
  eval->add_option("--k", f.k, "Expected context size; must match the checkpoint")->check(CLI::PositiveNumber);
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint file");
  eval->add_flag("--oracle", f.oracle, "Predict the reference boundaries");
  eval->add_flag("--random-baseline", f.random_baseline, "Predict random boundaries at the reference rate");
  eval->add_option("--trials", f.trials, "Random-baseline trials to average")->check(CLI::PositiveNumber);
  eval->add_option("--max-windiff", f.max_windiff, "Exit with status 1 when mean WinDiff exceeds this");

  auto* segment = app.add_subcommand("segment", "Write predicted segments in marker-text format");
  add_common(segment);
  segment->add_option("--checkpoint", f.checkpoint, "Checkpoint file");
  segment->add_option("--input", f.input, "Input corpus (labels optional)");
  segment->add_option("--output", f.output, "Output file (stdout when absent)");
  segment->add_option("--format", f.format, "Input format")->check(CLI::IsMember({"jsonl", "markers"}));

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer and parameter group");
  add_common(gradcheck);
  gradcheck->add_option("--corrupt", f.corrupt, "Perturb the named check (testing aid)")->group("");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic disjoint-topic corpus");
  add_common(synth);
  synth->add_option("--output", f.output, "Output corpus file");
  synth->add_option("--format", f.format, "Output format")->check(CLI::IsMember({"jsonl", "markers"}));
  synth->add_option("--docs", f.docs, "Number of documents")->check(CLI::PositiveNumber);
  synth->add_option("--bleed", f.bleed, "Probability of a word from a random topic")->check(CLI::Range(0.0, 1.0));

  auto* sweep = app.add_subcommand("sweep-k", "Train one model per context size and tabulate dev scores");
  add_common(sweep);
  add_corpus(sweep);
  add_model(sweep);
  sweep->add_option("--k-values", f.k_values, "Context sizes to train")->delimiter(',');
  sweep->add_option("--parallel", f.parallel, "Points trained concurrently")->check(CLI::PositiveNumber);

  std::vector<const char*> args(argv, argv + argc);
  try {
    app.parse(argc, const_cast<char**>(args.data()));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    for (auto* sub : app.get_subcommands()) out << sub->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  auto given = [&](const char* name) {
    try {
      return sub->get_option(name)->count() > 0;
    } catch (const CLI::OptionNotFound&) {
      return false;
    }
  };

  try {
    CliSettings s;
    s.command = sub->get_name();
    if (s.command == "synth") s.synth = SynthSpec{};
    if (!f.config.empty()) apply_json(s, read_config_file(f.config));
    if (given("--out")) s.out = f.out;
    if (given("--corpus")) s.corpus = f.corpus;
    if (given("--format")) s.format = parse_format(f.format);
    if (given("--seed")) {
      if (s.command == "synth") s.synth->seed = f.seed;
      else s.train.seed = f.seed;
    }
    if (given("--k")) {
      s.train.model.context_size = f.k;
      s.k_explicit = true;
    }
    if (given("--epochs")) s.train.epochs = f.epochs;
    if (given("--encoder")) s.train.model.encoder = parse_encoder(f.encoder);
    if (given("--attention")) s.train.model.attention = f.attention == "on";
    if (given("--checkpoint")) s.checkpoint = f.checkpoint;
    if (given("--input")) s.input = f.input;
    if (given("--output")) s.output = f.output;
    if (given("--oracle")) s.oracle = true;
    if (given("--random-baseline")) s.random_baseline = true;
    if (given("--trials")) s.trials = f.trials;
    if (given("--max-windiff")) s.max_windiff = f.max_windiff;
    if (given("--k-values")) s.k_values = f.k_values;
    if (given("--parallel")) s.parallel = f.parallel;
    if (given("--docs")) s.synth->n_docs = f.docs;
    if (given("--bleed")) s.synth->bleed = f.bleed;
    if (given("--corrupt")) s.corrupt = f.corrupt;

    if (s.command == "train") return cmd_train(s, out);
    if (s.command == "eval") return cmd_eval(s, out);
    if (s.command == "segment") return cmd_segment(s, out);
    if (s.command == "gradcheck") return cmd_gradcheck(s, out);
    if (s.command == "synth") return cmd_synth(s, out);
    return cmd_sweep_k(s, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace segattn
