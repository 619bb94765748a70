// SPDX-License-Identifier: Apache-2.0
#include "segattn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "segattn/errors.hpp"
#include "segattn/log.hpp"

namespace segattn {

namespace {

using json = nlohmann::json;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string at_line(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

}  // namespace

CorpusFormat parse_format(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::kJsonl;
  if (name == "markers") return CorpusFormat::kMarkers;
  throw ConfigError("unknown corpus format '" + std::string(name) + "' (expected jsonl or markers)");
}

std::string_view to_string(CorpusFormat format) { return format == CorpusFormat::kJsonl ? "jsonl" : "markers"; }

CorpusFormat guess_format(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return ext == ".jsonl" || ext == ".json" ? CorpusFormat::kJsonl : CorpusFormat::kMarkers;
}

// ---------------------------------------------------------------------------

std::vector<Document> read_jsonl(std::istream& in, std::string_view source, const ReadOptions& opts) {
  std::vector<Document> docs;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(at_line(source, number) + ": malformed JSON: " + e.what());
    }
    Document doc;
    std::vector<int> boundaries;
    try {
      if (!j.is_object()) throw ParseError(at_line(source, number) + ": expected a JSON object");
      doc.id = j.at("id").get<std::string>();
      doc.sentences = j.at("sentences").get<std::vector<std::string>>();
      if (j.contains("boundaries")) {
        boundaries = j.at("boundaries").get<std::vector<int>>();
      } else if (opts.require_labels) {
        throw ParseError(at_line(source, number) + ": missing \"boundaries\"");
      } else {
        boundaries.assign(doc.sentences.size(), 0);
        if (!boundaries.empty()) boundaries[0] = 1;
      }
    } catch (const json::exception& e) {
      throw ParseError(at_line(source, number) + ": " + e.what());
    }
    if (doc.sentences.empty()) throw DataError("document '" + doc.id + "' has no sentences");
    if (boundaries.size() != doc.sentences.size()) {
      throw DataError("document '" + doc.id + "' has " + std::to_string(doc.sentences.size()) + " sentences but " +
                      std::to_string(boundaries.size()) + " boundaries");
    }
    for (int b : boundaries) {
      if (b != 0 && b != 1) throw DataError("document '" + doc.id + "' has a boundary value other than 0/1");
      doc.labels.push_back(static_cast<std::uint8_t>(b));
    }
    if (doc.labels[0] != 1) {
      log_warning("document '" + doc.id + "': boundaries[0] was 0, set to 1");
      doc.labels[0] = 1;
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Document> read_jsonl(const std::filesystem::path& path, const ReadOptions& opts) {
  auto in = open_input(path);
  return read_jsonl(in, path.string(), opts);
}

void write_jsonl(std::ostream& out, std::span<const Document> docs) {
  for (const auto& d : docs) {
    json j;
    j["id"] = d.id;
    j["sentences"] = d.sentences;
    std::vector<int> b(d.labels.begin(), d.labels.end());
    j["boundaries"] = b;
    out << j.dump() << '\n';
  }
}

void write_jsonl(const std::filesystem::path& path, std::span<const Document> docs) {
  auto out = open_output(path);
  write_jsonl(out, docs);
}

// ---------------------------------------------------------------------------

std::vector<Document> read_choi_markers(std::istream& in, std::string_view stem) {
  struct Pending {
    std::vector<std::string> sentences;
    std::vector<std::uint8_t> labels;
    bool boundary_next = true;
    std::size_t marker_line = 0;  // line of the latest separator, 0 after a sentence
  };
  std::vector<Pending> parsed;
  Pending cur;
  auto flush = [&] {
    if (!cur.sentences.empty()) parsed.push_back(std::move(cur));
    cur = Pending{};
  };

  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    strip_cr(line);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line == kSegmentMarker) {
      if (cur.marker_line != 0) {
        throw DataError(std::string(stem) + ":" + std::to_string(number) + ": empty segment (separator at line " +
                        std::to_string(cur.marker_line) + " is followed directly by another)");
      }
      cur.marker_line = number;
      cur.boundary_next = true;
      continue;
    }
    cur.sentences.push_back(line);
    cur.labels.push_back(cur.boundary_next ? 1 : 0);
    cur.boundary_next = false;
    cur.marker_line = 0;
  }
  flush();

  std::vector<Document> docs;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    Document d;
    d.id = parsed.size() == 1 ? std::string(stem) : std::string(stem) + "-" + std::to_string(i);
    d.sentences = std::move(parsed[i].sentences);
    d.labels = std::move(parsed[i].labels);
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<Document> read_choi_markers(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_choi_markers(in, path.stem().string());
}

void write_segments(std::ostream& out, const Document& doc, const Segmentation& predicted) {
  if (predicted.size() != doc.sentences.size()) {
    throw InternalError("document '" + doc.id + "' has " + std::to_string(doc.sentences.size()) +
                        " sentences but the prediction covers " + std::to_string(predicted.size()));
  }
  for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
    const auto& s = doc.sentences[i];
    if (s.empty() || s == kSegmentMarker || s.find_first_of("\r\n") != std::string::npos) {
      throw DataError("document '" + doc.id + "' sentence " + std::to_string(i) +
                      " cannot be written as one marker-text line");
    }
    if (i > 0 && predicted.boundaries[i]) out << kSegmentMarker << '\n';
    out << s << '\n';
  }
}

void write_segments(const std::filesystem::path& path, std::span<const Document> docs,
                    std::span<const Segmentation> predicted) {
  if (docs.size() != predicted.size()) {
    throw InternalError(std::to_string(docs.size()) + " documents but " + std::to_string(predicted.size()) +
                        " predictions");
  }
  auto out = open_output(path);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i) out << '\n';
    write_segments(out, docs[i], predicted[i]);
  }
}

std::vector<Document> read_corpus(const std::filesystem::path& path, std::optional<CorpusFormat> format,
                                  const ReadOptions& opts) {
  if (!std::filesystem::exists(path)) throw DataError("corpus file not found: " + path.string());
  const CorpusFormat f = format.value_or(guess_format(path));
  return f == CorpusFormat::kJsonl ? read_jsonl(path, opts) : read_choi_markers(path);
}

std::vector<Document> filter_min_average_segment(std::vector<Document> docs, double min_mean) {
  std::vector<Document> kept;
  for (auto& d : docs) {
    const Segmentation s(d.labels);
    const double mean = static_cast<double>(d.size()) / static_cast<double>(std::max<std::size_t>(1, s.segment_count()));
    if (mean < min_mean) {
      log_warning("dropping document '" + d.id + "': mean segment length " + std::to_string(mean) + " below " +
                  std::to_string(min_mean));
      continue;
    }
    kept.push_back(std::move(d));
  }
  return kept;
}

// ---------------------------------------------------------------------------

void SynthSpec::validate() const {
  if (n_docs == 0) throw ConfigError("synthetic corpus needs at least one document");
  if (min_segments == 0 || min_segments > max_segments) {
    throw ConfigError("segment count range must satisfy 1 <= min <= max");
  }
  if (!(segment_length_mean > 0.0) || !(segment_length_std >= 0.0)) {
    throw ConfigError("segment length mean must be positive and its deviation non-negative");
  }
  if (sentence_length == 0) throw ConfigError("sentences need at least one word");
  if (n_topics < 2) throw ConfigError("synthetic corpus needs at least 2 topics");
  if (words_per_topic == 0) throw ConfigError("topics need at least one word");
  if (!(bleed >= 0.0 && bleed <= 1.0)) throw ConfigError("bleed probability must be in [0, 1]");
}

std::vector<std::string> topic_words(std::size_t topic, std::size_t words_per_topic) {
  // Each word spells its global index in consonant-vowel syllables, so
  // distinct indices can never collide.
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  const std::size_t base = consonants.size() * vowels.size();
  std::vector<std::string> words;
  words.reserve(words_per_topic);
  for (std::size_t w = 0; w < words_per_topic; ++w) {
    std::size_t idx = topic * words_per_topic + w;
    std::string word;
    for (int syl = 0; syl < 3 || idx > 0; ++syl) {
      const std::size_t s = idx % base;
      idx /= base;
      word += consonants[s / vowels.size()];
      word += vowels[s % vowels.size()];
    }
    if (is_stop_word(word)) word += 'x';
    words.push_back(std::move(word));
  }
  return words;
}

std::vector<Document> synth_corpus(const SynthSpec& spec) {
  spec.validate();
  std::vector<std::vector<std::string>> topics;
  for (std::size_t t = 0; t < spec.n_topics; ++t) topics.push_back(topic_words(t, spec.words_per_topic));

  Rng rng(spec.seed);
  std::vector<Document> docs;
  docs.reserve(spec.n_docs);
  for (std::size_t d = 0; d < spec.n_docs; ++d) {
    Document doc;
    doc.id = "synth-" + std::to_string(d);
    const std::size_t n_segments = spec.min_segments + rng.below(spec.max_segments - spec.min_segments + 1);
    std::size_t topic = spec.n_topics;
    for (std::size_t seg = 0; seg < n_segments; ++seg) {
      if (topic == spec.n_topics) {
        topic = rng.below(spec.n_topics);
      } else {
        // Uniform over the other topics.
        const std::size_t next = rng.below(spec.n_topics - 1);
        topic = next >= topic ? next + 1 : next;
      }
      const double drawn = std::round(rng.normal(spec.segment_length_mean, spec.segment_length_std));
      const auto length = static_cast<std::size_t>(std::max(2.0, drawn));
      for (std::size_t s = 0; s < length; ++s) {
        std::string sentence;
        for (std::size_t w = 0; w < spec.sentence_length; ++w) {
          std::size_t source = topic;
          if (spec.bleed > 0.0 && rng.bernoulli(spec.bleed)) source = rng.below(spec.n_topics);
          const auto& words = topics[source];
          if (w) sentence += ' ';
          sentence += words[rng.below(words.size())];
        }
        sentence += '.';
        doc.sentences.push_back(std::move(sentence));
        doc.labels.push_back(s == 0 ? 1 : 0);
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace segattn
