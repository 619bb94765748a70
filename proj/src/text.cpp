// SPDX-License-Identifier: Apache-2.0
#include "segattn/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <iterator>
#include <fstream>
#include <sstream>

#include "segattn/errors.hpp"

namespace segattn {

namespace {

// English function words removed before lookup.
constexpr std::string_view kStopWords[] = {
    "a",       "about",   "above",  "after",   "again",   "against", "all",     "am",      "an",
    "and",     "any",     "are",    "as",      "at",      "be",      "because", "been",    "before",
    "being",   "below",   "between", "both",   "but",     "by",      "can",     "could",   "did",
    "do",      "does",    "doing",  "down",    "during",  "each",    "few",     "for",     "from",
    "further", "had",     "has",    "have",    "having",  "he",      "her",     "here",    "hers",
    "herself", "him",     "himself", "his",    "how",     "i",       "if",      "in",      "into",
    "is",      "it",      "its",    "itself",  "just",    "me",      "more",    "most",    "my",
    "myself",  "no",      "nor",    "not",     "now",     "of",      "off",     "on",      "once",
    "only",    "or",      "other",  "our",     "ours",    "ourselves", "out",   "over",    "own",
    "same",    "she",     "should", "so",      "some",    "such",    "than",    "that",    "the",
    "their",   "theirs",  "them",   "themselves", "then", "there",   "these",   "they",    "this",
    "those",   "through", "to",     "too",     "under",   "until",   "up",      "very",    "was",
    "we",      "were",    "what",   "when",    "where",   "which",   "while",   "who",     "whom",
    "why",     "will",    "with",   "would",   "you",     "your",    "yours",   "yourself", "yourselves",
    "also"};

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

bool is_stop_word(std::string_view token) {
  return std::find(std::begin(kStopWords), std::end(kStopWords), token) != std::end(kStopWords);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !is_stop_word(current)) out.push_back(current);
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::vector<std::string> lemma_candidates(std::string_view token) {
  std::vector<std::string> out;
  const std::string t(token);
  if (ends_with(t, "ies")) out.push_back(t.substr(0, t.size() - 3) + "y");
  if (ends_with(t, "ing") && t.size() > 4) out.push_back(t.substr(0, t.size() - 3));
  if (ends_with(t, "ed") && t.size() > 3) out.push_back(t.substr(0, t.size() - 2));
  if (ends_with(t, "es") && t.size() > 3) out.push_back(t.substr(0, t.size() - 2));
  if (ends_with(t, "s") && !ends_with(t, "ss")) out.push_back(t.substr(0, t.size() - 1));
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
    throw DataError("vocabulary must begin with " + std::string(kPadToken) + " and " + std::string(kUnkToken));
  }
  Vocabulary v;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

TokenId Vocabulary::add(std::string_view token) {
  const std::string key(token);
  if (auto it = ids_.find(key); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  ids_.emplace(key, id);
  tokens_.push_back(key);
  return id;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InternalError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

// ---------------------------------------------------------------------------

const std::vector<float>* PretrainedVectors::find(std::string_view token) const {
  auto it = rows.find(std::string(token));
  return it == rows.end() ? nullptr : &it->second;
}

PretrainedVectors read_vectors(const std::filesystem::path& path, std::optional<std::size_t> expected_width,
                               const std::unordered_set<std::string>* keep) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vector file " + path.string());
  PretrainedVectors out;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fields.clear();
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(" \t");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto end = rest.find_first_of(" \t");
      fields.push_back(rest.substr(0, end));
      rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
    }
    if (line_no == 1 && fields.size() == 2) {
      std::size_t count = 0, width = 0;
      auto a = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), count);
      auto b = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), width);
      if (a.ec == std::errc{} && b.ec == std::errc{} && a.ptr == fields[0].data() + fields[0].size() &&
          b.ptr == fields[1].data() + fields[1].size()) {
        out.width = width;
        if (expected_width && width != *expected_width) {
          throw ConfigError("vector file " + path.string() + " has width " + std::to_string(width) +
                            ", configured d is " + std::to_string(*expected_width));
        }
        continue;
      }
    }
    if (fields.size() < 2) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected a token followed by values");
    }
    const std::size_t width = fields.size() - 1;
    if (out.width == 0) {
      out.width = width;
      if (expected_width && width != *expected_width) {
        throw ConfigError("vector file " + path.string() + " has width " + std::to_string(width) +
                          ", configured d is " + std::to_string(*expected_width));
      }
    } else if (width != out.width) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(out.width) +
                       " values, found " + std::to_string(width));
    }
    std::string token(fields[0]);
    if (keep && !keep->count(token)) continue;
    std::vector<float> row(width);
    for (std::size_t i = 0; i < width; ++i) {
      const auto f = fields[i + 1];
      auto res = std::from_chars(f.data(), f.data() + f.size(), row[i]);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed value '" + std::string(f) +
                         "'");
      }
    }
    out.rows.emplace(std::move(token), std::move(row));
  }
  return out;
}

VocabBuild build_vocab(std::span<const Document> corpus, std::size_t width, const PretrainedVectors* vectors,
                       Rng& rng) {
  if (vectors && vectors->width != 0 && vectors->width != width) {
    throw ConfigError("vector width " + std::to_string(vectors->width) + " differs from configured d " +
                      std::to_string(width));
  }
  VocabBuild out;
  for (const auto& doc : corpus) {
    for (const auto& sentence : doc.sentences) {
      for (const auto& token : tokenize(sentence)) out.vocab.add(token);
    }
  }
  out.embedding.table = Tensor({out.vocab.size(), width});
  for (std::size_t id = 1; id < out.vocab.size(); ++id) {
    auto row = out.embedding.table.row(id);
    const std::vector<float>* found = nullptr;
    if (vectors && id != static_cast<std::size_t>(kUnkId)) {
      const auto& token = out.vocab.token(static_cast<TokenId>(id));
      found = vectors->find(token);
      if (found) {
        ++out.from_file;
      } else {
        for (const auto& lemma : lemma_candidates(token)) {
          if ((found = vectors->find(lemma))) {
            ++out.from_lemma;
            break;
          }
        }
      }
    }
    if (found) {
      std::copy(found->begin(), found->end(), row.begin());
    } else {
      for (auto& v : row) v = static_cast<float>(rng.uniform(-0.25, 0.25));
      ++out.random;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

SentenceIds padding_sentence(std::size_t length) { return SentenceIds{std::vector<TokenId>(length, kPadId), 0}; }

SentenceIds encode_sentence(std::string_view text, const Vocabulary& vocab, std::size_t length) {
  SentenceIds s = padding_sentence(length);
  const auto tokens = tokenize(text);
  s.real_length = std::min(tokens.size(), length);
  for (std::size_t i = 0; i < s.real_length; ++i) s.ids[i] = vocab.id(tokens[i]);
  return s;
}

EncodedDocument encode_document(const Document& doc, const Vocabulary& vocab, std::size_t length) {
  EncodedDocument out{doc.id, {}, doc.labels};
  out.sentences.reserve(doc.size());
  for (const auto& s : doc.sentences) out.sentences.push_back(encode_sentence(s, vocab, length));
  return out;
}

template <typename T>
BasicTensor<T> embed_sentence(const SentenceIds& s, const BasicTensor<T>& table) {
  const std::size_t width = table.cols(), vocab = table.rows();
  BasicTensor<T> out({s.ids.size(), width});
  for (std::size_t j = 0; j < s.ids.size(); ++j) {
    const TokenId id = s.ids[j];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InternalError("token id " + std::to_string(id) + " outside embedding table of " +
                          std::to_string(vocab) + " rows");
    }
    if (id == kPadId) continue;
    auto src = table.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(j).begin());
  }
  return out;
}

template BasicTensor<float> embed_sentence<float>(const SentenceIds&, const BasicTensor<float>&);
template BasicTensor<double> embed_sentence<double>(const SentenceIds&, const BasicTensor<double>&);

// ---------------------------------------------------------------------------

ContextSample make_window(const EncodedDocument& doc, std::size_t index, int context_size) {
  if (context_size <= 0) throw ConfigError("context size K must be positive, got " + std::to_string(context_size));
  if (index >= doc.size()) {
    throw DimensionError("sentence " + std::to_string(index) + " outside document '" + doc.id + "' of " +
                         std::to_string(doc.size()));
  }
  const auto k = static_cast<std::ptrdiff_t>(context_size);
  const auto i = static_cast<std::ptrdiff_t>(index);
  const auto n = static_cast<std::ptrdiff_t>(doc.size());
  const std::size_t length = doc.sentences[index].ids.size();
  auto at = [&](std::ptrdiff_t j) {
    return j >= 0 && j < n ? doc.sentences[static_cast<std::size_t>(j)] : padding_sentence(length);
  };
  ContextSample s;
  s.left.reserve(static_cast<std::size_t>(k));
  s.right.reserve(static_cast<std::size_t>(k));
  for (std::ptrdiff_t j = i - k; j < i; ++j) s.left.push_back(at(j));
  s.mid = doc.sentences[index];
  for (std::ptrdiff_t j = i + k; j > i; --j) s.right.push_back(at(j));
  s.label = doc.labels[index];
  s.doc_id = doc.id;
  s.sentence_index = index;
  return s;
}

std::vector<ContextSample> make_samples(std::span<const EncodedDocument> docs, int context_size) {
  std::vector<ContextSample> out;
  for (const auto& doc : docs) {
    for (std::size_t i = 1; i < doc.size(); ++i) out.push_back(make_window(doc, i, context_size));
  }
  return out;
}

double class_weight(std::span<const std::uint8_t> labels) {
  std::size_t ones = 0;
  for (auto l : labels) ones += l ? 1 : 0;
  const std::size_t zeros = labels.size() - ones;
  if (ones == 0 || zeros == 0) {
    throw DataError("class weight needs both classes; found " + std::to_string(zeros) + " zeros and " +
                    std::to_string(ones) + " ones");
  }
  return static_cast<double>(ones) / static_cast<double>(zeros);
}

double class_weight(std::span<const ContextSample> samples) {
  std::vector<std::uint8_t> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return class_weight(labels);
}

std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size, bool shuffle, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  if (shuffle) rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace segattn
