// SPDX-License-Identifier: Apache-2.0
//
// Raw documents to model instances: tokenization, vocabulary, embedding
// lookup and the left/mid/right context windows.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "segattn/rng.hpp"
#include "segattn/tensor.hpp"

namespace segattn {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

/// A document as read from disk. labels[i] == 1 marks a sentence that
/// starts a segment; labels[0] is always 1.
struct Document {
  std::string id;
  std::vector<std::string> sentences;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return sentences.size(); }
  friend bool operator==(const Document&, const Document&) = default;
};

bool is_stop_word(std::string_view token);

/// Lowercased alphanumeric runs with stop words dropped. Bytes >= 0x80 are
/// kept as word characters so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

/// Suffix-stripped forms of `token` in the order they should be tried:
/// -ies -> -y, -ing, -ed, -es, -s.
std::vector<std::string> lemma_candidates(std::string_view token);

class Vocabulary {
 public:
  Vocabulary();

  /// Rebuilds a vocabulary from its id-ordered token list, which must start
  /// with the PAD and UNK tokens.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  TokenId add(std::string_view token);
  /// kUnkId for anything never added.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::unordered_map<std::string, TokenId> ids_;
  std::vector<std::string> tokens_;
};

struct EmbeddingMatrix {
  Tensor table;  // [V x d], row kPadId all zeros
  bool trainable = false;

  std::size_t width() const { return table.cols(); }
  std::size_t rows() const { return table.rows(); }
};

/// Word vectors read from a text file ("token v1 ... vd" per line, with an
/// optional "V d" header line).
struct PretrainedVectors {
  std::size_t width = 0;
  std::unordered_map<std::string, std::vector<float>> rows;

  const std::vector<float>* find(std::string_view token) const;
};

/// Reads a vector file. When `keep` is given only those tokens (and their
/// lemma candidates) are retained. Throws ConfigError when the width differs
/// from `expected_width`, ParseError with the line number on malformed lines.
PretrainedVectors read_vectors(const std::filesystem::path& path, std::optional<std::size_t> expected_width,
                               const std::unordered_set<std::string>* keep = nullptr);

struct VocabBuild {
  Vocabulary vocab;
  EmbeddingMatrix embedding;
  std::size_t from_file = 0;
  std::size_t from_lemma = 0;
  std::size_t random = 0;
};

/// Vocabulary over every token of `corpus` in first-seen order. Rows come from
/// `vectors` where present, then from a lemma candidate, else uniform in
/// [-0.25, 0.25]. The PAD row is zero.
VocabBuild build_vocab(std::span<const Document> corpus, std::size_t width, const PretrainedVectors* vectors,
                       Rng& rng);

/// Exactly L ids: the first L tokens, padded with kPadId.
struct SentenceIds {
  std::vector<TokenId> ids;
  std::size_t real_length = 0;

  friend bool operator==(const SentenceIds&, const SentenceIds&) = default;
};

SentenceIds padding_sentence(std::size_t length);
SentenceIds encode_sentence(std::string_view text, const Vocabulary& vocab, std::size_t length);

struct EncodedDocument {
  std::string id;
  std::vector<SentenceIds> sentences;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return sentences.size(); }
};

EncodedDocument encode_document(const Document& doc, const Vocabulary& vocab, std::size_t length);

/// Rows of `table` selected by `s.ids` ([L x d]); PAD rows are zero.
template <typename T>
BasicTensor<T> embed_sentence(const SentenceIds& s, const BasicTensor<T>& table);

/// One classification instance. `left` is in document order so its last
/// entry is adjacent to the mid-sentence; `right` mirrors it, holding
/// sentences i+K .. i+1, so position j sits at the same distance from the
/// mid-sentence on both sides. Positions beyond the document are all-PAD.
struct ContextSample {
  std::vector<SentenceIds> left;
  SentenceIds mid;
  std::vector<SentenceIds> right;
  std::uint8_t label = 0;
  std::string doc_id;
  std::size_t sentence_index = 0;
};

ContextSample make_window(const EncodedDocument& doc, std::size_t index, int context_size);

/// Samples for every sentence except the first of each document.
std::vector<ContextSample> make_samples(std::span<const EncodedDocument> docs, int context_size);

/// f1 / f0 over the labels. Throws DataError when a class is absent.
double class_weight(std::span<const std::uint8_t> labels);
double class_weight(std::span<const ContextSample> samples);

/// Index batches covering [0, count); the last may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size, bool shuffle, Rng& rng);

}  // namespace segattn
