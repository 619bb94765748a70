// SPDX-License-Identifier: Apache-2.0
//
// Corpus files (JSON lines and "=========="-marker text) and the synthetic
// disjoint-topic corpus generator.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segattn/metrics.hpp"
#include "segattn/text.hpp"

namespace segattn {

enum class CorpusFormat { kJsonl, kMarkers };

/// "jsonl" or "markers"; anything else is a ConfigError.
CorpusFormat parse_format(std::string_view name);
std::string_view to_string(CorpusFormat format);
/// .jsonl / .json map to kJsonl, everything else to kMarkers.
CorpusFormat guess_format(const std::filesystem::path& path);

inline constexpr std::string_view kSegmentMarker = "==========";

struct ReadOptions {
  /// When false a JSON line may omit "boundaries"; the document is then a
  /// single segment.
  bool require_labels = true;
};

/// One {"id", "sentences", "boundaries"} object per line; blank lines are
/// skipped. ParseError carries the line number, DataError the document id.
std::vector<Document> read_jsonl(std::istream& in, std::string_view source, const ReadOptions& opts = {});
std::vector<Document> read_jsonl(const std::filesystem::path& path, const ReadOptions& opts = {});

void write_jsonl(std::ostream& out, std::span<const Document> docs);
void write_jsonl(const std::filesystem::path& path, std::span<const Document> docs);

/// One sentence per line, segments separated by a line of exactly ten '=',
/// documents separated by blank lines. Separators at the start or end of a
/// document are ignored. Ids are the file stem, suffixed with "-<index>"
/// when the file holds several documents.
std::vector<Document> read_choi_markers(std::istream& in, std::string_view stem);
std::vector<Document> read_choi_markers(const std::filesystem::path& path);

/// Marker text for `doc` with a separator before every predicted boundary
/// after the first sentence. InternalError on a length mismatch, DataError on
/// a sentence the format cannot carry (empty, multi-line, or a marker).
void write_segments(std::ostream& out, const Document& doc, const Segmentation& predicted);
/// Several documents, blank line between them.
void write_segments(const std::filesystem::path& path, std::span<const Document> docs,
                    std::span<const Segmentation> predicted);

/// Reads `path` in the given format (guessed from the extension when absent).
/// A missing file is a DataError naming the path.
std::vector<Document> read_corpus(const std::filesystem::path& path, std::optional<CorpusFormat> format = {},
                                  const ReadOptions& opts = {});

/// Drops documents whose mean segment length is below `min_mean` and returns
/// the survivors; each drop is logged.
std::vector<Document> filter_min_average_segment(std::vector<Document> docs, double min_mean);

// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t n_docs = 100;
  std::size_t min_segments = 3;
  std::size_t max_segments = 6;
  double segment_length_mean = 25.0;
  double segment_length_std = 5.0;
  std::size_t sentence_length = 10;  // words per sentence
  std::size_t n_topics = 10;
  std::size_t words_per_topic = 50;
  std::uint64_t seed = 1;
  /// Probability that a word is drawn from a uniformly chosen topic instead
  /// of the segment's own topic. Zero gives perfectly clean segments.
  double bleed = 0.0;

  /// Throws ConfigError for a spec that would produce empty documents.
  void validate() const;
};

/// The pseudo-word vocabulary of `topic`; no word occurs in two topics.
std::vector<std::string> topic_words(std::size_t topic, std::size_t words_per_topic);

/// Fully determined by the spec: equal specs give identical corpora.
std::vector<Document> synth_corpus(const SynthSpec& spec);

}  // namespace segattn
