// SPDX-License-Identifier: Apache-2.0
//
// Pk and WinDiff segmentation metrics and the random-boundary baseline.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "segattn/rng.hpp"

namespace segattn {

/// Per-sentence boundary indicators; boundaries[i] == 1 when sentence i
/// starts a segment. Index 0 is the document start and is never scored.
struct Segmentation {
  std::vector<std::uint8_t> boundaries;

  Segmentation() = default;
  explicit Segmentation(std::vector<std::uint8_t> b) : boundaries(std::move(b)) {}

  std::size_t size() const { return boundaries.size(); }
  /// Segments including the implicit first one.
  std::size_t segment_count() const;
  /// Boundaries at positions >= 1.
  std::size_t inner_boundaries() const;

  friend bool operator==(const Segmentation&, const Segmentation&) = default;
};

/// max(2, round(n / (2 * segments))) with ties rounded to even, capped at
/// n - 1. Throws MetricError when n < 3.
std::size_t window_size(const Segmentation& ref);

/// Fraction of the n - k sentence pairs (t, t + k) whose same-segment status
/// differs between ref and hyp.
double pk(const Segmentation& ref, const Segmentation& hyp, std::size_t k);

/// Fraction of the n - k windows of k consecutive gaps in which ref and hyp
/// place a different number of boundaries.
double windiff(const Segmentation& ref, const Segmentation& hyp, std::size_t k);

/// Positions >= 1 become boundaries independently with probability p.
Segmentation random_segmentation(std::size_t n, double p_boundary, Rng& rng);

/// Boundary rate of `ref` over the scorable positions 1..n-1.
double matched_boundary_rate(const Segmentation& ref);

struct Reference {
  std::string id;
  Segmentation boundaries;
};

struct DocumentScore {
  std::string id;
  std::size_t n = 0;
  std::size_t k = 0;
  double pk = 0.0;
  double windiff = 0.0;
};

struct CorpusScore {
  std::vector<DocumentScore> documents;
  std::vector<std::string> skipped;
  double mean_pk = 0.0;
  double mean_windiff = 0.0;
};

/// Scores predictor(i) against refs[i] for every document, macro-averaged.
/// Documents shorter than three sentences are skipped and listed.
CorpusScore evaluate_corpus(std::span<const Reference> refs,
                            const std::function<Segmentation(std::size_t)>& predictor);

/// Tab-separated report: a "docId n k Pk WinDiff" header, one row per scored
/// document, a MEAN row, and a "# skipped" comment per unscored document.
void write_report(std::ostream& out, const CorpusScore& score);

}  // namespace segattn
