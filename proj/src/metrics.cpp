// SPDX-License-Identifier: Apache-2.0
#include "segattn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "segattn/errors.hpp"
#include "segattn/log.hpp"

namespace segattn {

std::size_t Segmentation::segment_count() const { return size() == 0 ? 0 : inner_boundaries() + 1; }

std::size_t Segmentation::inner_boundaries() const {
  std::size_t count = 0;
  for (std::size_t i = 1; i < boundaries.size(); ++i) count += boundaries[i] ? 1 : 0;
  return count;
}

std::size_t window_size(const Segmentation& ref) {
  const std::size_t n = ref.size();
  if (n < 3) throw MetricError("document of " + std::to_string(n) + " sentences is too short to score");
  const double half_mean = static_cast<double>(n) / (2.0 * static_cast<double>(ref.segment_count()));
  const auto rounded = static_cast<std::size_t>(std::nearbyint(half_mean));
  return std::min(std::max<std::size_t>(2, rounded), n - 1);
}

namespace {

void check_pair(const Segmentation& ref, const Segmentation& hyp, std::size_t k) {
  if (ref.size() != hyp.size()) {
    throw MetricError("reference has " + std::to_string(ref.size()) + " sentences, hypothesis has " +
                      std::to_string(hyp.size()));
  }
  if (k < 1 || k >= ref.size()) {
    throw MetricError("window " + std::to_string(k) + " invalid for " + std::to_string(ref.size()) + " sentences");
  }
}

// Calls visit(ref_count, hyp_count) for each window of gaps t+1 .. t+k,
// t in [0, n-k-1], maintaining both counts incrementally.
template <typename Visit>
void slide(const Segmentation& ref, const Segmentation& hyp, std::size_t k, Visit visit) {
  const auto& r = ref.boundaries;
  const auto& h = hyp.boundaries;
  long rc = 0, hc = 0;
  for (std::size_t j = 1; j <= k; ++j) {
    rc += r[j] ? 1 : 0;
    hc += h[j] ? 1 : 0;
  }
  const std::size_t n = r.size();
  for (std::size_t t = 0;; ++t) {
    visit(rc, hc);
    if (t + k + 1 >= n) break;
    rc += (r[t + k + 1] ? 1 : 0) - (r[t + 1] ? 1 : 0);
    hc += (h[t + k + 1] ? 1 : 0) - (h[t + 1] ? 1 : 0);
  }
}

}  // namespace

double pk(const Segmentation& ref, const Segmentation& hyp, std::size_t k) {
  check_pair(ref, hyp, k);
  std::size_t errors = 0;
  slide(ref, hyp, k, [&](long rc, long hc) { errors += (rc == 0) != (hc == 0) ? 1 : 0; });
  return static_cast<double>(errors) / static_cast<double>(ref.size() - k);
}

double windiff(const Segmentation& ref, const Segmentation& hyp, std::size_t k) {
  check_pair(ref, hyp, k);
  std::size_t errors = 0;
  slide(ref, hyp, k, [&](long rc, long hc) { errors += rc != hc ? 1 : 0; });
  return static_cast<double>(errors) / static_cast<double>(ref.size() - k);
}

Segmentation random_segmentation(std::size_t n, double p_boundary, Rng& rng) {
  if (!(p_boundary >= 0.0 && p_boundary <= 1.0)) {
    throw ConfigError("boundary probability must be in [0, 1], got " + std::to_string(p_boundary));
  }
  Segmentation s(std::vector<std::uint8_t>(n, 0));
  if (n == 0) return s;
  s.boundaries[0] = 1;
  for (std::size_t i = 1; i < n; ++i) s.boundaries[i] = rng.uniform() < p_boundary ? 1 : 0;
  return s;
}

double matched_boundary_rate(const Segmentation& ref) {
  if (ref.size() < 2) return 0.0;
  return static_cast<double>(ref.inner_boundaries()) / static_cast<double>(ref.size() - 1);
}

CorpusScore evaluate_corpus(std::span<const Reference> refs,
                            const std::function<Segmentation(std::size_t)>& predictor) {
  CorpusScore out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& ref = refs[i];
    if (ref.boundaries.size() < 3) {
      log_warning("skipping document '" + ref.id + "': " + std::to_string(ref.boundaries.size()) +
                  " sentences is too short to score");
      out.skipped.push_back(ref.id);
      continue;
    }
    const Segmentation hyp = predictor(i);
    DocumentScore row{ref.id, ref.boundaries.size(), window_size(ref.boundaries), 0.0, 0.0};
    row.pk = pk(ref.boundaries, hyp, row.k);
    row.windiff = windiff(ref.boundaries, hyp, row.k);
    out.documents.push_back(std::move(row));
  }
  if (!out.documents.empty()) {
    for (const auto& d : out.documents) {
      out.mean_pk += d.pk;
      out.mean_windiff += d.windiff;
    }
    out.mean_pk /= static_cast<double>(out.documents.size());
    out.mean_windiff /= static_cast<double>(out.documents.size());
  }
  return out;
}

void write_report(std::ostream& out, const CorpusScore& score) {
  char buf[64];
  auto fixed = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  out << "docId\tn\tk\tPk\tWinDiff\n";
  for (const auto& d : score.documents) {
    out << d.id << '\t' << d.n << '\t' << d.k << '\t' << fixed(d.pk) << '\t' << fixed(d.windiff) << '\n';
  }
  out << "MEAN\t" << score.documents.size() << "\t-\t" << fixed(score.mean_pk) << '\t' << fixed(score.mean_windiff)
      << '\n';
  for (const auto& id : score.skipped) out << "# skipped\t" << id << '\n';
}

}  // namespace segattn
