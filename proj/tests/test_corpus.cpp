// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "segattn/corpus.hpp"
#include "segattn/errors.hpp"
#include "segattn/text.hpp"

using namespace segattn;

namespace {

std::vector<Document> jsonl(const std::string& text) {
  std::istringstream in(text);
  return read_jsonl(in, "mem");
}

std::vector<Document> markers(const std::string& text, std::string stem = "m") {
  std::istringstream in(text);
  return read_choi_markers(in, stem);
}

std::string expect_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("jsonl reading") {
  const auto docs = jsonl(R"({"id":"d1","sentences":["a","b"],"boundaries":[1,0]})"
                          "\n\n");
  REQUIRE(docs.size() == 1);
  CHECK(docs[0].id == "d1");
  CHECK(docs[0].sentences == std::vector<std::string>{"a", "b"});
  CHECK(docs[0].labels == std::vector<std::uint8_t>{1, 0});

  const auto mismatch = expect_error([] { jsonl(R"({"id":"d1","sentences":["a","b"],"boundaries":[1]})"); });
  CHECK(mismatch.find("d1") != std::string::npos);

  const auto parse = expect_error([] {
    jsonl(R"({"id":"ok","sentences":["a"],"boundaries":[1]})"
          "\n{not json\n");
  });
  CHECK(parse.find(":2") != std::string::npos);
  CHECK_THROWS_AS(jsonl("{not json\n"), ParseError);
  CHECK_THROWS_AS(jsonl(R"({"id":"d","sentences":["a","b"],"boundaries":[1,2]})"), DataError);
  CHECK_THROWS_AS(jsonl(R"({"id":"d","sentences":[],"boundaries":[]})"), DataError);

  // a leading 0 is coerced to a document start
  const auto coerced = jsonl(R"({"id":"c","sentences":["a","b"],"boundaries":[0,1]})");
  CHECK(coerced[0].labels == std::vector<std::uint8_t>{1, 1});

  ReadOptions unlabeled;
  unlabeled.require_labels = false;
  std::istringstream in(R"({"id":"u","sentences":["a","b","c"]})");
  const auto u = read_jsonl(in, "mem", unlabeled);
  CHECK(u[0].sentences.size() == 3);
  CHECK_THROWS_AS(jsonl(R"({"id":"u","sentences":["a","b","c"]})"), ParseError);
}

TEST_CASE("marker text reading") {
  const auto two = markers("==========\ns1\ns2\n==========\ns3\ns4\n");
  REQUIRE(two.size() == 1);
  CHECK(two[0].labels == std::vector<std::uint8_t>{1, 0, 1, 0});
  CHECK(two[0].id == "m");

  const auto plain = markers("a\nb\nc\n");
  CHECK(plain[0].labels == std::vector<std::uint8_t>{1, 0, 0});

  const auto err = expect_error([] { markers("a\n==========\n==========\nb\n"); });
  CHECK(err.find("3") != std::string::npos);
  CHECK_THROWS_AS(markers("a\n==========\n==========\nb\n"), DataError);
}

TEST_CASE("three-document marker fixture matches a hand parse") {
  const std::string fixture =
      "==========\n"
      "The heart pumps blood.\n"
      "Valves keep it flowing.\n"
      "==========\n"
      "Lungs exchange gases.\n"
      "\n"
      "Chapter one opens at sea.\n"
      "==========\n"
      "A storm arrives.\n"
      "The crew scatters.\n"
      "==========\n"
      "Morning is calm.\n"
      "\n"
      "\n"
      "Only one sentence here.\n"
      "==========\n";
  const auto docs = markers(fixture, "fx");
  REQUIRE(docs.size() == 3);
  CHECK(docs[0].id == "fx-0");
  CHECK(docs[2].id == "fx-2");
  CHECK(docs[0].labels == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(docs[1].labels == std::vector<std::uint8_t>{1, 1, 0, 1});
  CHECK(docs[2].labels == std::vector<std::uint8_t>{1});
  CHECK(docs[1].sentences[1] == "A storm arrives.");
}

TEST_CASE("write_segments") {
  const Document d{"d", {"one", "two", "three", "four"}, {1, 0, 1, 0}};
  std::ostringstream same;
  write_segments(same, d, Segmentation(d.labels));
  CHECK(markers(same.str())[0].labels == d.labels);
  CHECK(markers(same.str())[0].sentences == d.sentences);

  std::ostringstream flat;
  write_segments(flat, d, Segmentation({1, 0, 0, 0}));
  CHECK(flat.str().find(std::string(kSegmentMarker)) == std::string::npos);
  CHECK(markers(flat.str())[0].labels == std::vector<std::uint8_t>{1, 0, 0, 0});

  std::ostringstream bad;
  CHECK_THROWS_AS(write_segments(bad, d, Segmentation({1, 0})), InternalError);
  const Document marker_text{"m", {"ok", std::string(kSegmentMarker)}, {1, 0}};
  CHECK_THROWS_AS(write_segments(bad, marker_text, Segmentation({1, 0})), DataError);

  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    Document r{"r", {}, {}};
    const std::size_t n = 1 + rng.below(15);
    for (std::size_t i = 0; i < n; ++i) {
      r.sentences.push_back("s" + std::to_string(i));
      r.labels.push_back(i == 0 || rng.bernoulli(0.3) ? 1 : 0);
    }
    std::ostringstream os;
    write_segments(os, r, Segmentation(r.labels));
    CHECK(markers(os.str())[0].labels == r.labels);
  }
}

TEST_CASE("files and format detection") {
  const auto dir = std::filesystem::temp_directory_path() / "segattn_corpus_test";
  std::filesystem::create_directories(dir);
  const std::vector<Document> docs{{"a", {"x y", "z"}, {1, 1}}, {"b", {"q \"quoted\" \\ tab\t"}, {1}}};
  write_jsonl(dir / "c.jsonl", docs);
  CHECK(guess_format(dir / "c.jsonl") == CorpusFormat::kJsonl);
  CHECK(guess_format(dir / "c.txt") == CorpusFormat::kMarkers);
  const auto back = read_corpus(dir / "c.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[1].sentences == docs[1].sentences);

  write_segments(dir / "c.txt", docs, std::vector<Segmentation>{Segmentation(docs[0].labels), Segmentation(docs[1].labels)});
  const auto txt = read_corpus(dir / "c.txt");
  REQUIRE(txt.size() == 2);
  CHECK(txt[0].labels == docs[0].labels);
  CHECK(txt[1].sentences == docs[1].sentences);

  const auto missing = expect_error([&] { read_corpus(dir / "nope.jsonl"); });
  CHECK(missing.find("not found") != std::string::npos);
  CHECK(parse_format("markers") == CorpusFormat::kMarkers);
  CHECK_THROWS_AS(parse_format("xml"), ConfigError);
}

TEST_CASE("minimum average segment filter") {
  std::vector<Document> docs{{"short", {"a", "b", "c", "d"}, {1, 1, 1, 0}}, {"long", {"a", "b", "c", "d"}, {1, 0, 0, 0}}};
  const auto kept = filter_min_average_segment(docs, 3.0);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].id == "long");
}

TEST_CASE("synthetic corpus") {
  SynthSpec s;
  s.seed = 12;
  const auto docs = synth_corpus(s);
  REQUIRE(docs.size() == 100);
  std::size_t sentences = 0, segments = 0;
  for (const auto& d : docs) {
    CHECK(d.labels[0] == 1);
    sentences += d.size();
    for (auto l : d.labels) segments += l;
  }
  const double mean = static_cast<double>(sentences) / static_cast<double>(segments);
  CHECK(mean > 25.0 * 0.85);
  CHECK(mean < 25.0 * 1.15);

  // disjoint topic vocabularies, none of them stop words
  std::set<std::string> seen;
  for (std::size_t t = 0; t < s.n_topics; ++t) {
    for (const auto& w : topic_words(t, s.words_per_topic)) {
      CHECK(seen.insert(w).second);
      CHECK_FALSE(is_stop_word(w));
      CHECK(tokenize(w) == std::vector<std::string>{w});
    }
  }

  // adjacent segments never share a topic: every boundary changes the word set
  auto topic_of = [&](const std::string& sentence) {
    const auto word = tokenize(sentence).at(0);
    for (std::size_t t = 0; t < s.n_topics; ++t) {
      const auto words = topic_words(t, s.words_per_topic);
      if (std::find(words.begin(), words.end(), word) != words.end()) return t;
    }
    return s.n_topics;
  };
  for (const auto& d : docs) {
    for (std::size_t i = 1; i < d.size(); ++i) {
      CHECK((topic_of(d.sentences[i]) != topic_of(d.sentences[i - 1])) == (d.labels[i] == 1));
    }
  }

  std::ostringstream a, b;
  write_jsonl(a, synth_corpus(s));
  write_jsonl(b, synth_corpus(s));
  CHECK(a.str() == b.str());

  SynthSpec one = s;
  one.min_segments = one.max_segments = 1;
  for (const auto& d : synth_corpus(one)) {
    for (std::size_t i = 1; i < d.size(); ++i) CHECK(d.labels[i] == 0);
  }
  SynthSpec bad = s;
  bad.n_topics = 1;
  CHECK_THROWS_AS(synth_corpus(bad), ConfigError);
}
