// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "segattn/text.hpp"

using namespace segattn;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / ("segattn_text_" + name);
  std::ofstream(path) << content;
  return path;
}

Document doc_of(std::vector<std::string> sentences, std::vector<std::uint8_t> labels, std::string id = "d") {
  return Document{std::move(id), std::move(sentences), std::move(labels)};
}

// Sentence i of a test document holds the single token "w<i>", so a window
// can be read back as sentence indices.
EncodedDocument indexed_doc(std::size_t n, std::size_t L, Vocabulary& vocab) {
  Document d;
  d.id = "idx";
  for (std::size_t i = 0; i < n; ++i) {
    d.sentences.push_back("w" + std::to_string(i));
    d.labels.push_back(i == 0 || i % 3 == 0 ? 1 : 0);
    vocab.add("w" + std::to_string(i));
  }
  return encode_document(d, vocab, L);
}

long index_of(const SentenceIds& s, const Vocabulary& vocab) {
  if (s.real_length == 0) return -1;
  return std::stol(vocab.token(s.ids[0]).substr(1));
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("The cat sat.") == std::vector<std::string>{"cat", "sat"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("Mitral-valve prolapse, causes") == std::vector<std::string>{"mitral", "valve", "prolapse", "causes"});
  CHECK(tokenize("ÉTÉ café") == std::vector<std::string>{"\xc3\x89t\xc3\x89", "caf\xc3\xa9"});
  CHECK(is_stop_word("the"));
  CHECK_FALSE(is_stop_word("prolapse"));
}

TEST_CASE("lemma candidates") {
  CHECK(lemma_candidates("walking") == std::vector<std::string>{"walk"});
  CHECK(lemma_candidates("studies")[0] == "study");
  const auto walked = lemma_candidates("walked");
  CHECK(std::find(walked.begin(), walked.end(), "walk") != walked.end());
}

TEST_CASE("vocabulary") {
  Vocabulary v;
  CHECK(v.size() == 2);
  CHECK(v.id("<pad>") == kPadId);
  CHECK(v.id("anything") == kUnkId);
  const TokenId x = v.add("x");
  CHECK(v.add("x") == x);
  CHECK(v.token(x) == "x");
  CHECK(v.id(v.token(x)) == x);
  const auto copy = Vocabulary::from_tokens(v.tokens());
  CHECK(copy.tokens() == v.tokens());
  CHECK(copy.id("x") == x);
}

TEST_CASE("build_vocab counts and fills rows") {
  const std::vector<Document> corpus{doc_of({"x y", "y z"}, {1, 0})};
  Rng rng(1);
  const auto built = build_vocab(corpus, 4, nullptr, rng);
  CHECK(built.vocab.size() == 5);
  CHECK(built.embedding.table.shape() == Shape{5, 4});
  for (float v : built.embedding.table.row(kPadId)) CHECK(v == 0.0f);
  for (std::size_t r = 1; r < 5; ++r) {
    for (float v : built.embedding.table.row(r)) {
      CHECK(v >= -0.25f);
      CHECK(v <= 0.25f);
    }
  }
  CHECK(built.random == 4);
}

TEST_CASE("build_vocab uses vector file rows and lemma fallback") {
  const auto path = temp_file("vectors.txt", "2 3\nwalk 0.5 -1 2\nprolapse 1e-3 4 5.25\n");
  const auto vectors = read_vectors(path, 3);
  CHECK(vectors.width == 3);
  const std::vector<Document> corpus{doc_of({"Walking prolapse", "novelword"}, {1, 0})};
  Rng rng(2);
  const auto built = build_vocab(corpus, 3, &vectors, rng);
  const auto row = [&](const char* t) { return built.embedding.table.row(static_cast<std::size_t>(built.vocab.id(t))); };
  CHECK(std::vector<float>(row("prolapse").begin(), row("prolapse").end()) == std::vector<float>{1e-3f, 4, 5.25f});
  CHECK(std::vector<float>(row("walking").begin(), row("walking").end()) == std::vector<float>{0.5f, -1, 2});
  CHECK(built.from_file == 1);
  CHECK(built.from_lemma == 1);
  CHECK(built.random == 2);  // novelword plus the UNK row

  CHECK_THROWS_AS(read_vectors(path, 4), ConfigError);
  const auto bad = temp_file("bad.txt", "walk 0.5 -1 2\nrun 0.1 oops 3\n");
  try {
    read_vectors(bad, 3);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("encode and embed sentences") {
  Vocabulary v;
  v.add("cat");
  v.add("sat");
  const auto s = encode_sentence("The cat sat on a mat", v, 4);
  CHECK(s.ids == std::vector<TokenId>{v.id("cat"), v.id("sat"), kUnkId, kPadId});
  CHECK(s.real_length == 3);
  CHECK(encode_sentence("cat sat cat sat cat", v, 2).ids.size() == 2);

  Tensor table({4, 3});
  for (std::size_t i = 0; i < table.size(); ++i) table[i] = static_cast<float>(i) + 1;
  for (float& x : table.row(0)) x = 0;
  const auto pad = embed_sentence(padding_sentence(3), table);
  for (float x : pad.values()) CHECK(x == 0.0f);

  const SentenceIds two{{2, kPadId}, 1};
  const auto e = embed_sentence(two, table);
  CHECK(e(0, 0) == table(2, 0));
  CHECK(e(0, 2) == table(2, 2));
  CHECK(e(1, 1) == 0.0f);

  const SentenceIds bad{{7}, 1};
  CHECK_THROWS_AS(embed_sentence(bad, table), InternalError);
}

TEST_CASE("embedding lookup equals the one-hot product") {
  Rng rng(3);
  BasicTensor<double> table({6, 4});
  for (auto& x : table.values()) x = rng.uniform(-1, 1);
  for (auto& x : table.row(0)) x = 0;
  const SentenceIds s{{3, 1, 5, 0, 2}, 4};
  const auto e = embed_sentence(s, table);
  for (std::size_t j = 0; j < 5; ++j) {
    for (std::size_t c = 0; c < 4; ++c) {
      double acc = 0;
      for (std::size_t v = 0; v < 6; ++v) acc += (static_cast<TokenId>(v) == s.ids[j] ? 1.0 : 0.0) * table(v, c);
      CHECK(e(j, c) == acc);
    }
  }
}

TEST_CASE("make_window examples") {
  Vocabulary vocab;
  const auto d3 = indexed_doc(3, 2, vocab);
  const auto w = make_window(d3, 1, 1);
  CHECK(index_of(w.left[0], vocab) == 0);
  CHECK(index_of(w.mid, vocab) == 1);
  CHECK(index_of(w.right[0], vocab) == 2);

  const auto w0 = make_window(d3, 0, 1);
  CHECK(w0.left.size() == 1);
  CHECK(w0.left[0] == padding_sentence(2));

  const auto d5 = indexed_doc(5, 2, vocab);
  const auto w4 = make_window(d5, 4, 3);
  CHECK(index_of(w4.left[0], vocab) == 1);
  CHECK(index_of(w4.left[1], vocab) == 2);
  CHECK(index_of(w4.left[2], vocab) == 3);
  for (const auto& r : w4.right) CHECK(r == padding_sentence(2));

  CHECK_THROWS_AS(make_window(d5, 1, 0), ConfigError);
  CHECK_THROWS_AS(make_window(d5, 1, -2), ConfigError);
}

TEST_CASE("right context mirrors the left around the mid-sentence") {
  Vocabulary vocab;
  const auto doc = indexed_doc(12, 2, vocab);
  for (int K : {1, 2, 4}) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const auto w = make_window(doc, i, K);
      REQUIRE(w.left.size() == static_cast<std::size_t>(K));
      REQUIRE(w.right.size() == static_cast<std::size_t>(K));
      for (int j = 0; j < K; ++j) {
        // position j sits K - j sentences away on both sides
        const long dist = K - j;
        const long l = static_cast<long>(i) - dist, r = static_cast<long>(i) + dist;
        CHECK(index_of(w.left[j], vocab) == (l >= 0 ? l : -1));
        CHECK(index_of(w.right[j], vocab) == (r < 12 ? r : -1));
      }
    }
  }
}

TEST_CASE("samples reconstruct the labels and skip the first sentence") {
  Vocabulary vocab;
  std::vector<EncodedDocument> docs{indexed_doc(7, 2, vocab), indexed_doc(4, 2, vocab)};
  const auto samples = make_samples(docs, 2);
  CHECK(samples.size() == 6 + 3);
  std::size_t k = 0;
  for (const auto& d : docs) {
    for (std::size_t i = 1; i < d.size(); ++i, ++k) {
      CHECK(samples[k].label == d.labels[i]);
      CHECK(samples[k].sentence_index == i);
      CHECK(samples[k].left.size() + 1 + samples[k].right.size() == 5);
    }
  }
}

TEST_CASE("class weights") {
  std::vector<std::uint8_t> even(10, 0);
  std::fill(even.begin(), even.begin() + 5, 1);
  CHECK(class_weight(even) == 1.0);
  std::vector<std::uint8_t> skew(100, 0);
  std::fill(skew.begin(), skew.begin() + 8, 1);
  CHECK(std::abs(class_weight(skew) - 8.0 / 92.0) < 1e-9);
  std::vector<std::uint8_t> many(40, 1);
  std::fill(many.begin(), many.begin() + 10, 0);
  CHECK(class_weight(many) == 3.0);
  CHECK_THROWS_AS(class_weight(std::vector<std::uint8_t>(5, 0)), DataError);
}

TEST_CASE("batches") {
  Rng rng(4);
  const auto b = batches(100, 40, false, rng);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 40);
  CHECK(b[1].size() == 40);
  CHECK(b[2].size() == 20);
  for (std::size_t i = 0; i < 40; ++i) CHECK(b[0][i] == i);

  Rng a(9), c(9);
  const auto s1 = batches(100, 40, true, a), s2 = batches(100, 40, true, c);
  CHECK(s1 == s2);
  std::vector<std::size_t> all;
  for (const auto& x : s1) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) CHECK(all[i] == i);
}
