#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "knowslm/embedding.hpp"
#include "knowslm/error.hpp"
#include "knowslm/retrieval.hpp"
#include "knowslm/text.hpp"
#include "support.hpp"

using namespace knowslm;
using namespace knowslm::retrieval;

namespace {

KnowledgeDocument doc(std::string id, std::string body) {
  return KnowledgeDocument{std::move(id), "t", std::move(body), "article", LanguageMode::english};
}

std::vector<std::string> chunk_words(const Chunk& c) {
  std::vector<std::string> out;
  for (auto w : text::split_whitespace(c.text)) out.emplace_back(w);
  return out;
}

// Full-sort oracle with the documented tie rule.
std::vector<std::pair<std::string, double>> oracle(const ChunkIndex& index, const EmbeddingVector& q,
                                                   std::size_t k, const Scorer& scorer) {
  std::vector<std::tuple<double, std::string, std::size_t>> all;
  for (const auto& e : index.entries()) {
    double dot = 0, nu = 0, nv = 0, d2 = 0;
    for (std::size_t i = 0; i < q.dims(); ++i) {
      dot += q[i] * e.vector[i];
      nu += q[i] * q[i];
      nv += e.vector[i] * e.vector[i];
      d2 += (q[i] - e.vector[i]) * (q[i] - e.vector[i]);
    }
    double s = std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
    if (const auto* h = std::get_if<HybridScorer>(&scorer)) {
      s = h->weight * s + (1.0 - h->weight) / (1.0 + std::sqrt(d2));
    }
    all.emplace_back(s, e.chunk.doc_id, e.chunk.index);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) {
    out.emplace_back(std::get<1>(all[i]) + "#" + std::to_string(std::get<2>(all[i])), std::get<0>(all[i]));
  }
  return out;
}

}  // namespace

TEST_CASE("chunk_document sliding windows") {
  const auto chunks = chunk_document(doc("d", "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9"), 4, 1);
  REQUIRE(chunks.size() == 4);
  CHECK(chunk_words(chunks[0]) == std::vector<std::string>{"w0", "w1", "w2", "w3"});
  CHECK(chunk_words(chunks[1]) == std::vector<std::string>{"w3", "w4", "w5", "w6"});
  CHECK(chunk_words(chunks[2]) == std::vector<std::string>{"w6", "w7", "w8", "w9"});
  CHECK(chunk_words(chunks[3]) == std::vector<std::string>{"w9"});
  CHECK(chunks[3].token_length == 1);
  CHECK(chunks[2].index == 2);
}

TEST_CASE("chunk_document edge cases") {
  const auto single = chunk_document(doc("d", "short body here"), 10, 2);
  REQUIRE(single.size() == 1);
  CHECK(single[0].text == "short body here");
  CHECK_THROWS_AS(chunk_document(doc("d", "a b c"), 3, 3), Error);
  try {
    chunk_document(doc("d", "a b c"), 2, 5);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_overlap);
  }
}

TEST_CASE("chunks reassemble to the exact body") {
  std::mt19937_64 rng(3);
  const std::string seps[] = {" ", "  ", "\n", "\t", " \n "};
  for (int trial = 0; trial < 200; ++trial) {
    std::string body = trial % 3 == 0 ? "  " : "";
    const int n = 1 + static_cast<int>(rng() % 60);
    for (int i = 0; i < n; ++i) {
      body += testing::random_word(rng);
      body += seps[rng() % 5];
    }
    const std::size_t target = 1 + rng() % 12;
    const std::size_t overlap = rng() % target;
    const auto chunks = chunk_document(doc("d", body), target, overlap);
    CHECK(reassemble(chunks) == body);
    for (const auto& c : chunks) CHECK(c.token_length <= target);
  }
}

TEST_CASE("cosine_similarity examples") {
  const EmbeddingVector a({1, 0}), b({0, 1}), c({1, 2}), d({2, 4});
  CHECK(cosine_similarity(c, c) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));
  CHECK(cosine_similarity(c, d) == doctest::Approx(1.0));
  CHECK_THROWS_AS(cosine_similarity(EmbeddingVector({0, 0}), a), Error);
  CHECK_THROWS_AS(cosine_similarity(EmbeddingVector({1, 2, 3}), a), Error);
  CHECK_THROWS_AS(EmbeddingVector(std::vector<double>{}), Error);
  CHECK_THROWS_AS(EmbeddingVector({1.0, NAN}), Error);
}

TEST_CASE("hybrid_score examples") {
  const EmbeddingVector a({1, 0}), b({0, 1}), c({0.3, -2.0});
  CHECK(hybrid_score(a, c, 1.0) == cosine_similarity(a, c));
  CHECK(hybrid_score(c, c, 0.3) == doctest::Approx(1.0));
  CHECK(hybrid_score(a, b, 0.5) == doctest::Approx(0.5 / (1.0 + std::sqrt(2.0))));
  CHECK(hybrid_score(a, b, 0.5) == doctest::Approx(0.2071).epsilon(1e-4));
}

TEST_CASE("cosine axioms on random pairs") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t dims = 1 + rng() % 32;
    const EmbeddingVector u(testing::random_vector(rng, dims)), v(testing::random_vector(rng, dims));
    const double s = cosine_similarity(u, v);
    CHECK(s >= -1.0 - 1e-9);
    CHECK(s <= 1.0 + 1e-9);
    CHECK(std::fabs(s - cosine_similarity(v, u)) <= 1e-9);
    const double k = scale(rng);
    std::vector<double> scaled(u.values().begin(), u.values().end());
    for (auto& x : scaled) x *= k;
    CHECK(std::fabs(cosine_similarity(EmbeddingVector(scaled), v) - s) <= 1e-9);
  }
}

TEST_CASE("retrieve basics") {
  ChunkIndex index;
  index.add({"a", 0, "alpha", 1, 0}, EmbeddingVector({1, 0, 0}));
  index.add({"a", 1, "beta", 1, 6}, EmbeddingVector({0, 1, 0}));
  index.add({"b", 0, "gamma", 1, 0}, EmbeddingVector({0, 0, 1}));
  const auto all = retrieve(index, EmbeddingVector({1, 1, 1}), 10, CosineScorer{});
  CHECK(all.size() == 3);
  // Equal scores fall back to (doc_id, index).
  CHECK(chunk_id(*all[0].chunk) == "a#0");
  CHECK(chunk_id(*all[1].chunk) == "a#1");
  CHECK(chunk_id(*all[2].chunk) == "b#0");
  const auto self = retrieve(index, EmbeddingVector({0, 1, 0}), 1, CosineScorer{});
  CHECK(chunk_id(*self[0].chunk) == "a#1");
  CHECK_THROWS_AS(retrieve(ChunkIndex{}, EmbeddingVector({1}), 1, CosineScorer{}), Error);
  CHECK_THROWS_AS(index.add({"c", 0, "x", 1, 0}, EmbeddingVector({1, 2})), Error);
}

TEST_CASE("retrieve equals the full-sort oracle") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dims = 1 + rng() % 32;
    const std::size_t n = 1 + rng() % 64;
    ChunkIndex index;
    std::vector<std::vector<double>> pool;
    for (std::size_t i = 0; i < n; ++i) {
      // Reuse earlier vectors now and then to force exact ties.
      std::vector<double> v = (!pool.empty() && rng() % 4 == 0) ? pool[rng() % pool.size()]
                                                               : testing::random_vector(rng, dims);
      pool.push_back(v);
      index.add({"doc" + std::to_string(rng() % 5), i, "t", 1, 0}, EmbeddingVector(v));
    }
    const EmbeddingVector q(testing::random_vector(rng, dims));
    const std::size_t k = 1 + rng() % (n + 3);
    for (const Scorer scorer : {Scorer{CosineScorer{}}, Scorer{HybridScorer{0.3 + 0.1 * (trial % 5)}}}) {
      const auto got = retrieve(index, q, k, scorer);
      const auto want = oracle(index, q, k, scorer);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(chunk_id(*got[i].chunk) == want[i].first);
        CHECK(std::fabs(got[i].score - want[i].second) <= 1e-12);
      }
    }
  }
}

TEST_CASE("assemble_context greedy budget") {
  ChunkIndex index;
  for (std::size_t i = 0; i < 3; ++i) index.add({"d", i, "chunk " + std::to_string(i), 50, 0}, EmbeddingVector({1.0 + i}));
  std::vector<RetrievalResult> ranked;
  for (const auto& e : index.entries()) ranked.push_back({&e.chunk, 1.0});
  CHECK(assemble_context(ranked, 1000).chunk_ids.size() == 3);
  const auto one = assemble_context(ranked, 50);
  CHECK(one.chunk_ids == std::vector<std::string>{"d#0"});
  CHECK(one.text == "chunk 0");
  const auto two = assemble_context(ranked, 120);
  CHECK(two.chunk_ids == std::vector<std::string>{"d#0", "d#1"});
  CHECK(two.tokens == 100);
  CHECK(two.text == std::string("chunk 0") + std::string(kContextDelimiter) + "chunk 1");
  try {
    assemble_context(ranked, 10);
    FAIL("expected budget_too_small");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::budget_too_small);
  }
}

TEST_CASE("index serialization round-trips") {
  std::mt19937_64 rng(8);
  ChunkIndex index;
  for (std::size_t i = 0; i < 6; ++i) {
    index.add({"doc", i, "text \"" + std::to_string(i) + "\"\n", 3, i * 10},
              EmbeddingVector(testing::random_vector(rng, 7)));
  }
  testing::TempDir tmp;
  save_index(tmp.path() / "index.json", index, {HybridScorer{0.25}, 7});
  IndexDefaults defaults;
  const auto loaded = load_index(tmp.path() / "index.json", &defaults);
  REQUIRE(loaded.size() == index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    CHECK(loaded.entries()[i].chunk == index.entries()[i].chunk);
    CHECK(loaded.entries()[i].vector == index.entries()[i].vector);
  }
  CHECK(defaults.k == 7);
  REQUIRE(std::holds_alternative<HybridScorer>(defaults.scorer));
  CHECK(std::get<HybridScorer>(defaults.scorer).weight == 0.25);
  CHECK_THROWS_AS(parse_index("{\"format\":\"other\"}"), Error);
}

TEST_CASE("hash embeddings") {
  const auto a = hash_embed("delhi food"), b = hash_embed("delhi food"), c = hash_embed("space docking");
  CHECK(a == b);
  CHECK(cosine_similarity(a, b) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, c) < 1.0);
  CHECK(a.dims() == kHashEmbeddingDims);
}
