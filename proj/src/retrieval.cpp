#include "knowslm/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "knowslm/error.hpp"
#include "knowslm/io.hpp"
#include "knowslm/text.hpp"

namespace knowslm::retrieval {
namespace {

using nlohmann::json;

void check_pair(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dims() != v.dims()) {
    throw Error(ErrorCode::dim_mismatch,
                std::to_string(u.dims()) + " vs " + std::to_string(v.dims()));
  }
}

double norm(const EmbeddingVector& u) {
  double s = 0.0;
  for (double x : u.values()) s += x * x;
  return std::sqrt(s);
}

bool ranks_before(const RetrievalResult& a, const RetrievalResult& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.chunk->doc_id != b.chunk->doc_id) return a.chunk->doc_id < b.chunk->doc_id;
  return a.chunk->index < b.chunk->index;
}

}  // namespace

std::vector<Chunk> chunk_document(const KnowledgeDocument& doc, std::size_t target_tokens,
                                  std::size_t overlap_tokens) {
  if (target_tokens == 0 || overlap_tokens >= target_tokens) {
    throw Error(ErrorCode::invalid_overlap,
                "need 0 <= overlap (" + std::to_string(overlap_tokens) + ") < target (" +
                    std::to_string(target_tokens) + ")");
  }
  validate(doc);
  const auto words = text::word_spans(doc.body);
  const std::size_t n = words.size();
  const std::size_t step = target_tokens - overlap_tokens;

  std::vector<Chunk> chunks;
  for (std::size_t start = 0; start < n; start += step) {
    const std::size_t last = std::min(start + target_tokens, n);  // exclusive
    const std::size_t begin = start == 0 ? 0 : words[start].begin;
    const std::size_t end = last < n ? words[last].begin : doc.body.size();
    chunks.push_back(Chunk{.doc_id = doc.id,
                           .index = chunks.size(),
                           .text = doc.body.substr(begin, end - begin),
                           .token_length = last - start,
                           .byte_offset = begin});
  }
  return chunks;
}

std::string reassemble(const std::vector<Chunk>& chunks) {
  std::string out;
  for (const auto& c : chunks) {
    if (c.byte_offset > out.size()) {
      throw Error(ErrorCode::precondition, "gap between chunks at " + chunk_id(c));
    }
    const std::size_t overlap = out.size() - c.byte_offset;
    if (overlap < c.text.size()) out.append(c.text, overlap);
  }
  return out;
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  check_pair(u, v);
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::zero_vector, "cosine of an all-zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < u.dims(); ++i) dot += u[i] * v[i];
  return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

double euclidean_distance(const EmbeddingVector& u, const EmbeddingVector& v) {
  check_pair(u, v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.dims(); ++i) {
    const double d = u[i] - v[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double hybrid_score(const EmbeddingVector& u, const EmbeddingVector& v, double weight) {
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw Error(ErrorCode::precondition, "hybrid weight must be in [0, 1]");
  }
  const double cos = cosine_similarity(u, v);
  if (weight == 1.0) return cos;
  return weight * cos + (1.0 - weight) * (1.0 / (1.0 + euclidean_distance(u, v)));
}

double score(const Scorer& scorer, const EmbeddingVector& u, const EmbeddingVector& v) {
  if (const auto* h = std::get_if<HybridScorer>(&scorer)) return hybrid_score(u, v, h->weight);
  return cosine_similarity(u, v);
}

std::string describe(const Scorer& scorer) {
  if (const auto* h = std::get_if<HybridScorer>(&scorer)) {
    return "hybrid(" + std::to_string(h->weight) + ")";
  }
  return "cosine";
}

void ChunkIndex::add(Chunk chunk, EmbeddingVector vector) {
  if (entries_.empty()) {
    dims_ = vector.dims();
  } else if (vector.dims() != dims_) {
    throw Error(ErrorCode::dim_mismatch, "index holds " + std::to_string(dims_) +
                                             "-dim vectors, got " +
                                             std::to_string(vector.dims()));
  }
  entries_.push_back(IndexEntry{std::move(chunk), std::move(vector)});
}

std::vector<RetrievalResult> retrieve(const ChunkIndex& index, const EmbeddingVector& query,
                                      std::size_t k, const Scorer& scorer) {
  if (k == 0) throw Error(ErrorCode::precondition, "k must be >= 1");
  if (index.empty()) throw Error(ErrorCode::empty_index, "cannot retrieve from an empty index");

  std::vector<RetrievalResult> scored;
  scored.reserve(index.size());
  for (const auto& e : index.entries()) {
    scored.push_back({&e.chunk, score(scorer, query, e.vector)});
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), ranks_before);
  scored.resize(take);
  return scored;
}

std::string chunk_id(const Chunk& chunk) {
  return chunk.doc_id + "#" + std::to_string(chunk.index);
}

AssembledContext assemble_context(const std::vector<RetrievalResult>& results,
                                  std::size_t token_budget) {
  if (token_budget == 0) throw Error(ErrorCode::precondition, "token_budget must be positive");
  AssembledContext ctx;
  for (const auto& r : results) {
    if (ctx.tokens + r.chunk->token_length > token_budget) break;
    if (!ctx.chunk_ids.empty()) ctx.text.append(kContextDelimiter);
    ctx.text.append(text::trim(r.chunk->text));
    ctx.tokens += r.chunk->token_length;
    ctx.chunk_ids.push_back(chunk_id(*r.chunk));
  }
  if (ctx.chunk_ids.empty()) {
    throw Error(ErrorCode::budget_too_small,
                "no retrieved chunk fits a budget of " + std::to_string(token_budget));
  }
  return ctx;
}

std::string serialize_index(const ChunkIndex& index, const IndexDefaults& defaults) {
  json doc;
  doc["format"] = "knowslm-index";
  doc["version"] = 1;
  doc["dims"] = index.dims();
  doc["count"] = index.size();
  json d;
  if (const auto* h = std::get_if<HybridScorer>(&defaults.scorer)) {
    d["scorer"] = "hybrid";
    d["hybrid_weight"] = h->weight;
  } else {
    d["scorer"] = "cosine";
  }
  d["k"] = defaults.k;
  doc["defaults"] = d;
  json entries = json::array();
  for (const auto& e : index.entries()) {
    entries.push_back({{"doc_id", e.chunk.doc_id},
                       {"index", e.chunk.index},
                       {"byte_offset", e.chunk.byte_offset},
                       {"token_length", e.chunk.token_length},
                       {"text", e.chunk.text},
                       {"vector", std::vector<double>(e.vector.values().begin(),
                                                      e.vector.values().end())}});
  }
  doc["entries"] = std::move(entries);
  return doc.dump(1) + "\n";
}

ChunkIndex parse_index(std::string_view data, IndexDefaults* defaults) {
  ChunkIndex index;
  try {
    const json doc = json::parse(data);
    if (doc.at("format") != "knowslm-index") {
      throw Error(ErrorCode::malformed_index, "not a knowslm index file");
    }
    for (const auto& e : doc.at("entries")) {
      Chunk c{.doc_id = e.at("doc_id").get<std::string>(),
              .index = e.at("index").get<std::size_t>(),
              .text = e.at("text").get<std::string>(),
              .token_length = e.at("token_length").get<std::size_t>(),
              .byte_offset = e.at("byte_offset").get<std::size_t>()};
      index.add(std::move(c), EmbeddingVector(e.at("vector").get<std::vector<double>>()));
    }
    if (doc.at("count").get<std::size_t>() != index.size() ||
        (!index.empty() && doc.at("dims").get<std::size_t>() != index.dims())) {
      throw Error(ErrorCode::malformed_index, "header does not match entries");
    }
    if (defaults != nullptr) {
      const auto& d = doc.at("defaults");
      if (d.at("scorer") == "hybrid") {
        defaults->scorer = HybridScorer{d.at("hybrid_weight").get<double>()};
      } else {
        defaults->scorer = CosineScorer{};
      }
      defaults->k = d.at("k").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_index, e.what());
  }
  return index;
}

void save_index(const std::filesystem::path& path, const ChunkIndex& index,
                const IndexDefaults& defaults) {
  io::write_file(path, serialize_index(index, defaults));
}

ChunkIndex load_index(const std::filesystem::path& path, IndexDefaults* defaults) {
  return parse_index(io::read_file(path), defaults);
}

}  // namespace knowslm::retrieval
