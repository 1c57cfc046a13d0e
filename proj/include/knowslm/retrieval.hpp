#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "knowslm/document.hpp"
#include "knowslm/embedding.hpp"

namespace knowslm::retrieval {

struct Chunk {
  std::string doc_id;
  std::size_t index = 0;
  // Exact byte span of the body: chunk 0 starts at byte 0, later chunks at
  // their first word, and every chunk runs up to the next word (or the end).
  std::string text;
  std::size_t token_length = 0;
  std::size_t byte_offset = 0;

  bool operator==(const Chunk&) const = default;
};

// Word-window chunking: windows of target_tokens words starting every
// (target_tokens - overlap_tokens) words while the start lies inside the body.
std::vector<Chunk> chunk_document(const KnowledgeDocument& doc, std::size_t target_tokens,
                                  std::size_t overlap_tokens);

// Inverse of chunk_document for one document's chunks, in index order.
std::string reassemble(const std::vector<Chunk>& chunks);

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);
double euclidean_distance(const EmbeddingVector& u, const EmbeddingVector& v);

// weight * cosine + (1 - weight) / (1 + euclidean). A COS-Mix style blend of
// angle and distance; the exact weighting is this library's own choice.
double hybrid_score(const EmbeddingVector& u, const EmbeddingVector& v, double weight);

struct CosineScorer {};
struct HybridScorer {
  double weight = 0.5;
};
using Scorer = std::variant<CosineScorer, HybridScorer>;

double score(const Scorer& scorer, const EmbeddingVector& u, const EmbeddingVector& v);
std::string describe(const Scorer& scorer);

struct IndexEntry {
  Chunk chunk;
  EmbeddingVector vector;
};

class ChunkIndex {
 public:
  ChunkIndex() = default;

  // Single writer during the build phase; read-only afterwards.
  void add(Chunk chunk, EmbeddingVector vector);

  const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
  std::size_t dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

 private:
  std::vector<IndexEntry> entries_;
  std::size_t dims_ = 0;
};

struct RetrievalResult {
  const Chunk* chunk = nullptr;
  double score = 0.0;
};

// Top-k by score, non-increasing; ties broken by (doc_id, index) ascending.
std::vector<RetrievalResult> retrieve(const ChunkIndex& index, const EmbeddingVector& query,
                                      std::size_t k, const Scorer& scorer);

inline constexpr std::string_view kContextDelimiter = "\n-----\n";

struct AssembledContext {
  std::string text;
  std::vector<std::string> chunk_ids;  // "<doc_id>#<index>"
  std::size_t tokens = 0;
};

// Greedy: takes chunks in rank order and stops before the first one that
// would push the total past token_budget.
AssembledContext assemble_context(const std::vector<RetrievalResult>& results,
                                  std::size_t token_budget);

std::string chunk_id(const Chunk& chunk);

struct IndexDefaults {
  Scorer scorer = CosineScorer{};
  std::size_t k = 4;
};

// JSON layout:
//   {"format":"knowslm-index","version":1,"dims":D,"count":N,
//    "defaults":{"scorer":"cosine"|"hybrid","hybrid_weight":w,"k":k},
//    "entries":[{"doc_id","index","byte_offset","token_length","text","vector":[...]}]}
std::string serialize_index(const ChunkIndex& index, const IndexDefaults& defaults);
ChunkIndex parse_index(std::string_view json, IndexDefaults* defaults = nullptr);

void save_index(const std::filesystem::path& path, const ChunkIndex& index,
                const IndexDefaults& defaults);
ChunkIndex load_index(const std::filesystem::path& path, IndexDefaults* defaults = nullptr);

}  // namespace knowslm::retrieval
