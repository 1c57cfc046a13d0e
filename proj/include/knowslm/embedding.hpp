#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace knowslm::retrieval {

inline constexpr std::size_t kHashEmbeddingDims = 256;

// Fixed-length vector of finite values. Construction rejects empty or
// non-finite input.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dims() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

// Offline embedder: each lowercased term is hashed with 64-bit FNV-1a and
// adds 1.0 to bucket (hash % dims). Stable across platforms and runs.
EmbeddingVector hash_embed(std::string_view text, std::size_t dims = kHashEmbeddingDims);

}  // namespace knowslm::retrieval
