#include "knowslm/embedding.hpp"

#include <cmath>

#include "knowslm/error.hpp"
#include "knowslm/text.hpp"

namespace knowslm::retrieval {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorCode::precondition, "embedding has zero dims");
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::precondition, "embedding value is not finite");
  }
}

EmbeddingVector hash_embed(std::string_view text, std::size_t dims) {
  if (dims == 0) throw Error(ErrorCode::precondition, "dims must be positive");
  std::vector<double> v(dims, 0.0);
  for (const auto& t : text::terms(text)) {
    v[text::fnv1a64(t) % dims] += 1.0;
  }
  return EmbeddingVector(std::move(v));
}

}  // namespace knowslm::retrieval
