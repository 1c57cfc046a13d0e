#include "knowslm/document.hpp"

#include "knowslm/error.hpp"
#include "knowslm/text.hpp"

namespace knowslm {

std::string_view to_string(LanguageMode mode) {
  return mode == LanguageMode::hinglish ? "hinglish" : "english";
}

std::optional<LanguageMode> parse_language_mode(std::string_view s) {
  if (s == "english") return LanguageMode::english;
  if (s == "hinglish") return LanguageMode::hinglish;
  return std::nullopt;
}

void validate(const KnowledgeDocument& doc) {
  if (doc.id.empty()) throw Error(ErrorCode::precondition, "document id is empty");
  if (text::is_blank(doc.body)) {
    throw Error(ErrorCode::precondition, "document '" + doc.id + "' has an empty body");
  }
}

}  // namespace knowslm
