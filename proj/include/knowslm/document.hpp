#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace knowslm {

enum class LanguageMode { english, hinglish };

std::string_view to_string(LanguageMode mode);
std::optional<LanguageMode> parse_language_mode(std::string_view s);

// A unit of source knowledge: an article, an interview transcript, notes.
struct KnowledgeDocument {
  std::string id;
  std::string title;
  std::string body;
  std::string source_tag;  // free-form origin label, e.g. "article", "interview"
  LanguageMode language_mode = LanguageMode::english;
};

// Throws Error(precondition) on an empty id or blank body.
void validate(const KnowledgeDocument& doc);

}  // namespace knowslm
