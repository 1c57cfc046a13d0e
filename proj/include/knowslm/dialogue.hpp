#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "knowslm/document.hpp"
#include "knowslm/provider.hpp"
#include "knowslm/text.hpp"

namespace knowslm::dialogue {

struct TurnPair {
  std::string user_text;
  std::string assistant_text;

  bool operator==(const TurnPair&) const = default;
};

struct TranscriptMarkers {
  std::string user = "Q:";
  std::string assistant = "A:";
};

struct TranscriptParse {
  std::vector<TurnPair> pairs;
  std::size_t dropped_turns = 0;  // unmatched user turns and empty turns
};

// Splits a transcript on the two markers (recognized at the start of the text
// or after whitespace). Text before the first marker is ignored.
// Throws Error(no_markers_found) / Error(malformed_alternation).
TranscriptParse separate_transcript(std::string_view raw, const TranscriptMarkers& markers = {});

std::string serialize_transcript(const std::vector<TurnPair>& pairs,
                                 const TranscriptMarkers& markers = {});

// First whitespace-delimited word, lowercased, cut at the first punctuation
// after skipping leading punctuation. "¿How" -> "how".
std::string starter_token(std::string_view question);

struct DialogueRecord {
  std::string question;
  std::string answer;
  std::optional<std::string> style_prefix;
  LanguageMode language_mode = LanguageMode::english;
  std::string source_doc_id;
  std::string starter_token;

  bool operator==(const DialogueRecord&) const = default;
};

DialogueRecord make_record(std::string question, std::string answer, LanguageMode mode,
                           std::string source_doc_id,
                           std::optional<std::string> style_prefix = std::nullopt);

DialogueRecord apply_style_prefix(const DialogueRecord& record, std::string_view prefix);

struct DialogueDataset {
  std::vector<DialogueRecord> records;
  std::size_t token_count = 0;
  std::map<std::string, std::string> metadata;  // run provenance, not compared

  bool operator==(const DialogueDataset& o) const {
    return records == o.records && token_count == o.token_count;
  }
};

// Tokens of the full training text: prefix + question + answer.
std::size_t record_tokens(const DialogueRecord& record, const text::TokenCounter& counter);

DialogueDataset make_dataset(std::vector<DialogueRecord> records,
                             const text::TokenCounter& counter = text::default_token_counter(),
                             std::map<std::string, std::string> metadata = {});

struct FilterResult {
  std::vector<DialogueRecord> kept;
  std::vector<DialogueRecord> rejected;
  std::size_t duplicates = 0;
  std::size_t over_quota = 0;
};

// Largest count a starter may reach among `kept` records.
std::size_t starter_quota(double max_fraction, std::size_t kept);

// Single greedy pass: exact-duplicate questions are rejected (first kept);
// a record is kept only if its starter stays within quota after adding it.
FilterResult diversity_filter(const std::vector<DialogueRecord>& records, double max_fraction);

enum class DatasetFormat { qa_csv, role_records };

// qa-csv: header `question,answer`, RFC-4180 quoting, CRLF-free "\n" rows.
// role-records: one JSON object per line:
//   {"messages":[{"role":"system","content":prefix}?,{"role":"user",...},
//                {"role":"assistant",...}],"language_mode":...,"source_doc_id":...}
std::string export_dataset(const DialogueDataset& dataset, DatasetFormat format);

// Defaults fill fields a format does not carry (qa-csv carries question/answer only).
struct ImportDefaults {
  LanguageMode language_mode = LanguageMode::english;
  std::string source_doc_id;
};

DialogueDataset import_dataset(std::string_view data, DatasetFormat format,
                               const ImportDefaults& defaults = {},
                               const text::TokenCounter& counter = text::default_token_counter());

// ---------------------------------------------------------------------------
// Synthesis through a chat provider.

provider::ChatRequest question_request(std::string_view context, LanguageMode mode,
                                       std::optional<std::string_view> starter_hint,
                                       std::optional<std::int64_t> seed = std::nullopt);
provider::ChatRequest answer_request(std::string_view question, std::string_view context,
                                     LanguageMode mode,
                                     std::optional<std::int64_t> seed = std::nullopt);

std::string synthesize_question(std::string_view context, LanguageMode mode,
                                std::optional<std::string_view> starter_hint,
                                provider::ChatProvider& provider,
                                std::optional<std::int64_t> seed = std::nullopt,
                                provider::Usage* usage = nullptr);

std::string synthesize_answer(std::string_view question, std::string_view context,
                              LanguageMode mode, provider::ChatProvider& provider,
                              std::optional<std::int64_t> seed = std::nullopt,
                              provider::Usage* usage = nullptr);

// Two non-empty lines, the second ending in '?'.
bool is_two_line_answer(std::string_view answer);

struct SynthesisConfig {
  std::size_t questions_per_document = 20;
  double max_fraction = 0.3;
  std::vector<std::string> starter_hints;  // cycled, with one unhinted slot per cycle
  std::map<std::string, std::string> prefixes;  // doc id -> style prefix
  std::size_t context_tokens = 64;
  std::size_t context_overlap = 8;
  std::int64_t seed = 0;
  std::size_t parallelism = 4;
  TranscriptMarkers markers;
};

struct SynthesisReport {
  std::size_t generated = 0;
  std::size_t transcript_pairs = 0;
  std::size_t dropped_turns = 0;
  std::size_t duplicates_rejected = 0;
  std::size_t quota_rejected = 0;
  std::size_t two_line_violations = 0;
  provider::Usage usage;
};

struct SynthesisOutput {
  DialogueDataset dataset;
  std::vector<DialogueRecord> rejected;
  SynthesisReport report;
};

// Documents tagged "interview" or "transcript" are separated into turn pairs;
// other documents are chunked and used as question/answer contexts. Output
// order follows (document order, task index) regardless of completion order.
SynthesisOutput synthesize_dataset(const std::vector<KnowledgeDocument>& documents,
                                   const SynthesisConfig& config, provider::ChatProvider& provider,
                                   const text::TokenCounter& counter = text::default_token_counter());

}  // namespace knowslm::dialogue
