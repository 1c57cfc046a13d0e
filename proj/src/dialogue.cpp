#include "knowslm/dialogue.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "knowslm/error.hpp"
#include "knowslm/parallel.hpp"
#include "knowslm/prompts.hpp"
#include "knowslm/retrieval.hpp"

namespace knowslm::dialogue {
namespace {

using nlohmann::ordered_json;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Length of the UTF-8 sequence at s[i] and whether it counts as a word character.
std::pair<std::size_t, bool> classify(std::string_view s, std::size_t i) {
  const auto b = static_cast<unsigned char>(s[i]);
  if (b < 0x80) return {1, std::isalnum(b) != 0};
  std::size_t len = (b >= 0xF0) ? 4 : (b >= 0xE0) ? 3 : (b >= 0xC0) ? 2 : 1;
  len = std::min(len, s.size() - i);
  // U+0080..U+00BF (Latin-1 punctuation) and U+2000..U+207F (general punctuation).
  if (b == 0xC2) return {len, false};
  if (b == 0xE2 && len >= 2) {
    const auto b1 = static_cast<unsigned char>(s[i + 1]);
    if (b1 == 0x80 || b1 == 0x81) return {len, false};
  }
  return {len, true};
}

std::string normalize_word(std::string_view w) {
  std::string out;
  std::size_t i = 0;
  bool started = false;
  while (i < w.size()) {
    auto [len, word] = classify(w, i);
    if (word) {
      started = true;
      out.append(w.substr(i, len));
    } else if (started) {
      break;
    }
    i += len;
  }
  return text::to_lower_ascii(out);
}

struct Mark {
  std::size_t pos;
  std::size_t len;
  bool user;
};

std::vector<Mark> find_marks(std::string_view raw, const TranscriptMarkers& m) {
  const bool user_first = m.user.size() >= m.assistant.size();
  const std::string_view longer = user_first ? m.user : m.assistant;
  const std::string_view shorter = user_first ? m.assistant : m.user;
  std::vector<Mark> marks;
  std::size_t i = 0;
  while (i < raw.size()) {
    if (i == 0 || is_space(raw[i - 1])) {
      auto rest = raw.substr(i);
      if (rest.starts_with(longer)) {
        marks.push_back({i, longer.size(), user_first});
        i += longer.size();
        continue;
      }
      if (rest.starts_with(shorter)) {
        marks.push_back({i, shorter.size(), !user_first});
        i += shorter.size();
        continue;
      }
    }
    ++i;
  }
  return marks;
}

ordered_json message(std::string_view role, const std::string& content) {
  return ordered_json{{"role", role}, {"content", content}};
}

std::string require_text(const ordered_json& msg, std::string_view role, std::size_t line) {
  if (!msg.is_object() || msg.value("role", "") != role || !msg.contains("content") ||
      !msg["content"].is_string()) {
    throw Error(ErrorCode::malformed_dataset,
                "line " + std::to_string(line) + ": expected a " + std::string(role) + " message");
  }
  return msg["content"].get<std::string>();
}

}  // namespace

TranscriptParse separate_transcript(std::string_view raw, const TranscriptMarkers& markers) {
  if (markers.user.empty() || markers.assistant.empty() || markers.user == markers.assistant) {
    throw Error(ErrorCode::precondition, "transcript markers must be distinct and non-empty");
  }
  const auto marks = find_marks(raw, markers);
  if (marks.empty()) {
    throw Error(ErrorCode::no_markers_found,
                "neither '" + markers.user + "' nor '" + markers.assistant + "' occurs");
  }
  TranscriptParse out;
  std::optional<std::string> pending_user;
  bool last_was_assistant = false;
  for (std::size_t k = 0; k < marks.size(); ++k) {
    const std::size_t begin = marks[k].pos + marks[k].len;
    const std::size_t end = k + 1 < marks.size() ? marks[k + 1].pos : raw.size();
    std::string body(text::trim(raw.substr(begin, end - begin)));
    if (marks[k].user) {
      if (pending_user) ++out.dropped_turns;
      pending_user = std::move(body);
      last_was_assistant = false;
      continue;
    }
    if (!pending_user) {
      if (last_was_assistant) {
        throw Error(ErrorCode::malformed_alternation,
                    "two assistant turns without a user turn at byte " +
                        std::to_string(marks[k].pos));
      }
      ++out.dropped_turns;  // leading assistant turn
      last_was_assistant = true;
      continue;
    }
    if (pending_user->empty() || body.empty()) {
      out.dropped_turns += 2;
    } else {
      out.pairs.push_back({std::move(*pending_user), std::move(body)});
    }
    pending_user.reset();
    last_was_assistant = true;
  }
  if (pending_user) ++out.dropped_turns;
  if (out.dropped_turns > 0) {
    spdlog::warn("transcript: dropped {} unmatched or empty turn(s)", out.dropped_turns);
  }
  return out;
}

std::string serialize_transcript(const std::vector<TurnPair>& pairs,
                                 const TranscriptMarkers& markers) {
  std::string out;
  for (const auto& p : pairs) {
    if (!out.empty()) out.push_back('\n');
    out += markers.user + " " + p.user_text + " " + markers.assistant + " " + p.assistant_text;
  }
  return out;
}

std::string starter_token(std::string_view question) {
  const auto words = text::split_whitespace(question);
  if (words.empty()) throw Error(ErrorCode::empty_question, "question is empty");
  for (auto w : words) {
    auto token = normalize_word(w);
    if (!token.empty()) return token;
  }
  return {};
}

DialogueRecord make_record(std::string question, std::string answer, LanguageMode mode,
                           std::string source_doc_id, std::optional<std::string> style_prefix) {
  if (text::is_blank(question)) throw Error(ErrorCode::empty_question, "question is empty");
  if (text::is_blank(answer)) throw Error(ErrorCode::empty_completion, "answer is empty");
  DialogueRecord r;
  r.starter_token = starter_token(question);
  r.question = std::move(question);
  r.answer = std::move(answer);
  r.style_prefix = std::move(style_prefix);
  r.language_mode = mode;
  r.source_doc_id = std::move(source_doc_id);
  return r;
}

DialogueRecord apply_style_prefix(const DialogueRecord& record, std::string_view prefix) {
  if (prefix.empty()) throw Error(ErrorCode::precondition, "style prefix is empty");
  DialogueRecord out = record;
  out.style_prefix = std::string(prefix);
  return out;
}

std::size_t record_tokens(const DialogueRecord& record, const text::TokenCounter& counter) {
  std::size_t n = counter(record.question) + counter(record.answer);
  if (record.style_prefix) n += counter(*record.style_prefix);
  return n;
}

DialogueDataset make_dataset(std::vector<DialogueRecord> records,
                             const text::TokenCounter& counter,
                             std::map<std::string, std::string> metadata) {
  DialogueDataset ds;
  for (const auto& r : records) ds.token_count += record_tokens(r, counter);
  ds.records = std::move(records);
  ds.metadata = std::move(metadata);
  return ds;
}

std::size_t starter_quota(double max_fraction, std::size_t kept) {
  // The epsilon keeps e.g. 0.3 * 10 from rounding up to 4.
  return static_cast<std::size_t>(std::ceil(max_fraction * static_cast<double>(kept) - 1e-9));
}

FilterResult diversity_filter(const std::vector<DialogueRecord>& records, double max_fraction) {
  if (!(max_fraction > 0.0 && max_fraction <= 1.0)) {
    throw Error(ErrorCode::precondition, "max_fraction must be in (0, 1]");
  }
  FilterResult out;
  std::unordered_set<std::string> seen;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    if (!seen.insert(r.question).second) {
      out.rejected.push_back(r);
      ++out.duplicates;
      continue;
    }
    auto& c = counts[r.starter_token];
    if (c + 1 > starter_quota(max_fraction, out.kept.size() + 1)) {
      out.rejected.push_back(r);
      ++out.over_quota;
      continue;
    }
    ++c;
    out.kept.push_back(r);
  }
  return out;
}

std::string export_dataset(const DialogueDataset& dataset, DatasetFormat format) {
  if (dataset.records.empty()) throw Error(ErrorCode::empty_dataset, "nothing to export");
  std::string out;
  if (format == DatasetFormat::qa_csv) {
    out = "question,answer\n";
    for (const auto& r : dataset.records) {
      out += text::csv_field(r.question) + "," + text::csv_field(r.answer) + "\n";
    }
    return out;
  }
  for (const auto& r : dataset.records) {
    ordered_json messages = ordered_json::array();
    if (r.style_prefix) messages.push_back(message("system", *r.style_prefix));
    messages.push_back(message("user", r.question));
    messages.push_back(message("assistant", r.answer));
    ordered_json line = {{"messages", std::move(messages)},
                         {"language_mode", to_string(r.language_mode)},
                         {"source_doc_id", r.source_doc_id}};
    out += line.dump() + "\n";
  }
  return out;
}

DialogueDataset import_dataset(std::string_view data, DatasetFormat format,
                               const ImportDefaults& defaults, const text::TokenCounter& counter) {
  std::vector<DialogueRecord> records;
  if (format == DatasetFormat::qa_csv) {
    const auto rows = text::parse_csv(data);
    if (rows.empty() || rows[0] != std::vector<std::string>{"question", "answer"}) {
      throw Error(ErrorCode::malformed_dataset, "qa-csv must start with header 'question,answer'");
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != 2) {
        throw Error(ErrorCode::malformed_dataset,
                    "row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                        " fields");
      }
      records.push_back(make_record(rows[i][0], rows[i][1], defaults.language_mode,
                                    defaults.source_doc_id));
    }
    return make_dataset(std::move(records), counter);
  }

  const auto lines = text::split_lines(data);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (text::is_blank(lines[n])) continue;
    ordered_json obj;
    try {
      obj = ordered_json::parse(lines[n]);
    } catch (const ordered_json::exception& e) {
      throw Error(ErrorCode::malformed_dataset, "line " + std::to_string(n + 1) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("messages") || !obj["messages"].is_array()) {
      throw Error(ErrorCode::malformed_dataset,
                  "line " + std::to_string(n + 1) + ": missing messages array");
    }
    const auto& msgs = obj["messages"];
    std::optional<std::string> prefix;
    std::size_t at = 0;
    if (msgs.size() == 3) prefix = require_text(msgs[at++], "system", n + 1);
    if (msgs.size() - at != 2) {
      throw Error(ErrorCode::malformed_dataset,
                  "line " + std::to_string(n + 1) + ": expected 2 or 3 messages");
    }
    auto question = require_text(msgs[at], "user", n + 1);
    auto answer = require_text(msgs[at + 1], "assistant", n + 1);
    LanguageMode mode = defaults.language_mode;
    if (obj.contains("language_mode")) {
      auto parsed = parse_language_mode(obj["language_mode"].get<std::string>());
      if (!parsed) throw Error(ErrorCode::malformed_dataset, "unknown language_mode");
      mode = *parsed;
    }
    std::string doc_id = obj.value("source_doc_id", defaults.source_doc_id);
    records.push_back(make_record(std::move(question), std::move(answer), mode,
                                  std::move(doc_id), std::move(prefix)));
  }
  return make_dataset(std::move(records), counter);
}

provider::ChatRequest question_request(std::string_view context, LanguageMode mode,
                                       std::optional<std::string_view> starter_hint,
                                       std::optional<std::int64_t> seed) {
  std::string user = std::string(prompts::kLanguageField) + std::string(to_string(mode)) + "\n";
  if (starter_hint && !text::is_blank(*starter_hint)) {
    user += std::string(prompts::kStarterField) + std::string(text::trim(*starter_hint)) + "\n";
  }
  user += std::string(prompts::kContextHeader) + std::string(context);
  provider::ChatRequest req;
  req.messages = {{provider::Role::system, std::string(prompts::kQuestionInstruction)},
                  {provider::Role::user, std::move(user)}};
  req.temperature = 0.9;
  req.max_tokens = 96;
  req.seed = seed;
  return req;
}

provider::ChatRequest answer_request(std::string_view question, std::string_view context,
                                     LanguageMode mode, std::optional<std::int64_t> seed) {
  std::string user = std::string(prompts::kLanguageField) + std::string(to_string(mode)) + "\n" +
                     std::string(prompts::kQuestionHeader) + std::string(question) + "\n" +
                     std::string(prompts::kContextHeader) + std::string(context);
  provider::ChatRequest req;
  req.messages = {{provider::Role::system, std::string(prompts::kAnswerInstruction)},
                  {provider::Role::user, std::move(user)}};
  req.temperature = 0.7;
  req.max_tokens = 160;
  req.seed = seed;
  return req;
}

std::string synthesize_question(std::string_view context, LanguageMode mode,
                                std::optional<std::string_view> starter_hint,
                                provider::ChatProvider& provider, std::optional<std::int64_t> seed,
                                provider::Usage* usage) {
  if (text::is_blank(context)) throw Error(ErrorCode::empty_context, "context is empty");
  auto result = provider.chat_complete(question_request(context, mode, starter_hint, seed));
  if (usage) *usage += result.usage;
  auto q = text::trim(result.text);
  if (q.empty()) throw Error(ErrorCode::empty_completion, "provider returned an empty question");
  return std::string(q);
}

std::string synthesize_answer(std::string_view question, std::string_view context,
                              LanguageMode mode, provider::ChatProvider& provider,
                              std::optional<std::int64_t> seed, provider::Usage* usage) {
  if (text::is_blank(question)) throw Error(ErrorCode::empty_question, "question is empty");
  if (text::is_blank(context)) throw Error(ErrorCode::empty_context, "context is empty");
  auto result = provider.chat_complete(answer_request(question, context, mode, seed));
  if (usage) *usage += result.usage;
  auto a = text::trim(result.text);
  if (a.empty()) throw Error(ErrorCode::empty_completion, "provider returned an empty answer");
  return std::string(a);
}

bool is_two_line_answer(std::string_view answer) {
  const auto lines = text::split_lines(text::trim(answer));
  if (lines.size() != 2) return false;
  if (text::is_blank(lines[0]) || text::is_blank(lines[1])) return false;
  return text::trim(lines[1]).ends_with('?');
}

SynthesisOutput synthesize_dataset(const std::vector<KnowledgeDocument>& documents,
                                   const SynthesisConfig& config, provider::ChatProvider& provider,
                                   const text::TokenCounter& counter) {
  struct Task {
    const KnowledgeDocument* doc;
    std::string context;
    std::optional<std::string> hint;
    std::int64_t seed;
  };
  struct Generated {
    std::optional<DialogueRecord> record;
    provider::Usage usage;
    bool two_line = true;
  };

  SynthesisOutput out;
  std::set<std::string> ids;
  std::vector<Generated> generated;
  std::vector<Task> tasks;

  auto flush_tasks = [&] {
    auto results = parallel_map(tasks.size(), config.parallelism, [&](std::size_t i) {
      const Task& t = tasks[i];
      Generated g;
      auto q = synthesize_question(t.context, t.doc->language_mode,
                                   t.hint ? std::optional<std::string_view>(*t.hint) : std::nullopt,
                                   provider, t.seed, &g.usage);
      auto a = synthesize_answer(q, t.context, t.doc->language_mode, provider, t.seed, &g.usage);
      g.two_line = is_two_line_answer(a);
      g.record = make_record(std::move(q), std::move(a), t.doc->language_mode, t.doc->id);
      return g;
    });
    for (auto& g : results) generated.push_back(std::move(g));
    tasks.clear();
  };

  for (const auto& doc : documents) {
    validate(doc);
    if (!ids.insert(doc.id).second) {
      throw Error(ErrorCode::precondition, "duplicate document id '" + doc.id + "'");
    }
    if (doc.source_tag == "interview" || doc.source_tag == "transcript") {
      auto parsed = separate_transcript(doc.body, config.markers);
      out.report.dropped_turns += parsed.dropped_turns;
      out.report.transcript_pairs += parsed.pairs.size();
      for (auto& p : parsed.pairs) {
        Generated g;
        g.record = make_record(std::move(p.user_text), std::move(p.assistant_text),
                               doc.language_mode, doc.id);
        generated.push_back(std::move(g));
      }
      continue;
    }
    const auto chunks = retrieval::chunk_document(doc, config.context_tokens, config.context_overlap);
    const std::size_t slots = config.starter_hints.size() + 1;
    for (std::size_t i = 0; i < config.questions_per_document; ++i) {
      Task t{.doc = &doc, .context = std::string(text::trim(chunks[i % chunks.size()].text))};
      if (const std::size_t s = i % slots; s < config.starter_hints.size()) {
        t.hint = config.starter_hints[s];
      }
      t.seed = static_cast<std::int64_t>(
          text::fnv1a64(std::to_string(config.seed) + "/" + doc.id + "/" + std::to_string(i)) >> 1);
      tasks.push_back(std::move(t));
    }
    flush_tasks();
  }

  std::vector<DialogueRecord> records;
  for (auto& g : generated) {
    out.report.usage += g.usage;
    if (!g.two_line) ++out.report.two_line_violations;
    DialogueRecord r = std::move(*g.record);
    if (auto it = config.prefixes.find(r.source_doc_id); it != config.prefixes.end()) {
      r = apply_style_prefix(r, it->second);
    }
    records.push_back(std::move(r));
  }
  out.report.generated = records.size() - out.report.transcript_pairs;
  if (out.report.two_line_violations > 0) {
    spdlog::warn("synthesis: {} answer(s) are not in the two-line format",
                 out.report.two_line_violations);
  }

  auto filtered = diversity_filter(records, config.max_fraction);
  out.report.duplicates_rejected = filtered.duplicates;
  out.report.quota_rejected = filtered.over_quota;
  out.rejected = std::move(filtered.rejected);

  std::map<std::string, std::string> metadata;
  metadata["seed"] = std::to_string(config.seed);
  metadata["question_prompt"] = std::string(prompts::kQuestionInstruction);
  metadata["answer_prompt"] = std::string(prompts::kAnswerInstruction);
  std::vector<std::string> doc_ids;
  for (const auto& d : documents) doc_ids.push_back(d.id);
  metadata["documents"] = text::join(doc_ids, ",");
  out.dataset = make_dataset(std::move(filtered.kept), counter, std::move(metadata));
  return out;
}

}  // namespace knowslm::dialogue
