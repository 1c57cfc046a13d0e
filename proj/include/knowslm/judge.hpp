#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "knowslm/provider.hpp"

namespace knowslm::judge {

enum class Criterion { knowledge, conversational_quality, conciseness };

// Fixed evaluation order for ledgers and charts.
inline constexpr std::array<Criterion, 3> kAllCriteria = {
    Criterion::knowledge, Criterion::conversational_quality, Criterion::conciseness};

std::string_view to_string(Criterion c);    // snake_case id
std::string_view display_name(Criterion c);  // "Conversational Quality"
std::optional<Criterion> parse_criterion(std::string_view s);

struct CandidateResponse {
  std::string system_id;  // "base", "finetuned", "rag" or a custom label
  std::string text;
};

enum class Winner { A, B, Tie };
std::string_view to_string(Winner w);

struct Verdict {
  Winner winner = Winner::Tie;
  std::string rationale;
  std::string raw_completion;
  std::optional<std::string> error;  // set when the completion had no verdict token
};

enum class Resolved { sys1, sys2, tie };
std::string_view to_string(Resolved r);

// forward shows sys1 as A; reversed shows sys1 as B.
Resolved resolve(Winner forward, Winner reversed);

struct DebiasedVerdict {
  Verdict forward;
  Verdict reversed;
  Resolved resolved_winner = Resolved::tie;
  Criterion criterion = Criterion::knowledge;
  std::optional<std::string> annotation;
};

struct LedgerEntry {
  std::string prompt_id;
  Criterion criterion = Criterion::knowledge;
  DebiasedVerdict verdict;
};

struct VerdictLedger {
  std::pair<std::string, std::string> systems;
  std::vector<LedgerEntry> entries;
};

// The judge template with every slot filled, followed by one line naming the
// criterion. Throws Error(missing_field) for an empty query, response or
// knowledge source; context may be empty.
std::string render_judge_prompt(std::string_view query, std::string_view response_a,
                                std::string_view response_b, std::string_view knowledge_source,
                                std::string_view context, Criterion criterion);

std::string criterion_line(Criterion c);

// Last [[A]]/[[B]]/[[C]] wins; [[C]] is a tie. Throws Error(no_verdict_token).
Verdict parse_verdict(std::string_view completion);

// Two judge calls with swapped presentation order.
DebiasedVerdict judge_debiased(provider::ChatProvider& judge, std::string_view query,
                               const CandidateResponse& sys1, const CandidateResponse& sys2,
                               std::string_view knowledge_source, std::string_view context,
                               Criterion criterion, std::optional<std::int64_t> seed = std::nullopt);

struct EvalPrompt {
  std::string id;
  std::string text;
};

// system id -> prompt id -> response text
using SystemOutputs = std::map<std::string, std::map<std::string, std::string>>;

struct SuiteOptions {
  std::size_t parallelism = 4;
  std::int64_t seed = 0;
};

// |prompts| x |criteria| entries in prompt order, then the fixed criterion
// order. Missing outputs fail with Error(missing_output) before any call.
VerdictLedger evaluate_suite(provider::ChatProvider& judge, const std::vector<EvalPrompt>& prompts,
                             const SystemOutputs& outputs,
                             const std::pair<std::string, std::string>& pair,
                             const std::set<Criterion>& criteria,
                             std::string_view knowledge_source,
                             const std::map<std::string, std::string>& contexts,
                             const SuiteOptions& options = {});

// One JSON object per line: prompt_id, criterion, systems, forward/reversed
// (presentation order, winner, rationale, raw completion), resolved winner.
std::string serialize_ledger(const VerdictLedger& ledger);
VerdictLedger parse_ledger(std::string_view jsonl);

}  // namespace knowslm::judge
