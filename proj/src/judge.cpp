#include "knowslm/judge.hpp"

#include <spdlog/spdlog.h>

#include <nlohmann/json.hpp>

#include "knowslm/error.hpp"
#include "knowslm/parallel.hpp"
#include "knowslm/prompts.hpp"
#include "knowslm/text.hpp"

namespace knowslm::judge {
namespace {

using nlohmann::ordered_json;

constexpr std::array<std::string_view, 3> kTokens = {"[[A]]", "[[B]]", "[[C]]"};

bool favors_sys1(Winner forward_or_reversed, bool reversed) {
  return reversed ? forward_or_reversed == Winner::B : forward_or_reversed == Winner::A;
}

Verdict ask(provider::ChatProvider& judge, const std::string& prompt,
            std::optional<std::int64_t> seed) {
  provider::ChatRequest req;
  req.messages = {{provider::Role::user, prompt}};
  req.temperature = 0.0;
  req.max_tokens = 256;
  req.seed = seed;
  auto result = judge.chat_complete(req);
  try {
    return parse_verdict(result.text);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::no_verdict_token) throw;
    Verdict v;
    v.winner = Winner::Tie;
    v.raw_completion = result.text;
    v.rationale = std::string(text::trim(result.text));
    v.error = e.what();
    return v;
  }
}

ordered_json verdict_json(const Verdict& v, const std::string& a, const std::string& b) {
  ordered_json j = {{"order", {a, b}},
                    {"winner", to_string(v.winner)},
                    {"rationale", v.rationale},
                    {"raw", v.raw_completion}};
  if (v.error) j["error"] = *v.error;
  return j;
}

Verdict verdict_from_json(const ordered_json& j) {
  Verdict v;
  const auto w = j.at("winner").get<std::string>();
  v.winner = w == "A" ? Winner::A : w == "B" ? Winner::B : Winner::Tie;
  v.rationale = j.at("rationale").get<std::string>();
  v.raw_completion = j.at("raw").get<std::string>();
  if (j.contains("error")) v.error = j["error"].get<std::string>();
  return v;
}

}  // namespace

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::knowledge: return "knowledge";
    case Criterion::conversational_quality: return "conversational_quality";
    case Criterion::conciseness: return "conciseness";
  }
  return "knowledge";
}

std::string_view display_name(Criterion c) {
  switch (c) {
    case Criterion::knowledge: return "Knowledge";
    case Criterion::conversational_quality: return "Conversational Quality";
    case Criterion::conciseness: return "Conciseness";
  }
  return "Knowledge";
}

std::optional<Criterion> parse_criterion(std::string_view s) {
  for (auto c : kAllCriteria) {
    if (s == to_string(c)) return c;
  }
  return std::nullopt;
}

std::string_view to_string(Winner w) {
  switch (w) {
    case Winner::A: return "A";
    case Winner::B: return "B";
    case Winner::Tie: return "C";
  }
  return "C";
}

std::string_view to_string(Resolved r) {
  switch (r) {
    case Resolved::sys1: return "sys1";
    case Resolved::sys2: return "sys2";
    case Resolved::tie: return "tie";
  }
  return "tie";
}

Resolved resolve(Winner forward, Winner reversed) {
  if (forward == Winner::Tie || reversed == Winner::Tie) return Resolved::tie;
  const bool f1 = favors_sys1(forward, false);
  const bool r1 = favors_sys1(reversed, true);
  if (f1 && r1) return Resolved::sys1;
  if (!f1 && !r1) return Resolved::sys2;
  return Resolved::tie;
}

std::string criterion_line(Criterion c) {
  return "Judge the two responses on this criterion only: " + std::string(display_name(c)) + ".\n";
}

std::string render_judge_prompt(std::string_view query, std::string_view response_a,
                                std::string_view response_b, std::string_view knowledge_source,
                                std::string_view context, Criterion criterion) {
  const std::pair<std::string_view, std::string_view> slots[] = {
      {"{KNOWLEDGE SOURCE}", knowledge_source},
      {"{CONTEXT}", context},
      {"{PROMPT}", query},
      {"{RESPONSE A}", response_a},
      {"{RESPONSE B}", response_b},
  };
  for (const auto& [name, value] : slots) {
    if (name != "{CONTEXT}" && text::is_blank(value)) {
      throw Error(ErrorCode::missing_field, std::string(name) + " is empty");
    }
  }
  // Single left-to-right pass so braces inside substituted values stay literal.
  const std::string_view tpl = prompts::kJudgeTemplate;
  std::string out;
  std::size_t i = 0;
  while (i < tpl.size()) {
    bool replaced = false;
    if (tpl[i] == '{') {
      for (const auto& [name, value] : slots) {
        if (tpl.substr(i).starts_with(name)) {
          out.append(value);
          i += name.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tpl[i++]);
  }
  out += criterion_line(criterion);
  return out;
}

Verdict parse_verdict(std::string_view completion) {
  std::size_t best_pos = std::string_view::npos;
  std::size_t best_token = 0;
  std::size_t kinds = 0;
  for (std::size_t t = 0; t < kTokens.size(); ++t) {
    const auto pos = completion.rfind(kTokens[t]);
    if (pos == std::string_view::npos) continue;
    ++kinds;
    if (best_pos == std::string_view::npos || pos > best_pos) {
      best_pos = pos;
      best_token = t;
    }
  }
  if (best_pos == std::string_view::npos) {
    throw Error(ErrorCode::no_verdict_token, "completion has no [[A]], [[B]] or [[C]]");
  }
  if (kinds > 1) spdlog::debug("judge completion names several verdicts; the last one wins");
  Verdict v;
  v.winner = best_token == 0 ? Winner::A : best_token == 1 ? Winner::B : Winner::Tie;
  std::string rest(completion.substr(0, best_pos));
  rest.append(completion.substr(best_pos + kTokens[best_token].size()));
  v.rationale = std::string(text::trim(rest));
  v.raw_completion = std::string(completion);
  return v;
}

DebiasedVerdict judge_debiased(provider::ChatProvider& judge, std::string_view query,
                               const CandidateResponse& sys1, const CandidateResponse& sys2,
                               std::string_view knowledge_source, std::string_view context,
                               Criterion criterion, std::optional<std::int64_t> seed) {
  if (sys1.system_id == sys2.system_id) {
    throw Error(ErrorCode::precondition, "cannot compare system '" + sys1.system_id + "' to itself");
  }
  DebiasedVerdict out;
  out.criterion = criterion;
  out.forward = ask(judge,
                    render_judge_prompt(query, sys1.text, sys2.text, knowledge_source, context,
                                        criterion),
                    seed);
  out.reversed = ask(judge,
                     render_judge_prompt(query, sys2.text, sys1.text, knowledge_source, context,
                                         criterion),
                     seed);
  out.resolved_winner = resolve(out.forward.winner, out.reversed.winner);
  if (out.forward.error || out.reversed.error) {
    out.resolved_winner = Resolved::tie;
    out.annotation = std::string("malformed judge completion in ") +
                     (out.forward.error ? (out.reversed.error ? "both orders" : "forward order")
                                        : "reversed order");
  }
  return out;
}

VerdictLedger evaluate_suite(provider::ChatProvider& judge, const std::vector<EvalPrompt>& prompts,
                             const SystemOutputs& outputs,
                             const std::pair<std::string, std::string>& pair,
                             const std::set<Criterion>& criteria,
                             std::string_view knowledge_source,
                             const std::map<std::string, std::string>& contexts,
                             const SuiteOptions& options) {
  if (pair.first == pair.second) {
    throw Error(ErrorCode::precondition, "systems pair must name two different systems");
  }
  auto lookup = [&](const std::string& system, const std::string& prompt_id) -> const std::string& {
    auto s = outputs.find(system);
    if (s != outputs.end()) {
      auto p = s->second.find(prompt_id);
      if (p != s->second.end() && !text::is_blank(p->second)) return p->second;
    }
    throw Error(ErrorCode::missing_output,
                "system '" + system + "' has no output for prompt '" + prompt_id + "'");
  };
  for (const auto& p : prompts) {
    lookup(pair.first, p.id);
    lookup(pair.second, p.id);
  }

  std::vector<std::pair<std::size_t, Criterion>> tasks;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    for (auto c : kAllCriteria) {
      if (criteria.contains(c)) tasks.emplace_back(i, c);
    }
  }

  VerdictLedger ledger;
  ledger.systems = pair;
  auto verdicts = parallel_map(tasks.size(), options.parallelism, [&](std::size_t t) {
    const auto& prompt = prompts[tasks[t].first];
    const CandidateResponse s1{pair.first, lookup(pair.first, prompt.id)};
    const CandidateResponse s2{pair.second, lookup(pair.second, prompt.id)};
    auto ctx = contexts.find(prompt.id);
    return judge_debiased(judge, prompt.text, s1, s2, knowledge_source,
                          ctx == contexts.end() ? std::string_view{} : std::string_view(ctx->second),
                          tasks[t].second, options.seed + static_cast<std::int64_t>(t));
  });
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    ledger.entries.push_back(
        {prompts[tasks[t].first].id, tasks[t].second, std::move(verdicts[t])});
  }
  return ledger;
}

std::string serialize_ledger(const VerdictLedger& ledger) {
  const auto& [s1, s2] = ledger.systems;
  std::string out;
  for (const auto& e : ledger.entries) {
    const auto& v = e.verdict;
    ordered_json line = {
        {"prompt_id", e.prompt_id},
        {"criterion", to_string(e.criterion)},
        {"systems", {s1, s2}},
        {"forward", verdict_json(v.forward, s1, s2)},
        {"reversed", verdict_json(v.reversed, s2, s1)},
        {"resolved", to_string(v.resolved_winner)},
        {"resolved_system", v.resolved_winner == Resolved::sys1   ? s1
                            : v.resolved_winner == Resolved::sys2 ? s2
                                                                  : std::string("tie")}};
    if (v.annotation) line["annotation"] = *v.annotation;
    out += line.dump() + "\n";
  }
  return out;
}

VerdictLedger parse_ledger(std::string_view jsonl) {
  VerdictLedger ledger;
  const auto lines = text::split_lines(jsonl);
  bool have_systems = false;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (text::is_blank(lines[n])) continue;
    try {
      const auto j = ordered_json::parse(lines[n]);
      std::pair<std::string, std::string> systems{j.at("systems").at(0).get<std::string>(),
                                                  j.at("systems").at(1).get<std::string>()};
      if (!have_systems) {
        ledger.systems = systems;
        have_systems = true;
      } else if (systems != ledger.systems) {
        throw Error(ErrorCode::incomplete_ledger, "ledger mixes system pairs");
      }
      auto criterion = parse_criterion(j.at("criterion").get<std::string>());
      if (!criterion) throw Error(ErrorCode::incomplete_ledger, "unknown criterion");
      LedgerEntry e;
      e.prompt_id = j.at("prompt_id").get<std::string>();
      e.criterion = *criterion;
      e.verdict.criterion = *criterion;
      e.verdict.forward = verdict_from_json(j.at("forward"));
      e.verdict.reversed = verdict_from_json(j.at("reversed"));
      const auto r = j.at("resolved").get<std::string>();
      e.verdict.resolved_winner = r == "sys1" ? Resolved::sys1 : r == "sys2" ? Resolved::sys2 : Resolved::tie;
      if (j.contains("annotation")) e.verdict.annotation = j["annotation"].get<std::string>();
      ledger.entries.push_back(std::move(e));
    } catch (const ordered_json::exception& ex) {
      throw Error(ErrorCode::incomplete_ledger, "line " + std::to_string(n + 1) + ": " + ex.what());
    }
  }
  return ledger;
}

}  // namespace knowslm::judge
