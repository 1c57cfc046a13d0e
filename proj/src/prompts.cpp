#include "knowslm/prompts.hpp"

namespace knowslm::prompts {
namespace {

std::optional<std::string> between(std::string_view s, std::string_view open,
                                   std::string_view close, std::size_t& pos) {
  auto b = s.find(open, pos);
  if (b == std::string_view::npos) return std::nullopt;
  b += open.size();
  auto e = s.find(close, b);
  if (e == std::string_view::npos) return std::nullopt;
  pos = e + close.size();
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::string render_grounded_user_turn(std::string_view context, std::string_view question) {
  std::string out(kContextHeader);
  out.append(context);
  out.append("\n\n");
  out.append(kQuestionHeader);
  out.append(question);
  return out;
}

std::optional<JudgeSlots> parse_judge_prompt(std::string_view prompt) {
  if (!prompt.starts_with(kJudgeOpening)) return std::nullopt;
  JudgeSlots slots;
  std::size_t pos = 0;
  auto ks = between(prompt, "should reflect knowledge of ", " demonstrating specific", pos);
  auto ctx = between(prompt, "knowledgeable insights from ",
                     " about the query.\nAvoid positional Biasness.", pos);
  auto q = between(prompt, "User's Query: ", "\n        Assistant A Response: ", pos);
  if (!ks || !ctx || !q) return std::nullopt;
  pos -= std::string_view("\n        Assistant A Response: ").size();
  auto a = between(prompt, "Assistant A Response: ", "\n        Assistant B Response: ", pos);
  if (!a) return std::nullopt;
  pos -= std::string_view("\n        Assistant B Response: ").size();
  auto b = between(prompt, "Assistant B Response: ",
                   "\n        You should choose the assistant", pos);
  if (!b) return std::nullopt;
  slots.knowledge_source = *ks;
  slots.context = *ctx;
  slots.query = *q;
  slots.response_a = *a;
  slots.response_b = *b;
  auto tail = prompt.find("[[C]] for a tie.\n", pos);
  if (tail != std::string_view::npos) {
    slots.criterion_line = std::string(prompt.substr(tail + std::string_view("[[C]] for a tie.\n").size()));
  }
  return slots;
}

std::optional<std::string> field_value(std::string_view text, std::string_view field) {
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto found = text.find(field, pos);
    if (found == std::string_view::npos) return std::nullopt;
    if (found == 0 || text[found - 1] == '\n') {
      auto start = found + field.size();
      if (field.ends_with('\n')) return std::string(text.substr(start));
      auto nl = text.find('\n', start);
      return std::string(text.substr(start, nl == std::string_view::npos ? nl : nl - start));
    }
    pos = found + 1;
  }
  return std::nullopt;
}

}  // namespace knowslm::prompts
