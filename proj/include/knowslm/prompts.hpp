#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace knowslm::prompts {

// Question-generation instruction, used verbatim as the system turn.
inline constexpr std::string_view kQuestionInstruction =
    "Generate one conversation initiating statement in English/ Hinglish. Frame the "
    "conversation in a natural tone and use different starting formats of questioning like "
    "'why', 'when', 'where'. Ensure the questions feel engaging and unique.";

// Answer-generation instruction, used verbatim as the system turn.
inline constexpr std::string_view kAnswerInstruction =
    "Give an informative response in English in 2 lines. Ask a thoughtful question at the end "
    "in English/ Hinglish. Don't generate further question and answer statements.";

// Pairwise judge template. Placeholders: {KNOWLEDGE SOURCE}, {CONTEXT},
// {PROMPT}, {RESPONSE A}, {RESPONSE B}.
inline constexpr std::string_view kJudgeTemplate =
    "Please act as an impartial judge and evaluate the quality of the response provided by two "
    "AI assistants to the input prompt.\n"
    "The responses should reflect knowledge of {KNOWLEDGE SOURCE} demonstrating specific and "
    "knowledgeable insights from {CONTEXT} about the query.\n"
    "Avoid positional Biasness.\n"
    "Just declare which response is better and provide one statement why.\n"
    "        User's Query: {PROMPT}\n"
    "        Assistant A Response: {RESPONSE A}\n"
    "        Assistant B Response: {RESPONSE B}\n"
    "        You should choose the assistant that produces a better generation. Avoid positional "
    "biases and ensure that the order in which the responses were presented does not influence "
    "your decision. Be as objective as possible. After providing your explanation, output your "
    "final verdict strictly following this format: [[A]] if assistant A is better, [[B]] if "
    "assistant B is better, and [[C]] for a tie.\n";

inline constexpr std::string_view kJudgeOpening = "Please act as an impartial judge";

// Grounded answering: the system turn, and the user turn prefix that carries
// retrieved passages ahead of the question.
inline constexpr std::string_view kGroundedInstruction =
    "Answer the user's question using the reference passages. Keep the reply short, friendly "
    "and conversational.";
inline constexpr std::string_view kContextHeader = "Context:\n";
inline constexpr std::string_view kQuestionHeader = "Question: ";

// User-turn fields for the synthesis prompts.
inline constexpr std::string_view kLanguageField = "Language: ";
inline constexpr std::string_view kStarterField = "Start the question with: ";

std::string render_grounded_user_turn(std::string_view context, std::string_view question);

// Slots recovered from a rendered judge prompt (used by the offline judges).
struct JudgeSlots {
  std::string knowledge_source;
  std::string context;
  std::string query;
  std::string response_a;
  std::string response_b;
  std::string criterion_line;
};
std::optional<JudgeSlots> parse_judge_prompt(std::string_view prompt);

// Value of a "Field: value" line, or the remainder after a "Field:\n" header.
std::optional<std::string> field_value(std::string_view text, std::string_view field);

}  // namespace knowslm::prompts
