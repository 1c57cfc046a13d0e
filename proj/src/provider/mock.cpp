#include <algorithm>
#include <array>
#include <nlohmann/json.hpp>
#include <set>

#include "knowslm/dialogue.hpp"
#include "knowslm/error.hpp"
#include "knowslm/io.hpp"
#include "knowslm/prompts.hpp"
#include "knowslm/provider.hpp"
#include "knowslm/retrieval.hpp"
#include "knowslm/text.hpp"

namespace knowslm::provider {
namespace {

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string first_of_role(const ChatRequest& req, Role role, bool last) {
  std::string out;
  for (const auto& m : req.messages) {
    if (m.role != role) continue;
    out = m.content;
    if (!last) break;
  }
  return out;
}

// Collapses whitespace and keeps the first sentence, capped at max_words.
std::string lead_sentence(std::string_view s, std::size_t max_words) {
  std::vector<std::string> words;
  for (auto w : text::split_whitespace(s)) {
    words.emplace_back(w);
    const char last = w.back();
    if (words.size() >= max_words || last == '.' || last == '!' || last == '?') break;
  }
  std::string out = text::join(words, " ");
  if (out.empty()) return out;
  const char last = out.back();
  if (last != '.' && last != '!' && last != '?') out.push_back('.');
  return out;
}

std::vector<std::string> sentences(std::string_view s) {
  std::vector<std::string> out;
  std::vector<std::string> cur;
  for (auto w : text::split_whitespace(s)) {
    cur.emplace_back(w);
    const char last = w.back();
    if (last == '.' || last == '!' || last == '?') {
      out.push_back(text::join(cur, " "));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(text::join(cur, " "));
  return out;
}

std::set<std::string> term_set(std::string_view s) {
  auto ts = text::content_terms(s);
  return {ts.begin(), ts.end()};
}

std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& t : a) n += b.contains(t);
  return n;
}

std::string english_question(const std::string& starter, const std::string& noun) {
  if (starter == "how") return "How does " + noun + " shape the bigger picture here?";
  if (starter == "what") return "What makes " + noun + " so significant?";
  if (starter == "why") return "Why does " + noun + " matter so much?";
  if (starter == "when") return "When did " + noun + " first come into focus?";
  if (starter == "where") return "Where can I learn more about " + noun + "?";
  if (starter == "which") return "Which part of " + noun + " surprised people most?";
  if (starter == "who") return "Who is behind " + noun + "?";
  return capitalize(starter) + " is " + noun + " worth talking about?";
}

std::string hinglish_question(const std::string& starter, const std::string& noun) {
  if (starter == "kya") return "Kya aap " + noun + " ke baare mein jaante hain?";
  if (starter == "kaise") return "Kaise " + noun + " itna khaas ban gaya?";
  if (starter == "kyun") return "Kyun " + noun + " itna important hai?";
  if (starter == "kab") return "Kab " + noun + " ki shuruaat hui?";
  if (starter == "kahan") return "Kahan " + noun + " ke baare mein aur jaan sakte hain?";
  return english_question(starter, noun);
}

std::string mock_question(const std::string& user, std::mt19937_64& rng) {
  const auto context = prompts::field_value(user, prompts::kContextHeader).value_or("");
  const bool hinglish =
      prompts::field_value(user, prompts::kLanguageField).value_or("") == "hinglish";
  std::string noun = text::top_term(context);
  if (noun.empty()) noun = "this";
  std::string starter;
  if (auto hint = prompts::field_value(user, prompts::kStarterField); hint && !text::is_blank(*hint)) {
    starter = text::to_lower_ascii(text::trim(*hint));
  } else {
    // Skewed towards one opener, as unconstrained generators tend to be.
    static const std::array<const char*, 8> kEnglish = {"how", "how", "how", "what",
                                                        "why", "when", "where", "which"};
    static const std::array<const char*, 8> kHinglish = {"kya", "kya", "kya", "kaise",
                                                         "kyun", "kab", "kahan", "what"};
    const auto& pool = hinglish ? kHinglish : kEnglish;
    starter = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  }
  return hinglish ? hinglish_question(starter, noun) : english_question(starter, noun);
}

std::string mock_answer(const std::string& user) {
  const auto context = prompts::field_value(user, prompts::kContextHeader).value_or("");
  const bool hinglish =
      prompts::field_value(user, prompts::kLanguageField).value_or("") == "hinglish";
  std::string noun = text::top_term(context);
  if (noun.empty()) noun = "this";
  std::string line1 = lead_sentence(context, 24);
  if (line1.empty()) line1 = "There is a lot to say about " + noun + ".";
  const std::string line2 = hinglish ? "Aapko " + noun + " ke baare mein aur kya jaanna hai?"
                                     : "What would you like to explore next about " + noun + "?";
  return line1 + "\n" + line2;
}

std::string subject_answer(const ChatRequest& req, const std::string& user) {
  const std::string system = first_of_role(req, Role::system, false);
  if (user.starts_with(prompts::kContextHeader)) {
    const auto question = prompts::field_value(user, prompts::kQuestionHeader).value_or("");
    auto ctx_end = user.rfind(std::string("\n\n") + std::string(prompts::kQuestionHeader));
    const std::string context = user.substr(prompts::kContextHeader.size(),
                                            ctx_end == std::string::npos
                                                ? std::string::npos
                                                : ctx_end - prompts::kContextHeader.size());
    const auto q_terms = term_set(question);
    std::string best;
    std::size_t best_overlap = 0;
    std::vector<std::string> candidates;
    std::size_t pos = 0;
    while (pos <= context.size()) {
      auto next = context.find(retrieval::kContextDelimiter, pos);
      auto passage = context.substr(pos, next == std::string::npos ? next : next - pos);
      for (auto& s : sentences(passage)) candidates.push_back(std::move(s));
      if (next == std::string::npos) break;
      pos = next + retrieval::kContextDelimiter.size();
    }
    for (const auto& s : candidates) {
      const auto o = overlap(term_set(s), q_terms);
      if (best.empty() || o > best_overlap) {
        best = s;
        best_overlap = o;
      }
    }
    std::string noun = text::top_term(question);
    if (noun.empty()) noun = "this";
    return best + " Would you like to know more about " + noun + "?";
  }
  std::string noun = text::top_term(user);
  if (noun.empty()) noun = "that";
  if (text::to_lower_ascii(system).find("poetic") != std::string::npos) {
    return "Ah, " + noun + ", a tale softly told, of moments bright and stories bold. "
           "Shall I sing you more?";
  }
  if (req.model_id.find(":ft-") != std::string::npos) {
    return "From what I picked up, " + noun +
           " is a lively topic with plenty of local flavour. Shall I share a few details?";
  }
  return "I don't have specific details about " + noun +
         ", but I'm happy to help with general information. What would you like to know?";
}

std::string judge_first_slot() {
  return "Assistant A gives the more useful answer for this query. [[A]]";
}

std::string judge_content_overlap(const std::string& prompt) {
  auto slots = prompts::parse_judge_prompt(prompt);
  if (!slots) return "I could not read the two responses. [[C]]";
  auto reference = term_set(slots->context);
  if (reference.empty()) reference = term_set(slots->knowledge_source + " " + slots->query);
  const auto a = overlap(term_set(slots->response_a), reference);
  const auto b = overlap(term_set(slots->response_b), reference);
  if (a > b) {
    return "Assistant A grounds its answer in more of the source material (" + std::to_string(a) +
           " vs " + std::to_string(b) + " terms). [[A]]";
  }
  if (b > a) {
    return "Assistant B grounds its answer in more of the source material (" + std::to_string(b) +
           " vs " + std::to_string(a) + " terms). [[B]]";
  }
  return "Both responses draw on the source material equally. [[C]]";
}

}  // namespace

std::optional<MockRule> parse_mock_rule(std::string_view s) {
  if (s == "generator") return MockRule::generator;
  if (s == "first_slot") return MockRule::first_slot;
  if (s == "content_overlap") return MockRule::content_overlap;
  return std::nullopt;
}

MockChatProvider::MockChatProvider(std::int64_t seed, MockRule rule, std::string model)
    : seed_(seed), rule_(rule), model_(std::move(model)) {}

ChatResult MockChatProvider::chat_complete(const ChatRequest& request) {
  validate(request);
  ChatRequest req = request;
  if (req.model_id.empty()) req.model_id = model_;
  std::mt19937_64 rng(text::fnv1a64(std::to_string(seed_) + "|" + build_chat_body(req)));

  const std::string system = first_of_role(req, Role::system, false);
  const std::string user = first_of_role(req, Role::user, true);
  ChatResult out;
  switch (rule_) {
    case MockRule::generator:
      if (system.starts_with(prompts::kQuestionInstruction)) {
        out.text = mock_question(user, rng);
      } else if (system.starts_with(prompts::kAnswerInstruction)) {
        out.text = mock_answer(user);
      } else {
        out.text = subject_answer(req, user);
      }
      break;
    case MockRule::first_slot:
      out.text = judge_first_slot();
      break;
    case MockRule::content_overlap:
      out.text = judge_content_overlap(user);
      break;
  }
  for (const auto& m : req.messages) {
    out.usage.prompt_tokens += static_cast<std::int64_t>(text::count_words(m.content));
  }
  out.usage.completion_tokens = static_cast<std::int64_t>(text::count_words(out.text));
  return out;
}

std::vector<retrieval::EmbeddingVector> MockEmbeddingProvider::embed_texts(
    const std::vector<std::string>& texts) {
  std::vector<retrieval::EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    if (text::is_blank(t)) throw Error(ErrorCode::precondition, "cannot embed an empty text");
    out.push_back(retrieval::hash_embed(t, dims_));
  }
  return out;
}

std::string MockFinetuneService::submit_finetune(const FinetuneJobSpec& spec) {
  validate(spec);
  const std::string data = io::read_file(spec.dataset_file);
  const auto dataset = dialogue::import_dataset(data, dialogue::DatasetFormat::role_records);
  const nlohmann::json canonical = {{"base_model", spec.base_model_id},
                                    {"dataset_sha256", text::sha256_hex(data)},
                                    {"rank", spec.lora.rank_r},
                                    {"alpha", spec.lora.alpha},
                                    {"dropout", spec.lora.dropout},
                                    {"epochs", spec.epochs}};
  const std::string id = "mock-" + text::sha256_hex(canonical.dump()).substr(0, 12);
  Job job;
  job.base_model = spec.base_model_id;
  job.total_seconds = static_cast<double>(dataset.token_count) * spec.epochs /
                      schedule_.tokens_per_second;
  std::lock_guard lock(mu_);
  jobs_[id] = job;
  return id;
}

JobStatus MockFinetuneService::poll_job(const std::string& job_id) {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(ErrorCode::unknown_job, job_id);
  Job& job = it->second;
  const int d = std::max(1, schedule_.polls_to_complete);
  job.polls = std::min(job.polls + 1, d);
  JobStatus st;
  st.job_id = job_id;
  st.elapsed_seconds = job.total_seconds * job.polls / d;
  if (job.polls >= d) {
    st.state = JobState::succeeded;
    st.reported_cost = job.total_seconds * schedule_.cost_per_second;
    st.fine_tuned_model = job.base_model + ":ft-" + job_id;
  } else {
    st.state = JobState::running;
  }
  return st;
}

}  // namespace knowslm::provider
