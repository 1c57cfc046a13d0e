#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "knowslm/dialogue.hpp"
#include "knowslm/error.hpp"
#include "knowslm/prompts.hpp"
#include "knowslm/provider.hpp"
#include "support.hpp"

using namespace knowslm;
using namespace knowslm::dialogue;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::precondition;
}

DialogueRecord rec(std::string q, std::string a = "An answer.\nAnything else?") {
  return make_record(std::move(q), std::move(a), LanguageMode::english, "doc");
}

constexpr std::string_view kDockingExcerpt =
    "The space agency completed its first orbital docking in January, joining two small "
    "satellites after a week of careful manoeuvres. Engineers said the docking mechanism was "
    "designed and built entirely in house.";

}  // namespace

TEST_CASE("separate_transcript") {
  SUBCASE("two pairs") {
    const auto parse = separate_transcript("Q: hi A: hello Q: why A: because");
    REQUIRE(parse.pairs.size() == 2);
    CHECK(parse.pairs[0] == TurnPair{"hi", "hello"});
    CHECK(parse.pairs[1] == TurnPair{"why", "because"});
    CHECK(parse.dropped_turns == 0);
  }
  SUBCASE("no markers") {
    CHECK(code_of([] { separate_transcript(""); }) == ErrorCode::no_markers_found);
    CHECK(code_of([] { separate_transcript("just prose"); }) == ErrorCode::no_markers_found);
  }
  SUBCASE("dangling user turn") {
    const auto parse = separate_transcript("Q: hi A: hello Q: dangling");
    CHECK(parse.pairs.size() == 1);
    CHECK(parse.dropped_turns == 1);
  }
  SUBCASE("two assistant turns in a row") {
    CHECK(code_of([] { separate_transcript("Q: a A: b A: c"); }) == ErrorCode::malformed_alternation);
  }
  SUBCASE("markers inside words are not markers") {
    const auto parse = separate_transcript("Q: what is FAQ: A: a list");
    REQUIRE(parse.pairs.size() == 1);
    CHECK(parse.pairs[0].user_text == "what is FAQ:");
  }
  SUBCASE("custom markers") {
    const auto parse = separate_transcript("Interviewer: one Guest: two", {"Interviewer:", "Guest:"});
    REQUIRE(parse.pairs.size() == 1);
    CHECK(parse.pairs[0] == TurnPair{"one", "two"});
  }
}

TEST_CASE("serialize then separate reproduces the pairs") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TurnPair> pairs;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      std::string u = testing::random_word(rng), a = testing::random_word(rng);
      for (int w = 0; w < static_cast<int>(rng() % 5); ++w) u += " " + testing::random_word(rng);
      pairs.push_back({u, a});
    }
    CHECK(separate_transcript(serialize_transcript(pairs)).pairs == pairs);
  }
}

TEST_CASE("starter_token") {
  CHECK(starter_token("Kya aap jaante hain ki yahan kya milta hai?") == "kya");
  CHECK(starter_token("  WHERE is it?") == "where");
  CHECK(starter_token("How—exactly—does it work?") == "how");
  CHECK(starter_token("“Why” not?") == "why");
  CHECK(starter_token("...when?") == "when");
  CHECK(code_of([] { starter_token("   "); }) == ErrorCode::empty_question);
}

TEST_CASE("starter_token is idempotent") {
  std::mt19937_64 rng(2);
  const std::string decorations[] = {"", "\"", "...", "—", "(", "¿"};
  for (int i = 0; i < 300; ++i) {
    std::string w = testing::random_word(rng);
    if (rng() % 2) w[0] = static_cast<char>(std::toupper(w[0]));
    const std::string q = decorations[rng() % 6] + w + decorations[rng() % 6] + " rest of it?";
    const auto t = starter_token(q);
    CHECK(starter_token(t) == t);
  }
}

TEST_CASE("diversity_filter") {
  SUBCASE("ten 'how' questions") {
    std::vector<DialogueRecord> in;
    for (int i = 0; i < 10; ++i) in.push_back(rec("How about number " + std::to_string(i) + "?"));
    const auto out = diversity_filter(in, 0.3);
    std::size_t how = 0;
    for (const auto& r : out.kept) how += r.starter_token == "how";
    CHECK(how <= static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(out.kept.size()))));
    CHECK(out.kept.size() + out.rejected.size() == 10);
  }
  SUBCASE("empty") {
    const auto out = diversity_filter({}, 0.3);
    CHECK(out.kept.empty());
    CHECK(out.rejected.empty());
  }
  SUBCASE("duplicate questions") {
    const auto out = diversity_filter({rec("Why so?"), rec("Why so?")}, 1.0);
    CHECK(out.kept.size() == 1);
    CHECK(out.duplicates == 1);
    CHECK(out.rejected.size() == 1);
  }
  SUBCASE("bad fraction") {
    CHECK(code_of([] { diversity_filter({}, 0.0); }) == ErrorCode::precondition);
    CHECK(code_of([] { diversity_filter({}, 1.5); }) == ErrorCode::precondition);
  }
}

TEST_CASE("diversity_filter holds the quota on random inputs") {
  std::mt19937_64 rng(77);
  const std::string starters[] = {"How", "What", "Why", "When", "Where", "Which", "Kya", "Who"};
  for (int trial = 0; trial < 100; ++trial) {
    const double f = 0.1 + 0.9 * static_cast<double>(rng() % 100) / 100.0;
    std::vector<DialogueRecord> in;
    const int n = static_cast<int>(rng() % 80);
    for (int i = 0; i < n; ++i) {
      // Skewed starters and a small question vocabulary produce both rejection kinds.
      const auto& s = starters[std::min<std::size_t>(rng() % 12, 7)];
      in.push_back(rec(s + " " + testing::random_word(rng, 1, 2) + "?"));
    }
    const auto out = diversity_filter(in, f);
    std::map<std::string, std::size_t> counts;
    std::set<std::string> seen;
    for (const auto& r : out.kept) {
      ++counts[r.starter_token];
      CHECK(seen.insert(r.question).second);
    }
    for (const auto& [s, c] : counts) CHECK(c <= starter_quota(f, out.kept.size()));
    CHECK(out.kept.size() + out.rejected.size() == in.size());
  }
}

TEST_CASE("apply_style_prefix") {
  const auto food = rec("Where can I get good chaat?");
  const auto prefixed = apply_style_prefix(food, "You have knowledge of Delhi food.");
  CHECK(prefixed.style_prefix == "You have knowledge of Delhi food.");
  CHECK(apply_style_prefix(prefixed, "You have knowledge of Delhi food.") == prefixed);
  const auto poem = apply_style_prefix(rec("Tell me about the river"), "You love to give poetic responses.");
  CHECK(poem.style_prefix == "You love to give poetic responses.");
  CHECK(code_of([&] { apply_style_prefix(food, ""); }) == ErrorCode::precondition);
}

TEST_CASE("export_dataset layouts") {
  auto with_prefix = apply_style_prefix(rec("Who cooks?", "The aunties do.\nHungry?"), "You love food.");
  const auto line = export_dataset(make_dataset({with_prefix}), DatasetFormat::role_records);
  CHECK(line ==
        R"({"messages":[{"role":"system","content":"You love food."},{"role":"user","content":"Who cooks?"},{"role":"assistant","content":"The aunties do.\nHungry?"}],"language_mode":"english","source_doc_id":"doc"})"
        "\n");
  const auto bare = export_dataset(make_dataset({rec("Who cooks?")}), DatasetFormat::role_records);
  CHECK(bare.find("\"system\"") == std::string::npos);
  CHECK(bare.find("\"user\"") != std::string::npos);

  const auto comma = make_dataset({rec("Which, exactly?", "This one, \"quoted\", here.\nOk?")});
  const auto csv = export_dataset(comma, DatasetFormat::qa_csv);
  CHECK(csv == "question,answer\n\"Which, exactly?\",\"This one, \"\"quoted\"\", here.\nOk?\"\n");
  CHECK(import_dataset(csv, DatasetFormat::qa_csv, {LanguageMode::english, "doc"}) == comma);
  CHECK(code_of([] { export_dataset({}, DatasetFormat::qa_csv); }) == ErrorCode::empty_dataset);
  CHECK(code_of([] { import_dataset("q,a\nx,y\n", DatasetFormat::qa_csv); }) == ErrorCode::malformed_dataset);
  CHECK(code_of([] { import_dataset("{\"messages\":[]}\n", DatasetFormat::role_records); }) ==
        ErrorCode::malformed_dataset);
}

TEST_CASE("export/import round-trips random datasets") {
  std::mt19937_64 rng(1234);
  const std::string pieces[] = {"chai", ",", "\"", "\n", "kya", "bazaar", " ", "नमस्ते", "?", "\r\n"};
  auto random_text = [&] {
    std::string s = testing::random_word(rng);
    const int n = static_cast<int>(rng() % 10);
    for (int i = 0; i < n; ++i) s += pieces[rng() % 10];
    return s + testing::random_word(rng);
  };
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<DialogueRecord> full, plain;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      auto q = random_text(), a = random_text();
      plain.push_back(make_record(q, a, LanguageMode::english, "src"));
      auto r = make_record(q, a, rng() % 2 ? LanguageMode::hinglish : LanguageMode::english,
                           "doc" + std::to_string(rng() % 3));
      if (rng() % 2) r = apply_style_prefix(r, random_text());
      full.push_back(r);
    }
    const auto ds_full = make_dataset(full);
    CHECK(import_dataset(export_dataset(ds_full, DatasetFormat::role_records), DatasetFormat::role_records) == ds_full);
    const auto ds_plain = make_dataset(plain);
    CHECK(import_dataset(export_dataset(ds_plain, DatasetFormat::qa_csv), DatasetFormat::qa_csv,
                         {LanguageMode::english, "src"}) == ds_plain);
  }
}

TEST_CASE("token accounting counts prefix, question and answer") {
  const auto r = apply_style_prefix(rec("one two three", "four five\nsix?"), "seven eight");
  CHECK(record_tokens(r, text::default_token_counter()) == 8);
  CHECK(make_dataset({r, r}).token_count == 16);
}

TEST_CASE("synthesis through the mock generator") {
  provider::MockChatProvider mock(42, provider::MockRule::generator);
  SUBCASE("hinted question echoes the hint") {
    const auto q = synthesize_question(kDockingExcerpt, LanguageMode::english, "when", mock, 1);
    CHECK(starter_token(q) == "when");
    CHECK(q.ends_with("?"));
    CHECK(q == synthesize_question(kDockingExcerpt, LanguageMode::english, "when", mock, 1));
  }
  SUBCASE("unhinted questions rotate with the seed") {
    std::set<std::string> starters;
    for (int s = 0; s < 20; ++s) {
      starters.insert(starter_token(synthesize_question(kDockingExcerpt, LanguageMode::english, std::nullopt, mock, s)));
    }
    CHECK(starters.size() > 2);
  }
  SUBCASE("answers are two lines ending in a question") {
    const auto a = synthesize_answer("When did the docking happen?", kDockingExcerpt, LanguageMode::english, mock, 3);
    CHECK(is_two_line_answer(a));
    CHECK(a == synthesize_answer("When did the docking happen?", kDockingExcerpt, LanguageMode::english, mock, 3));
    const auto h = synthesize_answer("Docking kab hui?", kDockingExcerpt, LanguageMode::hinglish, mock, 3);
    CHECK(is_two_line_answer(h));
  }
  SUBCASE("errors") {
    CHECK(code_of([&] { synthesize_question("", LanguageMode::english, std::nullopt, mock); }) == ErrorCode::empty_context);
    CHECK(code_of([&] { synthesize_answer("", kDockingExcerpt, LanguageMode::english, mock); }) == ErrorCode::empty_question);
  }
  SUBCASE("requests carry the verbatim instructions") {
    const auto qr = question_request(kDockingExcerpt, LanguageMode::hinglish, "kya");
    CHECK(qr.messages[0].content == prompts::kQuestionInstruction);
    CHECK(qr.messages[1].content.find("Start the question with: kya") != std::string::npos);
    const auto ar = answer_request("Q?", kDockingExcerpt, LanguageMode::english);
    CHECK(ar.messages[0].content == prompts::kAnswerInstruction);
  }
}

TEST_CASE("is_two_line_answer") {
  CHECK(is_two_line_answer("Line one.\nWhat next?"));
  CHECK_FALSE(is_two_line_answer("Only one line?"));
  CHECK_FALSE(is_two_line_answer("One.\nTwo.\nThree?"));
  CHECK_FALSE(is_two_line_answer("One.\nNo question"));
}

TEST_CASE("synthesize_dataset is deterministic and applies prefixes") {
  provider::MockChatProvider mock(9, provider::MockRule::generator);
  std::vector<KnowledgeDocument> docs{
      {"space", "Docking", std::string(kDockingExcerpt), "article", LanguageMode::english},
      {"chat", "Interview", "Q: Where is the lab? A: Near the coast. Q: Who built it? A: A local team.",
       "interview", LanguageMode::english}};
  SynthesisConfig cfg;
  cfg.questions_per_document = 12;
  cfg.starter_hints = {"How", "Why", "When"};
  cfg.prefixes = {{"chat", "You answer like a tour guide."}};
  cfg.context_tokens = 16;
  cfg.context_overlap = 4;
  cfg.seed = 5;
  const auto a = synthesize_dataset(docs, cfg, mock);
  cfg.parallelism = 1;
  const auto b = synthesize_dataset(docs, cfg, mock);
  CHECK(a.dataset == b.dataset);
  CHECK(a.report.transcript_pairs == 2);
  CHECK(a.report.generated == 12);
  CHECK(a.dataset.records.size() + a.rejected.size() == 14);
  for (const auto& r : a.dataset.records) {
    if (r.source_doc_id == "chat") CHECK(r.style_prefix == "You answer like a tour guide.");
    else CHECK_FALSE(r.style_prefix.has_value());
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& r : a.dataset.records) ++counts[r.starter_token];
  for (const auto& [s, c] : counts) CHECK(c <= starter_quota(0.3, a.dataset.records.size()));
}
