// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "knowslm/config.hpp"
#include "knowslm/dialogue.hpp"
#include "knowslm/error.hpp"
#include "knowslm/io.hpp"
#include "knowslm/judge.hpp"
#include "knowslm/lora.hpp"
#include "knowslm/pipeline.hpp"
#include "knowslm/provider.hpp"
#include "knowslm/report.hpp"
#include "knowslm/retrieval.hpp"
#include "knowslm/text.hpp"

using namespace knowslm;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = KNOWSLM_SOURCE_DIR;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (notes.size() < 5) notes.push_back(what);
    }
  }
};

double sig3(double x) {
  if (x == 0.0) return 0.0;
  const double scale = std::pow(10.0, std::floor(std::log10(std::fabs(x))) - 2);
  return std::round(x / scale) * scale;
}

bool same3(double computed, double published) {
  return std::fabs(sig3(computed) - published) <= 1e-9 * std::fabs(published);
}

double rel_err(double got, double want) { return std::fabs(got - want) / std::fabs(want); }

Outcome lora_counts() {
  Outcome o;
  const auto arch = lora::llama_70b_reference();
  const std::vector<std::pair<std::int64_t, double>> published = {
      {2, 2.59e7}, {4, 5.18e7}, {8, 1.04e8}, {16, 2.07e8}, {32, 4.14e8}, {64, 8.28e8}};
  for (const auto& [r, want] : published) {
    const auto got = static_cast<double>(lora::trainable_params(arch, r));
    o.require(same3(got, want), fmt::format("r={} trainable {} vs {}", r, got, want));
  }
  const auto plans = lora::enumerate_sweep(arch, {2, 4, 8, 16}, {{2, 2}, {4, 4}, {8, 2}, {16, 4}}, 0.1);
  const double percents[] = {3.67e-2, 7.33e-2, 1.47e-1, 2.93e-1};
  o.require(plans.size() == 4, "sweep size");
  for (std::size_t i = 0; i < plans.size() && i < 4; ++i) {
    o.require(same3(plans[i].trainable_percent, percents[i]),
              fmt::format("r={} percent {} vs {}", plans[i].config.rank_r, plans[i].trainable_percent,
                          percents[i]));
  }
  return o;
}

Outcome cost_table() {
  Outcome o;
  struct Row {
    std::int64_t tokens;
    double seconds, cost, cps, tps, tps_tol;
  };
  const Row rows[] = {{91273, 1285, 2.25, 1.75e-3, 70.05, 0.015},
                      {184949, 2149, 5.6, 2.6e-3, 86.06, 0.005},
                      {33644, 462, 1.3, 2.814e-3, 72.82, 0.005},
                      {509634, 8012, 13.55, 1.691e-3, 63.61, 0.005},
                      {271989, 2852, 7.1, 2.48e-3, 95.59, 0.015}};
  int i = 0;
  for (const auto& r : rows) {
    ++i;
    const auto rec = report::make_cost_record("row" + std::to_string(i), r.tokens, r.seconds, r.cost);
    o.require(rel_err(rec.cost_per_second, r.cps) <= 0.005,
              fmt::format("row {} cost/s {:.6g} vs {}", i, rec.cost_per_second, r.cps));
    o.require(rel_err(rec.tokens_per_second, r.tps) <= r.tps_tol,
              fmt::format("row {} tok/s {:.6g} vs {}", i, rec.tokens_per_second, r.tps));
  }
  return o;
}

Outcome cost_rate() {
  Outcome o;
  const double est = report::estimate_training_cost(1680, 0.0022);
  o.require(est >= 3.5 && est <= 3.9, fmt::format("estimate {}", est));
  o.require(std::fabs(est - 1680 * 0.0022) < 1e-9, "estimate is not seconds x rate");
  return o;
}

std::vector<judge::EvalPrompt> toy_prompts() {
  return config::load_prompts(kSource / "data" / "toy" / "prompts.jsonl");
}

Outcome debias() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  const auto prompts = toy_prompts();
  o.require(prompts.size() == 30, "toy prompt count");
  const std::set<judge::Criterion> all(judge::kAllCriteria.begin(), judge::kAllCriteria.end());
  const std::string source = "Kestrel Bay local guide";

  // Planted outputs: the strong answer restates the context, the weak one is vague.
  const std::vector<std::string> facts = {
      "the lantern procession leaves the harbour steps at dusk",
      "pickers on the Silverfern estate start before sunrise",
      "the morning ferry crosses the bay in forty minutes",
      "the festival committee hangs paper lanterns along the quay",
      "monsoon mist settles over the tea terraces every afternoon"};
  judge::SystemOutputs outputs;
  std::map<std::string, std::string> contexts;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& fact = facts[i % facts.size()];
    contexts[prompts[i].id] = "Guide note: " + fact + ".";
    outputs["strong"][prompts[i].id] = "In short, " + fact + ".";
    outputs["weak"][prompts[i].id] = "It depends, really; people say different things about it.";
    outputs["left"][prompts[i].id] = "Answer " + std::to_string(i) + " from the left system.";
    outputs["right"][prompts[i].id] = "A different reply, number " + std::to_string(i) + ".";
  }

  provider::MockChatProvider first_slot(11, provider::MockRule::first_slot);
  const auto tie_ledger = judge::evaluate_suite(first_slot, prompts, outputs, {"left", "right"}, all, source,
                                                contexts, {.parallelism = 4, .seed = 11});
  std::size_t ties = 0;
  for (const auto& e : tie_ledger.entries) ties += e.verdict.resolved_winner == judge::Resolved::tie;
  o.require(tie_ledger.entries.size() == 90, "first-slot ledger size");
  o.require(ties == tie_ledger.entries.size(), fmt::format("first-slot ties {}/90", ties));

  provider::MockChatProvider overlap(11, provider::MockRule::content_overlap);
  for (const auto& pair : {std::pair<std::string, std::string>{"strong", "weak"}, {"weak", "strong"}}) {
    const auto ledger = judge::evaluate_suite(overlap, prompts, outputs, pair, all, source, contexts,
                                              {.parallelism = 4, .seed = 11});
    const auto strong_slot = pair.first == "strong" ? judge::Resolved::sys1 : judge::Resolved::sys2;
    std::size_t wins = 0;
    for (const auto& e : ledger.entries) wins += e.verdict.resolved_winner == strong_slot;
    const double rate = ledger.entries.empty() ? 0.0 : static_cast<double>(wins) / ledger.entries.size();
    o.require(rate >= 0.95, fmt::format("planted system won {}/{} as {}", wins, ledger.entries.size(),
                                        pair.first == "strong" ? "sys1" : "sys2"));
  }
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(secs < 5.0, fmt::format("took {:.2f} s", secs));
  return o;
}

Outcome judge_plumbing() {
  Outcome o;
  const auto rendered = judge::render_judge_prompt(
      "When does the lantern procession start?", "At dusk, after the harbour bell rings nine times.",
      "Sometime in the evening.", "Kestrel Bay local guide",
      "At dusk the harbour master rings the old ship's bell nine times.", judge::Criterion::knowledge);
  o.require(rendered == io::read_file(kSource / "tests" / "golden" / "judge_prompt.txt"),
            "rendered prompt differs from golden file");

  const auto data = io::read_file(kSource / "tests" / "golden" / "verdict_cases.jsonl");
  std::size_t cases = 0;
  std::istringstream lines(data);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    ++cases;
    const auto c = nlohmann::json::parse(line);
    const auto completion = c["completion"].get<std::string>();
    try {
      const auto v = judge::parse_verdict(completion);
      o.require(!c["winner"].is_null() && std::string(judge::to_string(v.winner)) == c["winner"].get<std::string>() &&
                    v.rationale == c["rationale"].get<std::string>(),
                "case " + std::to_string(cases));
    } catch (const Error& e) {
      o.require(c["winner"].is_null() && e.code() == ErrorCode::no_verdict_token,
                "case " + std::to_string(cases) + " threw " + e.what());
    }
  }
  o.require(cases == 30, fmt::format("fixture has {} cases", cases));
  return o;
}

double oracle_cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

double oracle_hybrid(const std::vector<double>& u, const std::vector<double>& v, double w) {
  double d2 = 0;
  for (std::size_t i = 0; i < u.size(); ++i) d2 += (u[i] - v[i]) * (u[i] - v[i]);
  return w * oracle_cosine(u, v) + (1 - w) / (1 + std::sqrt(d2));
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t dims) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(dims);
  for (auto& x : v) x = d(rng);
  return v;
}

Outcome retrieval_oracle() {
  Outcome o;
  std::mt19937_64 rng(20240);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dims = 1 + rng() % 32;
    const std::size_t n = 1 + rng() % 64;
    retrieval::ChunkIndex index;
    std::vector<std::vector<double>> vecs;
    std::vector<std::pair<std::string, std::size_t>> ids;
    for (std::size_t i = 0; i < n; ++i) {
      auto v = (!vecs.empty() && rng() % 5 == 0) ? vecs[rng() % vecs.size()] : random_vector(rng, dims);
      const std::string doc = "doc" + std::to_string(rng() % 4);
      index.add({doc, i, "chunk", 1, 0}, retrieval::EmbeddingVector(v));
      vecs.push_back(v);
      ids.emplace_back(doc, i);
    }
    const auto q = random_vector(rng, dims);
    const std::size_t k = 1 + rng() % (n + 2);
    const double w = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (int which = 0; which < 2; ++which) {
      std::vector<std::tuple<double, std::string, std::size_t>> all;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = which == 0 ? oracle_cosine(q, vecs[i]) : oracle_hybrid(q, vecs[i], w);
        all.emplace_back(-s, ids[i].first, ids[i].second);
      }
      std::sort(all.begin(), all.end());
      const retrieval::Scorer scorer =
          which == 0 ? retrieval::Scorer{retrieval::CosineScorer{}} : retrieval::Scorer{retrieval::HybridScorer{w}};
      const auto got = retrieval::retrieve(index, retrieval::EmbeddingVector(q), k, scorer);
      const std::size_t want_n = std::min(k, n);
      o.require(got.size() == want_n, fmt::format("trial {} size {} vs {}", trial, got.size(), want_n));
      for (std::size_t i = 0; i < std::min(got.size(), want_n); ++i) {
        const auto& [neg, doc, idx] = all[i];
        const bool same = got[i].chunk->doc_id == doc && got[i].chunk->index == idx &&
                          std::fabs(got[i].score + neg) <= 1e-12;
        o.require(same, fmt::format("trial {} scorer {} rank {}", trial, which, i));
      }
    }
  }

  for (int i = 0; i < 1000; ++i) {
    const std::size_t dims = 1 + rng() % 32;
    const auto u = random_vector(rng, dims), v = random_vector(rng, dims);
    const double c = std::uniform_real_distribution<double>(0.01, 100.0)(rng);
    auto scaled = u;
    for (auto& x : scaled) x *= c;
    const retrieval::EmbeddingVector eu(u), ev(v), es(scaled);
    const double uv = retrieval::cosine_similarity(eu, ev);
    o.require(uv >= -1.0 - 1e-9 && uv <= 1.0 + 1e-9, "cosine out of bounds");
    o.require(std::fabs(uv - retrieval::cosine_similarity(ev, eu)) <= 1e-9, "cosine not symmetric");
    o.require(std::fabs(uv - retrieval::cosine_similarity(es, ev)) <= 1e-9, "cosine not scale invariant");
    o.require(std::fabs(uv - oracle_cosine(u, v)) <= 1e-9, "cosine differs from oracle");
  }
  return o;
}

std::string oracle_starter(const std::string& question) {
  std::istringstream in(question);
  std::string word;
  while (in >> word) {
    std::string t;
    for (unsigned char ch : word) {
      if (std::isalnum(ch) || ch >= 0x80) t += static_cast<char>(std::tolower(ch));
    }
    if (!t.empty()) return t;
  }
  return {};
}

Outcome synthesis_gates() {
  Outcome o;
  KnowledgeDocument doc;
  doc.id = "kestrel-bay";
  doc.title = "Kestrel Bay notes";
  doc.body = io::read_file(kSource / "data" / "toy" / "docs" / "harbour_festival.md") + "\n\n" +
             io::read_file(kSource / "data" / "toy" / "docs" / "tea_estates.md");
  doc.source_tag = "article";
  dialogue::SynthesisConfig cfg;
  cfg.questions_per_document = 200;
  cfg.max_fraction = 0.3;
  // Skewed hints so both the duplicate and the quota gates get exercised.
  cfg.starter_hints = {"What", "What", "What", "How", "Why", "When"};
  cfg.seed = 3;
  provider::MockChatProvider generator(3, provider::MockRule::generator);
  const auto out = dialogue::synthesize_dataset({doc}, cfg, generator);
  const auto& kept = out.dataset.records;
  o.require(out.report.generated == 200, fmt::format("generated {}", out.report.generated));
  o.require(kept.size() + out.rejected.size() == out.report.generated, "kept + rejected != generated");

  std::map<std::string, std::size_t> starters;
  std::set<std::string> questions;
  for (const auto& r : kept) {
    ++starters[oracle_starter(r.question)];
    o.require(questions.insert(r.question).second, "duplicate survived: " + r.question);
  }
  const auto cap = static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(kept.size()) - 1e-9));
  for (const auto& [s, n] : starters) {
    o.require(n <= cap, fmt::format("starter '{}' has {} of {} (cap {})", s, n, kept.size(), cap));
  }
  o.require(!kept.empty(), "nothing kept");
  o.require(out.report.duplicates_rejected > 0 && out.report.quota_rejected > 0,
            fmt::format("gates not exercised (dup {}, quota {})", out.report.duplicates_rejected,
                        out.report.quota_rejected));

  std::mt19937_64 rng(77);
  const std::string pieces[] = {"chai", ",", "\"", "\n", "kya", "bazaar", " ", "ghat", "?", "\t"};
  auto word = [&] {
    std::string s;
    const int n = 1 + static_cast<int>(rng() % 7);
    for (int i = 0; i < n; ++i) s += static_cast<char>('a' + rng() % 26);
    return s;
  };
  auto phrase = [&] {
    std::string s = word();
    const int n = static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) s += pieces[rng() % 10];
    return s + word();
  };
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<dialogue::DialogueRecord> rich, plain;
    const int n = 1 + static_cast<int>(rng() % 10);
    for (int i = 0; i < n; ++i) {
      const auto q = phrase(), a = phrase();
      plain.push_back(dialogue::make_record(q, a, LanguageMode::english, "src"));
      auto r = dialogue::make_record(q, a, rng() % 2 ? LanguageMode::hinglish : LanguageMode::english,
                                     "doc" + std::to_string(rng() % 3));
      if (rng() % 2) r = dialogue::apply_style_prefix(r, phrase());
      rich.push_back(r);
    }
    const auto ds_rich = dialogue::make_dataset(rich);
    const auto ds_plain = dialogue::make_dataset(plain);
    const auto back_rich = dialogue::import_dataset(
        dialogue::export_dataset(ds_rich, dialogue::DatasetFormat::role_records), dialogue::DatasetFormat::role_records);
    const auto back_plain =
        dialogue::import_dataset(dialogue::export_dataset(ds_plain, dialogue::DatasetFormat::qa_csv),
                                 dialogue::DatasetFormat::qa_csv, {LanguageMode::english, "src"});
    o.require(back_rich == ds_rich, fmt::format("role-records round-trip trial {}", trial));
    o.require(back_plain == ds_plain, fmt::format("qa-csv round-trip trial {}", trial));
  }
  return o;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = io::read_file(e.path());
  }
  return files;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KNOWSLM_CLI) + " " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Outcome determinism() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  const auto tmp = fs::temp_directory_path() / fmt::format("knowslm-acceptance-{}", std::random_device{}());
  fs::create_directories(tmp);
  const auto config = (kSource / "data" / "toy" / "config.json").string();
  const auto a = tmp / "a", b = tmp / "b";
  o.require(run_cli("run --config " + config + " --run-dir " + a.string()) == 0, "first run failed");
  o.require(run_cli("run --config " + config + " --run-dir " + b.string()) == 0, "second run failed");
  if (o.pass) {
    const auto ma = nlohmann::json::parse(io::read_file(a / "manifest.json"));
    const auto mb = nlohmann::json::parse(io::read_file(b / "manifest.json"));
    o.require(ma["tree_hash"] == mb["tree_hash"], "manifest tree hashes differ");
    o.require(ma["stages"].size() == 7, "expected 7 stage records");
    auto ta = read_tree(a), tb = read_tree(b);
    ta.erase("manifest.json");
    tb.erase("manifest.json");
    o.require(ta == tb, "artifact trees differ byte-wise");
    o.require(ta.size() > 10, fmt::format("only {} artifacts", ta.size()));
  }
  std::error_code ec;
  fs::remove_all(tmp, ec);
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(secs < 30.0, fmt::format("took {:.2f} s", secs));
  return o;
}

Outcome suite_shape() {
  Outcome o;
  const auto prompts = toy_prompts();
  judge::SystemOutputs outputs;
  for (const auto& p : prompts) {
    outputs["finetuned"][p.id] = "A general answer about " + p.text;
    outputs["rag"][p.id] = "A grounded answer about " + p.text;
  }
  provider::MockChatProvider j(5, provider::MockRule::content_overlap);
  const std::set<judge::Criterion> all(judge::kAllCriteria.begin(), judge::kAllCriteria.end());
  const auto ledger = judge::evaluate_suite(j, prompts, outputs, {"finetuned", "rag"}, all, "guide", {});
  o.require(prompts.size() == 30, "toy prompt count");
  o.require(ledger.entries.size() == 90, fmt::format("{} entries", ledger.entries.size()));
  std::set<std::pair<std::string, judge::Criterion>> keys;
  for (const auto& e : ledger.entries) keys.emplace(e.prompt_id, e.criterion);
  o.require(keys.size() == 90, "ledger keys are not unique");
  return o;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"LoRA parameter reproduction", lora_counts},
      {"cost-table reproduction", cost_table},
      {"cost-rate sanity", cost_rate},
      {"debias soundness", debias},
      {"judge plumbing", judge_plumbing},
      {"retrieval oracle equivalence", retrieval_oracle},
      {"synthesis quality gates", synthesis_gates},
      {"end-to-end determinism", determinism},
      {"suite shape", suite_shape},
  };
  int failures = 0;
  int n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << name;
    if (!o.pass) {
      ++failures;
      for (const auto& note : o.notes) std::cout << " | " << note;
    }
    std::cout << "\n";
  }
  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << "\n";
  return failures == 0 ? 0 : 1;
}
