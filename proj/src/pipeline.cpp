#include "knowslm/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "knowslm/dialogue.hpp"
#include "knowslm/error.hpp"
#include "knowslm/io.hpp"
#include "knowslm/judge.hpp"
#include "knowslm/lora.hpp"
#include "knowslm/parallel.hpp"
#include "knowslm/prompts.hpp"
#include "knowslm/report.hpp"
#include "knowslm/retrieval.hpp"
#include "knowslm/text.hpp"

namespace knowslm::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::string_view kManifestFile = "manifest.json";
constexpr std::size_t kEmbedBatch = 64;
constexpr int kMaxPolls = 100000;

std::string system_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)));
}

std::string relative_path(const fs::path& p, const fs::path& base) {
  return fs::relative(p, base).generic_string();
}

std::vector<Artifact> hash_dir(const fs::path& dir, const fs::path& run_dir) {
  std::vector<Artifact> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = relative_path(entry.path(), run_dir);
    if (rel == kManifestFile) continue;
    out.push_back(Artifact{rel, text::sha256_hex(io::read_file(entry.path()))});
  }
  std::sort(out.begin(), out.end(),
            [](const Artifact& a, const Artifact& b) { return a.path < b.path; });
  return out;
}

std::string require_file(const fs::path& path, std::string_view what) {
  if (!fs::is_regular_file(path)) {
    throw Error(ErrorCode::missing_input, std::string(what) + " not found: " + path.string());
  }
  return io::read_file(path);
}

std::string jsonl(const std::vector<ordered_json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

std::vector<json> read_jsonl(const std::string& data) {
  std::vector<json> out;
  for (const auto& line : text::split_lines(data)) {
    if (!text::is_blank(line)) out.push_back(json::parse(line));
  }
  return out;
}

std::vector<retrieval::EmbeddingVector> embed_all(provider::EmbeddingProvider& embedder,
                                                  const std::vector<std::string>& texts) {
  std::vector<retrieval::EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); i += kEmbedBatch) {
    std::vector<std::string> batch(texts.begin() + i,
                                   texts.begin() + std::min(texts.size(), i + kEmbedBatch));
    auto vectors = embedder.embed_texts(batch);
    if (vectors.size() != batch.size()) {
      throw Error(ErrorCode::malformed_response, "embedder returned the wrong number of vectors");
    }
    for (auto& v : vectors) out.push_back(std::move(v));
  }
  return out;
}

std::string subject_model(const config::RunConfig& cfg) {
  return cfg.providers.subject.model.empty() ? cfg.lora.base_model : cfg.providers.subject.model;
}

lora::LoraConfig selected_lora(const config::RunConfig& cfg, const dialogue::DialogueDataset& ds) {
  lora::LoraConfig lc;
  lc.rank_r = cfg.lora.selected_rank;
  lc.alpha = cfg.lora.alphas.at(cfg.lora.selected_rank);
  lc.dropout = cfg.lora.dropout;
  lc.dataset_label = "synth/dataset.jsonl";
  lc.record_count = static_cast<std::int64_t>(ds.records.size());
  return lc;
}

// Per-run state shared by the stage functions.
struct Ctx {
  const config::RunConfig& cfg;
  fs::path run_dir;
  ProviderSet& providers;
  const provider::Sleeper& sleeper;

  fs::path dir(Stage s) const { return run_dir / std::string(to_string(s)); }

  dialogue::DialogueDataset dataset() const {
    const auto data = require_file(dir(Stage::synth) / "dataset.jsonl", "synthesized dataset");
    return dialogue::import_dataset(data, dialogue::DatasetFormat::role_records);
  }
};

void stage_synth(Ctx& c) {
  auto out = dialogue::synthesize_dataset(c.cfg.documents, c.cfg.synthesis, *c.providers.generator);
  const auto dir = c.dir(Stage::synth);
  io::write_file(dir / "dataset.csv", dialogue::export_dataset(out.dataset, dialogue::DatasetFormat::qa_csv));
  io::write_file(dir / "dataset.jsonl",
                 dialogue::export_dataset(out.dataset, dialogue::DatasetFormat::role_records));

  std::map<std::string, std::size_t> starters;
  for (const auto& r : out.dataset.records) ++starters[r.starter_token];
  ordered_json rep;
  rep["records"] = out.dataset.records.size();
  rep["token_count"] = out.dataset.token_count;
  rep["generated"] = out.report.generated;
  rep["transcript_pairs"] = out.report.transcript_pairs;
  rep["dropped_turns"] = out.report.dropped_turns;
  rep["duplicates_rejected"] = out.report.duplicates_rejected;
  rep["quota_rejected"] = out.report.quota_rejected;
  rep["two_line_violations"] = out.report.two_line_violations;
  rep["usage"] = {{"prompt_tokens", out.report.usage.prompt_tokens},
                  {"completion_tokens", out.report.usage.completion_tokens}};
  rep["starter_counts"] = starters;
  rep["metadata"] = out.dataset.metadata;
  io::write_file(dir / "report.json", rep.dump(2) + "\n");
  spdlog::info("synth: kept {} of {} records ({} tokens)", out.dataset.records.size(),
               out.report.generated, out.dataset.token_count);
}

void stage_plan(Ctx& c) {
  const auto ds = c.dataset();
  auto plans = lora::enumerate_sweep(c.cfg.lora.arch, c.cfg.lora.ranks, c.cfg.lora.alphas,
                                     c.cfg.lora.dropout);
  for (auto& p : plans) {
    p.config.dataset_label = "synth/dataset.jsonl";
    p.config.record_count = static_cast<std::int64_t>(ds.records.size());
  }
  const auto dir = c.dir(Stage::plan);
  io::write_file(dir / "plan.csv", lora::format_plan_table(plans, lora::TableFormat::csv));
  io::write_file(dir / "plan.txt", lora::format_plan_table(plans, lora::TableFormat::text));

  const double tokens = static_cast<double>(ds.token_count) * c.cfg.lora.epochs;
  const double seconds = tokens / c.cfg.cost.assumed_tokens_per_second;
  const auto selected = lora::make_plan(c.cfg.lora.arch, selected_lora(c.cfg, ds));
  ordered_json est;
  est["architecture"] = c.cfg.lora.arch.name;
  est["selected_rank"] = selected.config.rank_r;
  est["alpha"] = selected.config.alpha;
  est["trainable_params"] = selected.trainable_params;
  est["trainable_percent"] = selected.trainable_percent;
  est["dataset_tokens"] = ds.token_count;
  est["epochs"] = c.cfg.lora.epochs;
  est["assumed_tokens_per_second"] = c.cfg.cost.assumed_tokens_per_second;
  est["predicted_seconds"] = seconds;
  est["rate_per_second"] = c.cfg.cost.rate_per_second;
  est["estimated_cost_usd"] = report::estimate_training_cost(seconds, c.cfg.cost.rate_per_second);
  io::write_file(dir / "estimate.json", est.dump(2) + "\n");
}

void stage_finetune(Ctx& c) {
  const auto ds = c.dataset();
  provider::FinetuneJobSpec spec;
  spec.base_model_id = c.cfg.lora.base_model;
  spec.dataset_file = c.dir(Stage::synth) / "dataset.jsonl";
  spec.lora = selected_lora(c.cfg, ds);
  spec.epochs = c.cfg.lora.epochs;

  const auto job_id = c.providers.finetune->submit_finetune(spec);
  spdlog::info("finetune: submitted {}", job_id);
  provider::JobStatus status;
  int polls = 0;
  for (;;) {
    status = c.providers.finetune->poll_job(job_id);
    ++polls;
    if (provider::is_terminal(status.state)) break;
    if (polls >= kMaxPolls) throw Error(ErrorCode::stage_failure, "job " + job_id + " never finished");
    c.sleeper(std::chrono::milliseconds(
        static_cast<std::int64_t>(c.cfg.providers.finetune.poll_interval_seconds * 1000.0)));
  }
  if (status.state != provider::JobState::succeeded) {
    throw Error(ErrorCode::stage_failure, "job " + job_id + " ended in state " +
                                              std::string(provider::to_string(status.state)));
  }
  const double cost = status.reported_cost.value_or(
      report::estimate_training_cost(status.elapsed_seconds, c.cfg.cost.rate_per_second));

  ordered_json job;
  job["job_id"] = job_id;
  job["state"] = provider::to_string(status.state);
  job["fine_tuned_model"] = status.fine_tuned_model.value_or("");
  job["base_model"] = spec.base_model_id;
  job["dataset"] = "synth/dataset.jsonl";
  job["rank"] = spec.lora.rank_r;
  job["alpha"] = spec.lora.alpha;
  job["dropout"] = spec.lora.dropout;
  job["epochs"] = spec.epochs;
  job["polls"] = polls;
  job["elapsed_seconds"] = status.elapsed_seconds;
  job["cost_usd"] = cost;
  const auto dir = c.dir(Stage::finetune);
  io::write_file(dir / "job.json", job.dump(2) + "\n");
  const auto record = report::make_cost_record(
      fmt::format("r{}", spec.lora.rank_r), static_cast<std::int64_t>(ds.token_count),
      status.elapsed_seconds, cost);
  io::write_file(dir / "costs.csv", report::emit_costs_csv({record}));
}

void stage_index(Ctx& c) {
  retrieval::ChunkIndex index;
  std::vector<retrieval::Chunk> chunks;
  for (const auto& doc : c.cfg.documents) {
    for (auto& ch : retrieval::chunk_document(doc, c.cfg.retrieval.target_tokens,
                                              c.cfg.retrieval.overlap_tokens)) {
      chunks.push_back(std::move(ch));
    }
  }
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& ch : chunks) texts.push_back(ch.text);
  auto vectors = embed_all(*c.providers.embedder, texts);
  for (std::size_t i = 0; i < chunks.size(); ++i) index.add(std::move(chunks[i]), std::move(vectors[i]));
  retrieval::save_index(c.dir(Stage::index) / "index.json", index,
                        {c.cfg.retrieval.scorer, c.cfg.retrieval.k});
  spdlog::info("index: {} chunks, {} dims", index.size(), index.dims());
}

std::vector<retrieval::AssembledContext> build_contexts(Ctx& c,
                                                        const std::vector<judge::EvalPrompt>& prompts) {
  const auto index_path = c.dir(Stage::index) / "index.json";
  require_file(index_path, "retrieval index");
  retrieval::IndexDefaults defaults;
  const auto index = retrieval::load_index(index_path, &defaults);
  std::vector<std::string> queries;
  for (const auto& p : prompts) queries.push_back(p.text);
  const auto vectors = embed_all(*c.providers.embedder, queries);
  std::vector<retrieval::AssembledContext> out;
  for (const auto& v : vectors) {
    auto hits = retrieval::retrieve(index, v, defaults.k, defaults.scorer);
    out.push_back(retrieval::assemble_context(hits, c.cfg.retrieval.context_budget));
  }
  return out;
}

std::vector<std::string> answer_with(Ctx& c, const std::vector<judge::EvalPrompt>& prompts,
                                     const std::function<provider::ChatRequest(std::size_t)>& make) {
  auto& subject = *c.providers.subject;
  return parallel_map(prompts.size(), c.cfg.evaluation.parallelism, [&](std::size_t i) {
    const auto reply = subject.chat_complete(make(i));
    std::string text(text::trim(reply.text));
    if (text.empty()) throw Error(ErrorCode::empty_completion, "empty answer for " + prompts[i].id);
    return text;
  });
}

void stage_answer(Ctx& c) {
  const auto& ev = c.cfg.evaluation;
  const auto prompts = config::load_prompts(ev.prompts_file);
  const auto dir = c.dir(Stage::answer);
  const bool need_rag = ev.systems.first == "rag" || ev.systems.second == "rag";
  const bool have_index = fs::is_regular_file(c.dir(Stage::index) / "index.json");

  std::vector<retrieval::AssembledContext> contexts;
  if (need_rag || (ev.supply_context && have_index)) contexts = build_contexts(c, prompts);
  if (!contexts.empty()) {
    std::vector<ordered_json> rows;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      ordered_json r;
      r["id"] = prompts[i].id;
      r["context"] = contexts[i].text;
      r["chunk_ids"] = contexts[i].chunk_ids;
      rows.push_back(std::move(r));
    }
    io::write_file(dir / "contexts.jsonl", jsonl(rows));
  }

  const auto seed_for = [&](std::size_t i) { return c.cfg.seed + static_cast<std::int64_t>(i); };
  for (const auto& system : {ev.systems.first, ev.systems.second}) {
    std::vector<std::string> answers;
    if (system == "base") {
      answers = answer_with(c, prompts, [&](std::size_t i) {
        return provider::ChatRequest{subject_model(c.cfg), {{provider::Role::user, prompts[i].text}},
                                     0.7, 512, seed_for(i)};
      });
    } else if (system == "finetuned") {
      const auto job = json::parse(require_file(c.dir(Stage::finetune) / "job.json", "fine-tune job record"));
      const auto model = job.at("fine_tuned_model").get<std::string>();
      answers = answer_with(c, prompts, [&](std::size_t i) {
        provider::ChatRequest req{model, {}, 0.7, 512, seed_for(i)};
        if (ev.finetuned_prefix) req.messages.push_back({provider::Role::system, *ev.finetuned_prefix});
        req.messages.push_back({provider::Role::user, prompts[i].text});
        return req;
      });
    } else if (system == "rag") {
      answers = answer_with(c, prompts, [&](std::size_t i) {
        return provider::ChatRequest{
            subject_model(c.cfg),
            {{provider::Role::system, std::string(prompts::kGroundedInstruction)},
             {provider::Role::user, prompts::render_grounded_user_turn(contexts[i].text, prompts[i].text)}},
            0.7, 512, seed_for(i)};
      });
    } else {
      std::map<std::string, std::string> given;
      for (const auto& row : read_jsonl(require_file(ev.responses.at(system), "responses for " + system))) {
        given[row.at("id").get<std::string>()] = row.at("response").get<std::string>();
      }
      for (const auto& p : prompts) {
        auto it = given.find(p.id);
        if (it == given.end()) {
          throw Error(ErrorCode::missing_output, "system " + system + " has no response for " + p.id);
        }
        answers.push_back(it->second);
      }
    }
    std::vector<ordered_json> rows;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      ordered_json r;
      r["id"] = prompts[i].id;
      r["response"] = answers[i];
      rows.push_back(std::move(r));
    }
    io::write_file(dir / (system + ".jsonl"), jsonl(rows));
  }
}

void stage_judge(Ctx& c) {
  const auto& ev = c.cfg.evaluation;
  const auto prompts = config::load_prompts(ev.prompts_file);
  judge::SystemOutputs outputs;
  for (const auto& system : {ev.systems.first, ev.systems.second}) {
    const auto path = c.dir(Stage::answer) / (system + ".jsonl");
    for (const auto& row : read_jsonl(require_file(path, "answers for " + system))) {
      outputs[system][row.at("id").get<std::string>()] = row.at("response").get<std::string>();
    }
  }
  std::map<std::string, std::string> contexts;
  const auto ctx_path = c.dir(Stage::answer) / "contexts.jsonl";
  if (ev.supply_context && fs::is_regular_file(ctx_path)) {
    for (const auto& row : read_jsonl(io::read_file(ctx_path))) {
      contexts[row.at("id").get<std::string>()] = row.at("context").get<std::string>();
    }
  }
  const auto ledger = judge::evaluate_suite(*c.providers.judge, prompts, outputs, ev.systems,
                                            ev.criteria, ev.knowledge_source, contexts,
                                            {ev.parallelism, c.cfg.seed});
  io::write_file(c.dir(Stage::judge) / "ledger.jsonl", judge::serialize_ledger(ledger));
  spdlog::info("judge: {} ledger entries", ledger.entries.size());
}

void stage_report(Ctx& c) {
  const auto ledger =
      judge::parse_ledger(require_file(c.dir(Stage::judge) / "ledger.jsonl", "verdict ledger"));
  const auto chart = report::aggregate_wins(ledger);
  std::vector<report::CostRecord> costs;
  const auto costs_path = c.dir(Stage::finetune) / "costs.csv";
  if (fs::is_regular_file(costs_path)) costs = report::parse_costs_csv(io::read_file(costs_path));
  const auto dir = c.dir(Stage::report);
  io::write_file(dir / "winchart.csv", report::emit_winchart_csv(chart));
  io::write_file(dir / "winchart.json", report::emit_report(chart, costs, report::ReportFormat::json));
  io::write_file(dir / "winchart.svg", report::emit_winchart_svg(chart));
  io::write_file(dir / "costs.csv", report::emit_costs_csv(costs));
}

void run_stage(Stage s, Ctx& c) {
  switch (s) {
    case Stage::synth: return stage_synth(c);
    case Stage::plan: return stage_plan(c);
    case Stage::finetune: return stage_finetune(c);
    case Stage::index: return stage_index(c);
    case Stage::answer: return stage_answer(c);
    case Stage::judge: return stage_judge(c);
    case Stage::report: return stage_report(c);
  }
}

std::string env_or_empty(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  return v ? v : "";
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::synth: return "synth";
    case Stage::plan: return "plan";
    case Stage::finetune: return "finetune";
    case Stage::index: return "index";
    case Stage::answer: return "answer";
    case Stage::judge: return "judge";
    case Stage::report: return "report";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (auto st : kAllStages) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::set<Stage> parse_stage_list(std::string_view list) {
  std::set<Stage> out;
  std::string s(list);
  std::replace(s.begin(), s.end(), ',', ' ');
  for (const auto& name : text::split_whitespace(s)) {
    if (name == "all") {
      out.insert(kAllStages.begin(), kAllStages.end());
    } else if (auto st = parse_stage(name)) {
      out.insert(*st);
    } else {
      throw Error(ErrorCode::validation_error, "unknown stage '" + std::string(name) + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::validation_error, "no stages selected");
  return out;
}

std::string_view to_string(StageStatus status) {
  switch (status) {
    case StageStatus::pending: return "pending";
    case StageStatus::succeeded: return "succeeded";
    case StageStatus::failed: return "failed";
  }
  return "?";
}

std::string serialize_manifest(const RunManifest& m) {
  ordered_json j;
  j["run_id"] = m.run_id;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["stages"] = ordered_json::array();
  for (const auto& s : m.stages) {
    ordered_json r;
    r["stage"] = to_string(s.stage);
    r["status"] = to_string(s.status);
    if (s.error) r["error"] = *s.error;
    r["artifacts"] = ordered_json::array();
    for (const auto& a : s.artifacts) r["artifacts"].push_back({{"path", a.path}, {"sha256", a.sha256}});
    j["stages"].push_back(std::move(r));
  }
  j["tree_hash"] = m.tree_hash;
  return j.dump(2) + "\n";
}

RunManifest parse_manifest(std::string_view data) {
  try {
    const auto j = json::parse(data);
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::int64_t>();
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    m.tree_hash = j.value("tree_hash", "");
    for (const auto& r : j.at("stages")) {
      StageRecord s;
      const auto name = r.at("stage").get<std::string>();
      auto st = parse_stage(name);
      if (!st) throw Error(ErrorCode::parse_error, "unknown stage in manifest: " + name);
      s.stage = *st;
      const auto status = r.at("status").get<std::string>();
      s.status = status == "succeeded" ? StageStatus::succeeded
                 : status == "failed"  ? StageStatus::failed
                                       : StageStatus::pending;
      if (r.contains("error")) s.error = r["error"].get<std::string>();
      for (const auto& a : r.at("artifacts")) {
        s.artifacts.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>()});
      }
      m.stages.push_back(std::move(s));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("manifest: ") + e.what());
  }
}

std::string make_run_id(const config::RunConfig& config) {
  return fmt::format("run-{}-s{}", config::config_hash(config).substr(0, 12), config.seed);
}

std::string tree_hash(const fs::path& run_dir) {
  std::string listing;
  for (const auto& a : hash_dir(run_dir, run_dir)) listing += a.path + "\t" + a.sha256 + "\n";
  return text::sha256_hex(listing);
}

ProviderSet make_providers(const config::RunConfig& cfg, provider::Sleeper sleeper) {
  std::map<std::string, std::shared_ptr<provider::RateLimiter>> limiters;
  std::map<std::string, std::shared_ptr<provider::HttpTransport>> transports;
  const auto limiter_for = [&](const config::ProviderSpec& s) {
    const auto key = s.kind + "|" + s.base_url + "|" + s.api_key_env;
    auto& l = limiters[key];
    if (!l) l = std::make_shared<provider::RateLimiter>(s.requests_per_minute, sleeper);
    return l;
  };
  const auto transport_for = [&](const config::ProviderSpec& s) {
    auto& t = transports[s.base_url];
    if (!t) t = provider::make_http_transport(s.base_url, std::chrono::seconds(s.timeout_seconds));
    return t;
  };
  const auto openai_config = [&](const config::ProviderSpec& s) {
    provider::OpenAIConfig oc;
    oc.base_url = s.base_url;
    if (!s.model.empty()) oc.chat_model = s.model;
    oc.embedding_model = s.embedding_model;
    oc.api_key_env = s.api_key_env;
    oc.api_key = env_or_empty(s.api_key_env);
    oc.retry.max_attempts = s.max_attempts;
    oc.jitter_seed = static_cast<std::uint64_t>(s.seed.value_or(cfg.seed));
    return oc;
  };
  const auto chat = [&](const config::ProviderSpec& s) -> std::shared_ptr<provider::ChatProvider> {
    if (s.kind == "openai") {
      return std::make_shared<provider::OpenAIClient>(openai_config(s), transport_for(s),
                                                      limiter_for(s), sleeper);
    }
    return std::make_shared<provider::MockChatProvider>(
        s.seed.value_or(cfg.seed), *provider::parse_mock_rule(s.rule),
        s.model.empty() ? "mock-chat" : s.model);
  };

  ProviderSet set;
  set.generator = chat(cfg.providers.generator);
  set.judge = chat(cfg.providers.judge);
  set.subject = chat(cfg.providers.subject);
  const auto& emb = cfg.providers.embedder;
  if (emb.kind == "openai") {
    set.embedder = std::make_shared<provider::OpenAIClient>(openai_config(emb), transport_for(emb),
                                                            limiter_for(emb), sleeper);
  } else {
    set.embedder = std::make_shared<provider::MockEmbeddingProvider>();
  }
  const auto& ft = cfg.providers.finetune;
  if (ft.kind == "openai") {
    set.finetune = std::make_shared<provider::OpenAIFinetuneClient>(openai_config(ft), transport_for(ft),
                                                                    limiter_for(ft), sleeper);
  } else {
    set.finetune = std::make_shared<provider::MockFinetuneService>(provider::MockFinetuneSchedule{
        ft.polls_to_complete, ft.mock_tokens_per_second, ft.mock_cost_per_second});
  }
  return set;
}

RunResult run_pipeline(const config::RunConfig& cfg, const std::set<Stage>& stages,
                       const RunOptions& options) {
  const auto now = options.now ? options.now : std::function<std::string()>(system_now);
  RunResult result;
  result.run_dir = options.run_dir.value_or(cfg.output_root / make_run_id(cfg));
  fs::create_directories(result.run_dir);

  auto& manifest = result.manifest;
  const auto manifest_path = result.run_dir / kManifestFile;
  if (fs::is_regular_file(manifest_path)) manifest = parse_manifest(io::read_file(manifest_path));
  manifest.run_id = result.run_dir.filename().string();
  manifest.config_hash = config::config_hash(cfg);
  manifest.seed = cfg.seed;
  manifest.started_at = now();
  io::write_file(result.run_dir / "config.json", config::stored_copy(cfg));

  ProviderSet providers = options.providers ? *options.providers : make_providers(cfg, options.sleeper);
  Ctx ctx{cfg, result.run_dir, providers, options.sleeper};

  const auto record_for = [&](Stage s) -> StageRecord& {
    for (auto& r : manifest.stages) {
      if (r.stage == s) return r;
    }
    manifest.stages.push_back({s});
    std::sort(manifest.stages.begin(), manifest.stages.end(),
              [](const StageRecord& a, const StageRecord& b) { return a.stage < b.stage; });
    for (auto& r : manifest.stages) {
      if (r.stage == s) return r;
    }
    throw Error(ErrorCode::precondition, "unreachable");
  };
  const auto finish = [&] {
    manifest.finished_at = now();
    manifest.tree_hash = tree_hash(result.run_dir);
    io::write_file(manifest_path, serialize_manifest(manifest));
  };

  for (Stage s : kAllStages) {
    if (!stages.contains(s)) continue;
    auto& rec = record_for(s);
    const auto dir = ctx.dir(s);
    fs::remove_all(dir);
    spdlog::info("stage {}: start", to_string(s));
    try {
      run_stage(s, ctx);
      rec.status = StageStatus::succeeded;
      rec.error.reset();
      rec.artifacts = hash_dir(dir, result.run_dir);
    } catch (const std::exception& e) {
      rec.status = StageStatus::failed;
      rec.error = e.what();
      rec.artifacts = hash_dir(dir, result.run_dir);
      finish();
      spdlog::error("stage {} failed: {}", to_string(s), e.what());
      const auto* err = dynamic_cast<const Error*>(&e);
      if (err && (err->code() == ErrorCode::missing_input || is_provider_error(err->code()))) throw;
      throw Error(ErrorCode::stage_failure,
                  "stage '" + std::string(to_string(s)) + "' failed: " + e.what(),
                  {std::string(to_string(s))});
    }
  }
  finish();
  return result;
}

AskResult ask(const config::RunConfig& cfg, const fs::path& run_dir, const std::string& question,
              ProviderSet& providers) {
  const auto index_path = run_dir / "index" / "index.json";
  require_file(index_path, "retrieval index");
  retrieval::IndexDefaults defaults;
  const auto index = retrieval::load_index(index_path, &defaults);
  const auto vectors = providers.embedder->embed_texts({question});
  const auto hits = retrieval::retrieve(index, vectors.at(0), defaults.k, defaults.scorer);
  auto context = retrieval::assemble_context(hits, cfg.retrieval.context_budget);
  provider::ChatRequest req{
      subject_model(cfg),
      {{provider::Role::system, std::string(prompts::kGroundedInstruction)},
       {provider::Role::user, prompts::render_grounded_user_turn(context.text, question)}},
      0.7, 512, cfg.seed};
  const auto reply = providers.subject->chat_complete(req);
  return {std::string(text::trim(reply.text)), std::move(context.chunk_ids)};
}

}  // namespace knowslm::pipeline
