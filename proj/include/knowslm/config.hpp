#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "knowslm/dialogue.hpp"
#include "knowslm/document.hpp"
#include "knowslm/judge.hpp"
#include "knowslm/lora.hpp"
#include "knowslm/retrieval.hpp"

namespace knowslm::config {

struct ProviderSpec {
  std::string kind = "mock";  // "mock" or "openai"
  std::string rule = "generator";  // mock behaviour
  std::optional<std::int64_t> seed;  // mock seed; defaults to the run seed
  std::string model;
  std::string embedding_model = "text-embedding-3-small";
  std::string base_url = "https://api.openai.com";
  std::string api_key_env = "OPENAI_API_KEY";
  double requests_per_minute = 60.0;
  int timeout_seconds = 60;
  int max_attempts = 5;
  // Fine-tune job services.
  int polls_to_complete = 3;
  double poll_interval_seconds = 10.0;
  double mock_tokens_per_second = 78.0;
  double mock_cost_per_second = 0.0022;
};

struct Providers {
  ProviderSpec generator;
  ProviderSpec judge;
  ProviderSpec embedder;
  ProviderSpec subject;  // answers evaluation prompts; defaults to generator
  ProviderSpec finetune;
};

struct LoraSettings {
  lora::ModelArchSpec arch = lora::llama_70b_reference();
  std::set<std::int64_t> ranks;
  std::map<std::int64_t, double> alphas;
  double dropout = 0.1;
  std::int64_t selected_rank = 0;
  int epochs = 1;
  std::string base_model = "llama-3.3-70b-instruct";
};

struct RetrievalSettings {
  std::size_t target_tokens = 256;
  std::size_t overlap_tokens = 32;
  std::size_t k = 4;
  retrieval::Scorer scorer = retrieval::CosineScorer{};
  std::size_t context_budget = 512;
};

struct EvaluationSettings {
  std::filesystem::path prompts_file;
  std::pair<std::string, std::string> systems{"finetuned", "rag"};
  std::set<judge::Criterion> criteria{judge::kAllCriteria.begin(), judge::kAllCriteria.end()};
  std::string knowledge_source;
  bool supply_context = true;
  std::size_t parallelism = 4;
  std::optional<std::string> finetuned_prefix;
  std::map<std::string, std::filesystem::path> responses;  // custom system -> JSONL file
};

struct CostSettings {
  double rate_per_second = 0.0022;
  double assumed_tokens_per_second = 78.0;
};

struct RunConfig {
  std::int64_t seed = 0;
  std::filesystem::path output_root;
  Providers providers;
  std::vector<KnowledgeDocument> documents;
  dialogue::SynthesisConfig synthesis;
  LoraSettings lora;
  RetrievalSettings retrieval;
  EvaluationSettings evaluation;
  CostSettings cost;

  std::filesystem::path base_dir;  // relative paths resolve against this
  nlohmann::json source;           // the parsed file, for the stored copy
};

// Parses and validates. Every violation is collected before throwing
// Error(validation_error) with one detail line per violation; malformed
// JSON throws Error(parse_error).
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

// Replaces the run seed (and every provider seed that was inherited from it).
void override_seed(RunConfig& config, std::int64_t seed);

// Canonical stored copy of the effective configuration and its sha256.
std::string stored_copy(const RunConfig& config);
std::string config_hash(const RunConfig& config);

// JSONL: {"id": "...", "prompt": "..."} per line.
std::vector<judge::EvalPrompt> load_prompts(const std::filesystem::path& path);

}  // namespace knowslm::config
