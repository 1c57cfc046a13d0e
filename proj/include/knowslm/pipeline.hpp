#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "knowslm/config.hpp"
#include "knowslm/provider.hpp"

namespace knowslm::pipeline {

enum class Stage { synth, plan, finetune, index, answer, judge, report };

inline constexpr std::array<Stage, 7> kAllStages{Stage::synth,  Stage::plan,  Stage::finetune,
                                                  Stage::index,  Stage::answer, Stage::judge,
                                                  Stage::report};

std::string_view to_string(Stage stage);
std::optional<Stage> parse_stage(std::string_view s);
// Comma-separated list; "all" selects every stage. Throws validation_error.
std::set<Stage> parse_stage_list(std::string_view list);

enum class StageStatus { pending, succeeded, failed };
std::string_view to_string(StageStatus status);

struct Artifact {
  std::string path;  // relative to the run directory
  std::string sha256;
};

struct StageRecord {
  Stage stage = Stage::synth;
  StageStatus status = StageStatus::pending;
  std::vector<Artifact> artifacts;
  std::optional<std::string> error;
};

struct RunManifest {
  std::string run_id;
  std::string config_hash;
  std::int64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<StageRecord> stages;  // every stage that has ever run in this directory
  std::string tree_hash;            // over every file except manifest.json
};

std::string serialize_manifest(const RunManifest& manifest);
RunManifest parse_manifest(std::string_view json);

// "run-<first 12 hex of config hash>-s<seed>".
std::string make_run_id(const config::RunConfig& config);

// sha256 over sorted "<relative path>\t<sha256>\n" lines, excluding manifest.json.
std::string tree_hash(const std::filesystem::path& run_dir);

// Live providers for one run. Rate limiters are shared between roles that
// hit the same endpoint with the same credentials.
struct ProviderSet {
  std::shared_ptr<provider::ChatProvider> generator;
  std::shared_ptr<provider::ChatProvider> judge;
  std::shared_ptr<provider::ChatProvider> subject;
  std::shared_ptr<provider::EmbeddingProvider> embedder;
  std::shared_ptr<provider::FinetuneService> finetune;
};

ProviderSet make_providers(const config::RunConfig& config,
                           provider::Sleeper sleeper = provider::real_sleeper());

struct RunOptions {
  std::optional<std::filesystem::path> run_dir;  // default: <output_root>/<run_id>
  std::function<std::string()> now;              // ISO-8601 timestamps; default: system clock
  provider::Sleeper sleeper = provider::real_sleeper();
  std::optional<ProviderSet> providers;          // default: built from the config
};

struct RunResult {
  RunManifest manifest;
  std::filesystem::path run_dir;
};

// Runs the selected stages in fixed order. On failure the manifest is still
// written (the failing stage marked failed) before the error propagates:
// missing_input and provider errors keep their codes, anything else becomes
// stage_failure naming the stage.
RunResult run_pipeline(const config::RunConfig& config, const std::set<Stage>& stages,
                       const RunOptions& options = {});

// One-off grounded answer against a built index (the `ask` subcommand).
struct AskResult {
  std::string answer;
  std::vector<std::string> chunk_ids;
};
AskResult ask(const config::RunConfig& config, const std::filesystem::path& run_dir,
              const std::string& question, ProviderSet& providers);

}  // namespace knowslm::pipeline
