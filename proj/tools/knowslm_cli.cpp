#include <cstdint>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "knowslm/config.hpp"
#include "knowslm/error.hpp"
#include "knowslm/io.hpp"
#include "knowslm/lora.hpp"
#include "knowslm/pipeline.hpp"

namespace {

using knowslm::Error;
using knowslm::ErrorCode;
namespace pl = knowslm::pipeline;

struct Globals {
  std::string config_path;
  std::optional<std::int64_t> seed;
  std::string stages = "all";
  std::string run_dir;
  bool verbose = false;
};

knowslm::config::RunConfig load(const Globals& g) {
  if (g.config_path.empty()) throw Error(ErrorCode::validation_error, "--config is required");
  auto cfg = knowslm::config::load_config(g.config_path);
  if (g.seed) knowslm::config::override_seed(cfg, *g.seed);
  return cfg;
}

pl::RunOptions options_for(const Globals& g) {
  pl::RunOptions opts;
  if (!g.run_dir.empty()) opts.run_dir = std::filesystem::path(g.run_dir);
  return opts;
}

void print_manifest(const pl::RunResult& r) {
  fmt::print("run {} -> {}\n", r.manifest.run_id, r.run_dir.string());
  for (const auto& s : r.manifest.stages) {
    fmt::print("  {:<9} {:<10} {} artifact(s)\n", pl::to_string(s.stage), pl::to_string(s.status),
               s.artifacts.size());
  }
  fmt::print("tree {}\n", r.manifest.tree_hash);
}

int run_stages(const Globals& g, const std::set<pl::Stage>& stages) {
  const auto cfg = load(g);
  print_manifest(pl::run_pipeline(cfg, stages, options_for(g)));
  return 0;
}

// Without a config, `plan` prints the reference-architecture sweep.
int standalone_plan(const std::vector<std::int64_t>& ranks, const std::string& format) {
  std::set<std::int64_t> rs(ranks.begin(), ranks.end());
  std::map<std::int64_t, double> alphas;
  for (auto r : rs) alphas[r] = 2.0 * static_cast<double>(r);
  const auto plans = knowslm::lora::enumerate_sweep(knowslm::lora::llama_70b_reference(), rs, alphas, 0.1);
  fmt::print("{}", knowslm::lora::format_plan_table(
                       plans, format == "csv" ? knowslm::lora::TableFormat::csv
                                              : knowslm::lora::TableFormat::text));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowslm: knowledge-grounded small-LM pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("-c,--config", g.config_path, "Run configuration (JSON)");
  app.add_option("-s,--seed", g.seed, "Override the configured seed");
  app.add_option("--stages", g.stages, "Comma-separated stages for `run` (default: all)");
  app.add_option("--run-dir", g.run_dir, "Use this run directory instead of <output_root>/<run_id>");
  app.add_flag("-v,--verbose", g.verbose, "Log progress to stderr");

  auto* synth = app.add_subcommand("synth", "Generate the dialogue dataset");
  auto* plan = app.add_subcommand("plan", "LoRA sweep table and training-cost estimate");
  std::vector<std::int64_t> plan_ranks{2, 4, 8, 16, 32, 64};
  std::string plan_format = "text";
  plan->add_option("--ranks", plan_ranks, "Ranks for the standalone reference table")->delimiter(',');
  plan->add_option("--format", plan_format, "Standalone table format")->check(CLI::IsMember({"text", "csv"}));
  auto* finetune = app.add_subcommand("finetune", "Submit and poll the fine-tune job");
  auto* index = app.add_subcommand("index", "Chunk and embed the documents");
  auto* ask = app.add_subcommand("ask", "Answer the evaluation prompts, or one question if given");
  std::string question;
  ask->add_option("question", question, "Single question answered through retrieval");
  auto* judge = app.add_subcommand("judge", "Debiased pairwise judging of the two systems");
  auto* report = app.add_subcommand("report", "Win charts and cost table");
  auto* run = app.add_subcommand("run", "Run the selected stages end to end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("knowslm"));
  spdlog::set_level(g.verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*synth) return run_stages(g, {pl::Stage::synth});
    if (*plan) {
      if (g.config_path.empty()) return standalone_plan(plan_ranks, plan_format);
      return run_stages(g, {pl::Stage::plan});
    }
    if (*finetune) return run_stages(g, {pl::Stage::finetune});
    if (*index) return run_stages(g, {pl::Stage::index});
    if (*ask) {
      if (question.empty()) return run_stages(g, {pl::Stage::answer});
      const auto cfg = load(g);
      const auto dir = g.run_dir.empty() ? cfg.output_root / pl::make_run_id(cfg)
                                         : std::filesystem::path(g.run_dir);
      auto providers = pl::make_providers(cfg);
      const auto r = pl::ask(cfg, dir, question, providers);
      fmt::print("{}\n", r.answer);
      for (const auto& id : r.chunk_ids) fmt::print("  [{}]\n", id);
      return 0;
    }
    if (*judge) return run_stages(g, {pl::Stage::judge});
    if (*report) {
      const auto cfg = load(g);
      const auto r = pl::run_pipeline(cfg, {pl::Stage::report}, options_for(g));
      fmt::print("{}", knowslm::io::read_file(r.run_dir / "report" / "winchart.csv"));
      return 0;
    }
    if (*run) return run_stages(g, pl::parse_stage_list(g.stages));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& d : e.details()) std::cerr << "  - " << d << "\n";
    return knowslm::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
