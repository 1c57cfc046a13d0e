#include "knowslm/config.hpp"

#include "knowslm/error.hpp"
#include "knowslm/io.hpp"
#include "knowslm/text.hpp"

namespace knowslm::config {
namespace {

using nlohmann::json;

// Collects violations instead of stopping at the first one.
class Checker {
 public:
  void fail(const std::string& where, const std::string& what) {
    violations_.push_back(where + ": " + what);
  }
  const std::vector<std::string>& violations() const { return violations_; }

  template <class T>
  std::optional<T> get(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) return std::nullopt;
    try {
      return obj.at(key).get<T>();
    } catch (const json::exception&) {
      fail(where + "." + key, "has the wrong type");
      return std::nullopt;
    }
  }

  template <class T>
  T get_or(const json& obj, const std::string& key, const std::string& where, T fallback) {
    auto v = get<T>(obj, key, where);
    return v ? *v : fallback;
  }

 private:
  std::vector<std::string> violations_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

ProviderSpec parse_provider(Checker& ck, const json& j, const std::string& where,
                            const ProviderSpec& defaults) {
  ProviderSpec p = defaults;
  if (!j.is_object()) {
    ck.fail(where, "must be an object");
    return p;
  }
  p.kind = ck.get_or<std::string>(j, "kind", where, p.kind);
  if (p.kind != "mock" && p.kind != "openai") {
    ck.fail(where + ".kind", "must be 'mock' or 'openai', got '" + p.kind + "'");
  }
  p.rule = ck.get_or<std::string>(j, "rule", where, p.rule);
  if (p.kind == "mock" && !provider::parse_mock_rule(p.rule)) {
    ck.fail(where + ".rule", "unknown mock rule '" + p.rule + "'");
  }
  if (auto s = ck.get<std::int64_t>(j, "seed", where)) p.seed = *s;
  p.model = ck.get_or<std::string>(j, "model", where, p.model);
  p.embedding_model = ck.get_or<std::string>(j, "embedding_model", where, p.embedding_model);
  p.base_url = ck.get_or<std::string>(j, "base_url", where, p.base_url);
  p.api_key_env = ck.get_or<std::string>(j, "api_key_env", where, p.api_key_env);
  p.requests_per_minute = ck.get_or<double>(
      j, "requests_per_minute", where, p.kind == "mock" ? 600000.0 : p.requests_per_minute);
  if (!(p.requests_per_minute > 0.0)) {
    ck.fail(where + ".requests_per_minute", "must be positive");
  }
  p.timeout_seconds = ck.get_or<int>(j, "timeout_seconds", where, p.timeout_seconds);
  p.max_attempts = ck.get_or<int>(j, "max_attempts", where, p.max_attempts);
  if (p.max_attempts < 1 || p.max_attempts > 5) {
    ck.fail(where + ".max_attempts", "must be between 1 and 5");
  }
  p.polls_to_complete = ck.get_or<int>(j, "polls_to_complete", where, p.polls_to_complete);
  if (p.polls_to_complete < 1) ck.fail(where + ".polls_to_complete", "must be >= 1");
  p.poll_interval_seconds = ck.get_or<double>(j, "poll_interval_seconds", where,
                                              p.kind == "mock" ? 0.0 : p.poll_interval_seconds);
  p.mock_tokens_per_second =
      ck.get_or<double>(j, "mock_tokens_per_second", where, p.mock_tokens_per_second);
  if (!(p.mock_tokens_per_second > 0.0)) {
    ck.fail(where + ".mock_tokens_per_second", "must be positive");
  }
  p.mock_cost_per_second = ck.get_or<double>(j, "mock_cost_per_second", where, p.mock_cost_per_second);
  if (p.model.empty() && p.kind == "openai") ck.fail(where + ".model", "is required for openai");
  return p;
}

lora::ModelArchSpec parse_arch(Checker& ck, const json& j, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() != "llama-3.3-70b") {
      ck.fail(where, "unknown architecture preset '" + j.get<std::string>() + "'");
    }
    return lora::llama_70b_reference();
  }
  lora::ModelArchSpec arch;
  if (!j.is_object()) {
    ck.fail(where, "must be a preset name or an object");
    return lora::llama_70b_reference();
  }
  arch.name = ck.get_or<std::string>(j, "name", where, "custom");
  arch.num_layers = ck.get_or<std::int64_t>(j, "num_layers", where, 0);
  arch.base_param_count = ck.get_or<std::int64_t>(j, "base_param_count", where, 0);
  if (j.contains("adapted_matrices") && j["adapted_matrices"].is_array()) {
    for (const auto& m : j["adapted_matrices"]) {
      arch.adapted_matrices.push_back({ck.get_or<std::string>(m, "label", where, ""),
                                       ck.get_or<std::int64_t>(m, "d_in", where, 0),
                                       ck.get_or<std::int64_t>(m, "d_out", where, 0)});
    }
  }
  try {
    lora::validate(arch);
  } catch (const Error& e) {
    ck.fail(where, e.what());
  }
  return arch;
}

}  // namespace

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, e.what());
  }
  if (!root.is_object()) throw Error(ErrorCode::parse_error, "config must be a JSON object");

  Checker ck;
  RunConfig cfg;
  cfg.base_dir = base_dir;
  cfg.source = root;

  if (auto seed = ck.get<std::int64_t>(root, "seed", "config")) {
    cfg.seed = *seed;
  } else if (!root.contains("seed")) {
    ck.fail("seed", "is required");
  }
  cfg.output_root = resolve(base_dir, ck.get_or<std::string>(root, "output_root", "config", "runs"));

  // providers
  if (!root.contains("providers") || !root["providers"].is_object()) {
    ck.fail("providers", "is required");
  } else {
    const auto& p = root["providers"];
    for (const char* role : {"generator", "judge", "embedder"}) {
      if (!p.contains(role)) ck.fail(std::string("providers.") + role, "is required");
    }
    ProviderSpec judge_default;
    judge_default.rule = "content_overlap";
    if (p.contains("generator")) cfg.providers.generator = parse_provider(ck, p["generator"], "providers.generator", {});
    if (p.contains("judge")) cfg.providers.judge = parse_provider(ck, p["judge"], "providers.judge", judge_default);
    if (p.contains("embedder")) cfg.providers.embedder = parse_provider(ck, p["embedder"], "providers.embedder", {});
    cfg.providers.subject = p.contains("subject")
                                ? parse_provider(ck, p["subject"], "providers.subject", {})
                                : cfg.providers.generator;
    cfg.providers.finetune = p.contains("finetune")
                                 ? parse_provider(ck, p["finetune"], "providers.finetune", {})
                                 : ProviderSpec{};
  }

  // documents
  if (!root.contains("documents") || !root["documents"].is_array() || root["documents"].empty()) {
    ck.fail("documents", "must be a non-empty array");
  } else {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < root["documents"].size(); ++i) {
      const auto& d = root["documents"][i];
      const std::string where = "documents[" + std::to_string(i) + "]";
      KnowledgeDocument doc;
      doc.id = ck.get_or<std::string>(d, "id", where, "");
      if (doc.id.empty()) ck.fail(where + ".id", "is required");
      if (!doc.id.empty() && !ids.insert(doc.id).second) ck.fail(where + ".id", "duplicate '" + doc.id + "'");
      doc.title = ck.get_or<std::string>(d, "title", where, doc.id);
      doc.source_tag = ck.get_or<std::string>(d, "source_tag", where, "article");
      auto mode = ck.get_or<std::string>(d, "language_mode", where, "english");
      if (auto m = parse_language_mode(mode)) {
        doc.language_mode = *m;
      } else {
        ck.fail(where + ".language_mode", "must be english or hinglish");
      }
      if (auto body = ck.get<std::string>(d, "body", where)) {
        doc.body = *body;
      } else if (auto path = ck.get<std::string>(d, "path", where)) {
        auto full = resolve(base_dir, *path);
        if (!std::filesystem::is_regular_file(full)) {
          ck.fail(where + ".path", "file not found: " + full.string());
        } else {
          doc.body = io::read_file(full);
        }
      } else {
        ck.fail(where, "needs 'path' or 'body'");
      }
      if (text::is_blank(doc.body) && d.is_object() && (d.contains("body") || d.contains("path"))) {
        if (!d.contains("path") || !doc.body.empty()) ck.fail(where, "body is empty");
      }
      cfg.documents.push_back(std::move(doc));
    }
  }

  // synthesis
  const json synth = root.value("synthesis", json::object());
  auto& sc = cfg.synthesis;
  sc.questions_per_document = ck.get_or<std::size_t>(synth, "questions_per_document", "synthesis", 20);
  sc.max_fraction = ck.get_or<double>(synth, "max_fraction", "synthesis", 0.3);
  if (!(sc.max_fraction > 0.0 && sc.max_fraction <= 1.0)) {
    ck.fail("synthesis.max_fraction", "must be in (0, 1]");
  }
  sc.starter_hints = ck.get_or<std::vector<std::string>>(synth, "starter_hints", "synthesis", {});
  sc.prefixes = ck.get_or<std::map<std::string, std::string>>(synth, "prefixes", "synthesis", {});
  for (const auto& [doc_id, prefix] : sc.prefixes) {
    if (prefix.empty()) ck.fail("synthesis.prefixes." + doc_id, "is empty");
  }
  sc.context_tokens = ck.get_or<std::size_t>(synth, "context_tokens", "synthesis", 64);
  sc.context_overlap = ck.get_or<std::size_t>(synth, "context_overlap", "synthesis", 8);
  if (sc.context_overlap >= sc.context_tokens) {
    ck.fail("synthesis.context_overlap", "must be smaller than context_tokens");
  }
  sc.parallelism = ck.get_or<std::size_t>(synth, "parallelism", "synthesis", 4);
  sc.markers.user = ck.get_or<std::string>(synth, "user_marker", "synthesis", "Q:");
  sc.markers.assistant = ck.get_or<std::string>(synth, "assistant_marker", "synthesis", "A:");

  // lora
  const json lj = root.value("lora", json::object());
  auto& ls = cfg.lora;
  if (lj.contains("arch")) ls.arch = parse_arch(ck, lj["arch"], "lora.arch");
  auto ranks = ck.get_or<std::vector<std::int64_t>>(lj, "ranks", "lora", {4, 6, 8, 32});
  for (auto r : ranks) {
    if (r < 1) ck.fail("lora.ranks", "rank " + std::to_string(r) + " must be >= 1");
    ls.ranks.insert(r);
  }
  if (lj.contains("alphas") && lj["alphas"].is_object()) {
    for (const auto& [k, v] : lj["alphas"].items()) {
      try {
        ls.alphas[std::stoll(k)] = v.get<double>();
      } catch (const std::exception&) {
        ck.fail("lora.alphas." + k, "must map an integer rank to a number");
      }
    }
  }
  for (auto r : ls.ranks) {
    if (!ls.alphas.contains(r)) ck.fail("lora.alphas", "no alpha for rank " + std::to_string(r));
  }
  ls.dropout = ck.get_or<double>(lj, "dropout", "lora", 0.1);
  if (!(ls.dropout >= 0.0 && ls.dropout < 1.0)) ck.fail("lora.dropout", "must be in [0, 1)");
  ls.selected_rank = ck.get_or<std::int64_t>(lj, "selected_rank", "lora",
                                             ls.ranks.empty() ? 8 : *ls.ranks.begin());
  if (!ls.ranks.empty() && !ls.ranks.contains(ls.selected_rank)) {
    ck.fail("lora.selected_rank", "must be one of the swept ranks");
  }
  ls.epochs = ck.get_or<int>(lj, "epochs", "lora", 1);
  if (ls.epochs < 1) ck.fail("lora.epochs", "must be >= 1");
  ls.base_model = ck.get_or<std::string>(lj, "base_model", "lora", ls.base_model);

  // retrieval
  const json rj = root.value("retrieval", json::object());
  auto& rs = cfg.retrieval;
  rs.target_tokens = ck.get_or<std::size_t>(rj, "target_tokens", "retrieval", 256);
  rs.overlap_tokens = ck.get_or<std::size_t>(rj, "overlap_tokens", "retrieval", 32);
  if (rs.overlap_tokens >= rs.target_tokens) {
    ck.fail("retrieval.overlap_tokens", "must be smaller than target_tokens");
  }
  rs.k = ck.get_or<std::size_t>(rj, "k", "retrieval", 4);
  if (rs.k < 1) ck.fail("retrieval.k", "must be >= 1");
  const auto scorer = ck.get_or<std::string>(rj, "scorer", "retrieval", "cosine");
  if (scorer == "hybrid") {
    const double w = ck.get_or<double>(rj, "hybrid_weight", "retrieval", 0.5);
    if (!(w >= 0.0 && w <= 1.0)) ck.fail("retrieval.hybrid_weight", "must be in [0, 1]");
    rs.scorer = retrieval::HybridScorer{w};
  } else if (scorer != "cosine") {
    ck.fail("retrieval.scorer", "must be 'cosine' or 'hybrid'");
  }
  rs.context_budget = ck.get_or<std::size_t>(rj, "context_budget", "retrieval", 512);
  if (rs.context_budget == 0) ck.fail("retrieval.context_budget", "must be positive");

  // evaluation
  const json ej = root.value("evaluation", json::object());
  auto& es = cfg.evaluation;
  if (auto p = ck.get<std::string>(ej, "prompts", "evaluation")) {
    es.prompts_file = resolve(base_dir, *p);
    if (!std::filesystem::is_regular_file(es.prompts_file)) {
      ck.fail("evaluation.prompts", "file not found: " + es.prompts_file.string());
    }
  } else {
    ck.fail("evaluation.prompts", "is required");
  }
  auto systems = ck.get_or<std::vector<std::string>>(ej, "systems", "evaluation", {"finetuned", "rag"});
  if (systems.size() != 2 || systems[0] == systems[1] || systems[0].empty() || systems[1].empty()) {
    ck.fail("evaluation.systems", "must name two different systems");
  } else {
    es.systems = {systems[0], systems[1]};
  }
  if (ej.contains("criteria")) {
    es.criteria.clear();
    for (const auto& c : ck.get_or<std::vector<std::string>>(ej, "criteria", "evaluation", {})) {
      if (auto parsed = judge::parse_criterion(c)) {
        es.criteria.insert(*parsed);
      } else {
        ck.fail("evaluation.criteria", "unknown criterion '" + c + "'");
      }
    }
    if (es.criteria.empty()) ck.fail("evaluation.criteria", "must not be empty");
  }
  es.knowledge_source = ck.get_or<std::string>(ej, "knowledge_source", "evaluation", "");
  if (text::is_blank(es.knowledge_source)) ck.fail("evaluation.knowledge_source", "is required");
  es.supply_context = ck.get_or<bool>(ej, "supply_context", "evaluation", true);
  es.parallelism = ck.get_or<std::size_t>(ej, "parallelism", "evaluation", 4);
  if (auto prefix = ck.get<std::string>(ej, "finetuned_prefix", "evaluation")) es.finetuned_prefix = *prefix;
  for (const auto& [label, path] :
       ck.get_or<std::map<std::string, std::string>>(ej, "responses", "evaluation", {})) {
    es.responses[label] = resolve(base_dir, path);
    if (!std::filesystem::is_regular_file(es.responses[label])) {
      ck.fail("evaluation.responses." + label, "file not found");
    }
  }
  for (const auto& s : {es.systems.first, es.systems.second}) {
    if (s != "base" && s != "finetuned" && s != "rag" && !es.responses.contains(s)) {
      ck.fail("evaluation.systems", "custom system '" + s + "' needs an evaluation.responses file");
    }
  }

  // cost
  const json cj = root.value("cost", json::object());
  cfg.cost.rate_per_second = ck.get_or<double>(cj, "rate_per_second", "cost", 0.0022);
  cfg.cost.assumed_tokens_per_second = ck.get_or<double>(cj, "assumed_tokens_per_second", "cost", 78.0);
  if (cfg.cost.rate_per_second < 0.0) ck.fail("cost.rate_per_second", "must be nonnegative");
  if (!(cfg.cost.assumed_tokens_per_second > 0.0)) {
    ck.fail("cost.assumed_tokens_per_second", "must be positive");
  }

  if (!ck.violations().empty()) {
    throw Error(ErrorCode::validation_error,
                std::to_string(ck.violations().size()) + " violation(s): " +
                    text::join(ck.violations(), "; "),
                ck.violations());
  }
  cfg.synthesis.seed = cfg.seed;
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::parse_error, "config file not found: " + path.string());
  }
  return parse_config(io::read_file(path), path.parent_path());
}

void override_seed(RunConfig& config, std::int64_t seed) {
  config.seed = seed;
  config.synthesis.seed = seed;
  config.source["seed"] = seed;
}

std::string stored_copy(const RunConfig& config) { return config.source.dump(2) + "\n"; }

std::string config_hash(const RunConfig& config) { return text::sha256_hex(stored_copy(config)); }

std::vector<judge::EvalPrompt> load_prompts(const std::filesystem::path& path) {
  std::vector<judge::EvalPrompt> out;
  std::set<std::string> ids;
  const auto lines = text::split_lines(io::read_file(path));
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (text::is_blank(lines[n])) continue;
    try {
      const auto j = json::parse(lines[n]);
      judge::EvalPrompt p{j.at("id").get<std::string>(), j.at("prompt").get<std::string>()};
      if (p.id.empty() || text::is_blank(p.text)) throw Error(ErrorCode::parse_error, "empty id or prompt");
      if (!ids.insert(p.id).second) throw Error(ErrorCode::parse_error, "duplicate prompt id " + p.id);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::parse_error,
                  path.string() + ":" + std::to_string(n + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace knowslm::config
