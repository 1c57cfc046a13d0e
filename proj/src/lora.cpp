#include "knowslm/lora.hpp"

#include <fmt/format.h>

#include "knowslm/error.hpp"

namespace knowslm::lora {

void validate(const ModelArchSpec& arch) {
  if (arch.num_layers <= 0) throw Error(ErrorCode::precondition, "num_layers must be positive");
  if (arch.base_param_count <= 0) {
    throw Error(ErrorCode::precondition, "base_param_count must be positive");
  }
  if (arch.adapted_matrices.empty()) {
    throw Error(ErrorCode::precondition, "adapted_matrices is empty");
  }
  for (const auto& m : arch.adapted_matrices) {
    if (m.d_in <= 0 || m.d_out <= 0) {
      throw Error(ErrorCode::precondition, "matrix '" + m.label + "' has a non-positive dimension");
    }
  }
}

ModelArchSpec llama_70b_reference() {
  constexpr std::int64_t kHidden = 8192;
  constexpr std::int64_t kKv = 1024;
  constexpr std::int64_t kMlp = 28672;
  return ModelArchSpec{
      .name = "llama-3.3-70b",
      .num_layers = 80,
      .adapted_matrices = {{"q_proj", kHidden, kHidden},
                           {"k_proj", kHidden, kKv},
                           {"v_proj", kHidden, kKv},
                           {"o_proj", kHidden, kHidden},
                           {"gate_proj", kHidden, kMlp},
                           {"up_proj", kHidden, kMlp},
                           {"down_proj", kMlp, kHidden}},
      .base_param_count = 70'553'706'496,
  };
}

void validate(const LoraConfig& config) {
  if (config.rank_r < 1) throw Error(ErrorCode::precondition, "rank_r must be >= 1");
  if (!(config.alpha > 0.0)) throw Error(ErrorCode::precondition, "alpha must be positive");
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
    throw Error(ErrorCode::precondition, "dropout must be in [0, 1)");
  }
  if (config.record_count < 0) throw Error(ErrorCode::precondition, "record_count is negative");
}

std::int64_t dim_sum(const ModelArchSpec& arch) {
  validate(arch);
  std::int64_t per_layer = 0;
  for (const auto& m : arch.adapted_matrices) per_layer += m.d_in + m.d_out;
  return arch.num_layers * per_layer;
}

std::int64_t trainable_params(const ModelArchSpec& arch, std::int64_t rank_r) {
  if (rank_r < 1) throw Error(ErrorCode::precondition, "rank_r must be >= 1");
  return rank_r * dim_sum(arch);
}

double trainable_percent(double trainable, double total) {
  if (!(total > 0.0)) throw Error(ErrorCode::precondition, "total must be positive (divide by zero)");
  return 100.0 * trainable / total;
}

double adapter_scale(double alpha, std::int64_t rank_r) {
  if (rank_r < 1) throw Error(ErrorCode::precondition, "rank_r must be >= 1");
  return alpha / static_cast<double>(rank_r);
}

LoraPlan make_plan(const ModelArchSpec& arch, const LoraConfig& config) {
  validate(config);
  LoraPlan plan;
  plan.config = config;
  plan.trainable_params = trainable_params(arch, config.rank_r);
  plan.total_params = arch.base_param_count + plan.trainable_params;
  plan.trainable_percent = trainable_percent(static_cast<double>(plan.trainable_params),
                                             static_cast<double>(plan.total_params));
  plan.adapter_scale = adapter_scale(config.alpha, config.rank_r);
  return plan;
}

std::vector<LoraPlan> enumerate_sweep(const ModelArchSpec& arch,
                                      const std::set<std::int64_t>& ranks,
                                      const std::map<std::int64_t, double>& alphas,
                                      double dropout) {
  for (auto r : ranks) {
    if (!alphas.contains(r)) {
      throw Error(ErrorCode::missing_alpha, "no alpha for rank " + std::to_string(r));
    }
  }
  std::vector<LoraPlan> plans;
  plans.reserve(ranks.size());
  for (auto r : ranks) {  // std::set iterates ascending
    plans.push_back(make_plan(arch, LoraConfig{.rank_r = r, .alpha = alphas.at(r), .dropout = dropout}));
  }
  return plans;
}

std::string format_plan_table(const std::vector<LoraPlan>& plans, TableFormat format) {
  std::string out;
  if (format == TableFormat::csv) {
    out += "rank,alpha,trainable,total,percentage\n";
    for (const auto& p : plans) {
      out += fmt::format("{},{:g},{},{},{:.6e}\n", p.config.rank_r, p.config.alpha,
                         p.trainable_params, p.total_params, p.trainable_percent);
    }
    return out;
  }
  out += fmt::format("{:>6}  {:>8}  {:>12}  {:>12}  {:>12}\n", "rank", "alpha", "trainable",
                     "total", "percentage");
  for (const auto& p : plans) {
    out += fmt::format("{:>6}  {:>8g}  {:>12.3e}  {:>12.3e}  {:>12.3e}\n", p.config.rank_r,
                       p.config.alpha, static_cast<double>(p.trainable_params),
                       static_cast<double>(p.total_params), p.trainable_percent);
  }
  return out;
}

}  // namespace knowslm::lora
