#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace knowslm::lora {

// One weight matrix that receives a rank-r adapter pair (A: d_in x r, B: r x d_out).
struct AdaptedMatrix {
  std::string label;
  std::int64_t d_in = 0;
  std::int64_t d_out = 0;
};

struct ModelArchSpec {
  std::string name;
  std::int64_t num_layers = 0;
  std::vector<AdaptedMatrix> adapted_matrices;  // per layer
  std::int64_t base_param_count = 0;
};

// Throws Error(precondition) on non-positive dimensions or an empty matrix set.
void validate(const ModelArchSpec& arch);

// 80-layer, 8192-wide, GQA (8 KV heads), 28672 MLP; all seven projections adapted.
ModelArchSpec llama_70b_reference();

struct LoraConfig {
  std::int64_t rank_r = 8;
  double alpha = 16.0;
  double dropout = 0.1;
  std::string dataset_label;
  std::int64_t record_count = 0;
};

void validate(const LoraConfig& config);

struct LoraPlan {
  LoraConfig config;
  std::int64_t trainable_params = 0;
  std::int64_t total_params = 0;
  double trainable_percent = 0.0;
  double adapter_scale = 0.0;
};

// num_layers * sum(d_in + d_out): adapter parameters contributed per unit of rank.
std::int64_t dim_sum(const ModelArchSpec& arch);
std::int64_t trainable_params(const ModelArchSpec& arch, std::int64_t rank_r);
double trainable_percent(double trainable, double total);
double adapter_scale(double alpha, std::int64_t rank_r);

LoraPlan make_plan(const ModelArchSpec& arch, const LoraConfig& config);

// One plan per rank, ascending. Throws Error(missing_alpha) when a rank has no alpha.
std::vector<LoraPlan> enumerate_sweep(const ModelArchSpec& arch,
                                      const std::set<std::int64_t>& ranks,
                                      const std::map<std::int64_t, double>& alphas,
                                      double dropout);

enum class TableFormat { csv, text };

// Columns: rank, alpha, trainable, total, percentage.
std::string format_plan_table(const std::vector<LoraPlan>& plans, TableFormat format);

}  // namespace knowslm::lora
