#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "knowslm/judge.hpp"

namespace knowslm::report {

struct CriterionTally {
  judge::Criterion criterion = judge::Criterion::knowledge;
  std::size_t wins_sys1 = 0;
  std::size_t wins_sys2 = 0;
  std::size_t ties = 0;

  bool operator==(const CriterionTally&) const = default;
};

struct WinChart {
  std::pair<std::string, std::string> systems;
  std::size_t prompt_count = 0;
  std::vector<CriterionTally> rows;  // fixed criterion order

  bool operator==(const WinChart&) const = default;
};

// Every criterion present must cover the same prompts exactly once;
// otherwise Error(incomplete_ledger).
WinChart aggregate_wins(const judge::VerdictLedger& ledger);

struct CostRecord {
  std::string label;
  std::int64_t dataset_tokens = 0;
  double training_seconds = 0.0;
  double cost = 0.0;  // USD
  double cost_per_second = 0.0;
  double tokens_per_second = 0.0;

  bool operator==(const CostRecord&) const = default;
};

inline constexpr double kReferenceCostPerSecond = 0.0022;  // USD/s, H100 serverless average

double tokens_per_second(double dataset_tokens, double training_seconds);
double cost_per_second(double cost, double training_seconds);
double estimate_training_cost(double predicted_seconds, double rate_per_second);

CostRecord make_cost_record(std::string label, std::int64_t dataset_tokens,
                            double training_seconds, double cost);

enum class ReportFormat { csv, json, svg_bars };

// csv: winchart table, a blank line, then the costs table.
std::string emit_report(const WinChart& chart, const std::vector<CostRecord>& costs,
                        ReportFormat format);

// winchart.csv header:
//   criterion,system_1,system_2,wins_system_1,wins_system_2,ties,prompt_count
std::string emit_winchart_csv(const WinChart& chart);
WinChart parse_winchart_csv(std::string_view csv);

// costs.csv header:
//   label,dataset_tokens,training_seconds,cost_usd,cost_per_second,tokens_per_second
std::string emit_costs_csv(const std::vector<CostRecord>& costs);
std::vector<CostRecord> parse_costs_csv(std::string_view csv);

std::string emit_winchart_svg(const WinChart& chart);

}  // namespace knowslm::report
