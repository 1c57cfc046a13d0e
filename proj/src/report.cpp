#include "knowslm/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "knowslm/error.hpp"
#include "knowslm/text.hpp"

namespace knowslm::report {
namespace {

using nlohmann::ordered_json;

constexpr std::string_view kWinHeader =
    "criterion,system_1,system_2,wins_system_1,wins_system_2,ties,prompt_count";
constexpr std::string_view kCostHeader =
    "label,dataset_tokens,training_seconds,cost_usd,cost_per_second,tokens_per_second";

void require_positive(double seconds) {
  if (!(seconds > 0.0)) {
    throw Error(ErrorCode::non_positive_duration,
                "training_seconds must be positive, got " + fmt::format("{}", seconds));
  }
}

std::size_t to_size(const std::string& s) {
  try {
    std::size_t used = 0;
    auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::parse_error, "not a count: '" + s + "'");
  }
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::parse_error, "not a number: '" + s + "'");
  }
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

WinChart aggregate_wins(const judge::VerdictLedger& ledger) {
  WinChart chart;
  chart.systems = ledger.systems;
  std::map<judge::Criterion, std::set<std::string>> seen;
  std::map<judge::Criterion, CriterionTally> tallies;
  for (const auto& e : ledger.entries) {
    if (!seen[e.criterion].insert(e.prompt_id).second) {
      throw Error(ErrorCode::incomplete_ledger, "duplicate entry for prompt '" + e.prompt_id +
                                                    "' / " + std::string(to_string(e.criterion)));
    }
    auto& t = tallies[e.criterion];
    t.criterion = e.criterion;
    switch (e.verdict.resolved_winner) {
      case judge::Resolved::sys1: ++t.wins_sys1; break;
      case judge::Resolved::sys2: ++t.wins_sys2; break;
      case judge::Resolved::tie: ++t.ties; break;
    }
  }
  if (!seen.empty()) {
    const auto& reference = seen.begin()->second;
    for (const auto& [criterion, prompts] : seen) {
      if (prompts != reference) {
        throw Error(ErrorCode::incomplete_ledger,
                    "criterion " + std::string(to_string(criterion)) +
                        " does not cover the same prompts as the others");
      }
    }
    chart.prompt_count = reference.size();
  }
  for (auto c : judge::kAllCriteria) {
    if (auto it = tallies.find(c); it != tallies.end()) chart.rows.push_back(it->second);
  }
  return chart;
}

double tokens_per_second(double dataset_tokens, double training_seconds) {
  require_positive(training_seconds);
  return dataset_tokens / training_seconds;
}

double cost_per_second(double cost, double training_seconds) {
  require_positive(training_seconds);
  return cost / training_seconds;
}

double estimate_training_cost(double predicted_seconds, double rate_per_second) {
  if (predicted_seconds < 0.0 || rate_per_second < 0.0) {
    throw Error(ErrorCode::precondition, "duration and rate must be nonnegative");
  }
  return predicted_seconds * rate_per_second;
}

CostRecord make_cost_record(std::string label, std::int64_t dataset_tokens,
                            double training_seconds, double cost) {
  CostRecord r;
  r.label = std::move(label);
  r.dataset_tokens = dataset_tokens;
  r.training_seconds = training_seconds;
  r.cost = cost;
  r.cost_per_second = cost_per_second(cost, training_seconds);
  r.tokens_per_second = tokens_per_second(static_cast<double>(dataset_tokens), training_seconds);
  return r;
}

std::string emit_winchart_csv(const WinChart& chart) {
  std::string out(kWinHeader);
  out += "\n";
  for (const auto& row : chart.rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", judge::to_string(row.criterion),
                       text::csv_field(chart.systems.first), text::csv_field(chart.systems.second),
                       row.wins_sys1, row.wins_sys2, row.ties, chart.prompt_count);
  }
  return out;
}

WinChart parse_winchart_csv(std::string_view csv) {
  const auto rows = text::parse_csv(csv);
  if (rows.empty() || text::join(rows[0], ",") != kWinHeader) {
    throw Error(ErrorCode::parse_error, "winchart csv header mismatch");
  }
  WinChart chart;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 7) throw Error(ErrorCode::parse_error, "winchart row has wrong arity");
    auto c = judge::parse_criterion(r[0]);
    if (!c) throw Error(ErrorCode::parse_error, "unknown criterion '" + r[0] + "'");
    chart.systems = {r[1], r[2]};
    chart.prompt_count = to_size(r[6]);
    chart.rows.push_back({*c, to_size(r[3]), to_size(r[4]), to_size(r[5])});
  }
  return chart;
}

std::string emit_costs_csv(const std::vector<CostRecord>& costs) {
  std::string out(kCostHeader);
  out += "\n";
  for (const auto& c : costs) {
    out += fmt::format("{},{},{},{},{},{}\n", text::csv_field(c.label), c.dataset_tokens,
                       c.training_seconds, c.cost, c.cost_per_second, c.tokens_per_second);
  }
  return out;
}

std::vector<CostRecord> parse_costs_csv(std::string_view csv) {
  const auto rows = text::parse_csv(csv);
  if (rows.empty() || text::join(rows[0], ",") != kCostHeader) {
    throw Error(ErrorCode::parse_error, "costs csv header mismatch");
  }
  std::vector<CostRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 6) throw Error(ErrorCode::parse_error, "costs row has wrong arity");
    out.push_back(CostRecord{r[0], static_cast<std::int64_t>(to_size(r[1])), to_double(r[2]),
                             to_double(r[3]), to_double(r[4]), to_double(r[5])});
  }
  return out;
}

std::string emit_winchart_svg(const WinChart& chart) {
  constexpr int kWidth = 640;
  constexpr int kHeight = 360;
  constexpr int kTop = 50;
  constexpr int kBottom = 300;  // baseline
  constexpr int kLeft = 40;
  constexpr int kBar = 36;
  constexpr int kGap = 8;
  constexpr std::array<std::string_view, 3> kColors = {"#4c78a8", "#f58518", "#9d9d9d"};

  const std::string sys1 = xml_escape(chart.systems.first);
  const std::string sys2 = xml_escape(chart.systems.second);
  std::string out;
  out += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"12\">\n",
      kWidth, kHeight, kWidth, kHeight);
  out += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", kWidth, kHeight);
  out += fmt::format(
      "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">Win chart: {} vs {} "
      "({} prompts)</text>\n",
      kWidth / 2, sys1, sys2, chart.prompt_count);
  out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\"/>\n", kLeft,
                     kBottom, kWidth - kLeft, kBottom);

  const double scale = chart.prompt_count > 0
                           ? static_cast<double>(kBottom - kTop) / static_cast<double>(chart.prompt_count)
                           : 0.0;
  const int groups = static_cast<int>(chart.rows.size());
  const int slot = groups > 0 ? (kWidth - 2 * kLeft) / groups : 0;
  for (int g = 0; g < groups; ++g) {
    const auto& row = chart.rows[static_cast<std::size_t>(g)];
    const std::array<std::size_t, 3> counts = {row.wins_sys1, row.wins_sys2, row.ties};
    const int group_width = 3 * kBar + 2 * kGap;
    const int x0 = kLeft + g * slot + (slot - group_width) / 2;
    for (int b = 0; b < 3; ++b) {
      const double h = static_cast<double>(counts[static_cast<std::size_t>(b)]) * scale;
      const int x = x0 + b * (kBar + kGap);
      out += fmt::format(
          "<rect x=\"{}\" y=\"{:.2f}\" width=\"{}\" height=\"{:.2f}\" fill=\"{}\"/>\n", x,
          kBottom - h, kBar, h, kColors[static_cast<std::size_t>(b)]);
      out += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n",
                         x + kBar / 2, kBottom - h - 4.0, counts[static_cast<std::size_t>(b)]);
    }
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                       x0 + group_width / 2, kBottom + 18, judge::display_name(row.criterion));
  }

  const std::array<std::string, 3> legend = {sys1 + " wins", sys2 + " wins", "ties"};
  for (int i = 0; i < 3; ++i) {
    const int x = kLeft + i * 180;
    out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", x,
                       kHeight - 28, kColors[static_cast<std::size_t>(i)]);
    out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", x + 18, kHeight - 18,
                       legend[static_cast<std::size_t>(i)]);
  }
  out += "</svg>\n";
  return out;
}

std::string emit_report(const WinChart& chart, const std::vector<CostRecord>& costs,
                        ReportFormat format) {
  switch (format) {
    case ReportFormat::csv:
      return emit_winchart_csv(chart) + "\n" + emit_costs_csv(costs);
    case ReportFormat::svg_bars:
      return emit_winchart_svg(chart);
    case ReportFormat::json: {
      ordered_json rows = ordered_json::array();
      for (const auto& r : chart.rows) {
        rows.push_back({{"criterion", judge::to_string(r.criterion)},
                        {"wins_system_1", r.wins_sys1},
                        {"wins_system_2", r.wins_sys2},
                        {"ties", r.ties}});
      }
      ordered_json cost_rows = ordered_json::array();
      for (const auto& c : costs) {
        cost_rows.push_back({{"label", c.label},
                             {"dataset_tokens", c.dataset_tokens},
                             {"training_seconds", c.training_seconds},
                             {"cost_usd", c.cost},
                             {"cost_per_second", c.cost_per_second},
                             {"tokens_per_second", c.tokens_per_second}});
      }
      ordered_json doc = {{"systems", {chart.systems.first, chart.systems.second}},
                          {"prompt_count", chart.prompt_count},
                          {"criteria", std::move(rows)},
                          {"costs", std::move(cost_rows)}};
      return doc.dump(2) + "\n";
    }
  }
  return {};
}

}  // namespace knowslm::report
