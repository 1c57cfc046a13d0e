#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace knowslm {

enum class ErrorCode {
  // Caller broke a documented precondition.
  precondition,

  // dialogue-synth
  no_markers_found,
  malformed_alternation,
  empty_context,
  empty_question,
  empty_completion,
  empty_dataset,
  malformed_dataset,

  // lora-planner
  missing_alpha,

  // retrieval-engine
  invalid_overlap,
  zero_vector,
  dim_mismatch,
  empty_index,
  budget_too_small,
  malformed_index,

  // judge-harness
  missing_field,
  no_verdict_token,
  missing_output,

  // report-and-cost
  incomplete_ledger,
  non_positive_duration,

  // provider-gateway
  auth_error,
  rate_limited,
  transport_error,
  malformed_response,
  provider_validation,
  unknown_job,

  // cli-orchestrator
  parse_error,
  validation_error,
  missing_input,
  stage_failure,
};

enum class ErrorFamily { validation, provider, stage, other };

std::string_view to_string(ErrorCode code);
ErrorFamily family(ErrorCode code);

// Process exit status for the CLI: 2 validation, 3 provider, 4 everything else.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  Error(ErrorCode code, const std::string& message,
        std::vector<std::string> details)
      : Error(code, message) {
    details_ = std::move(details);
  }

  ErrorCode code() const noexcept { return code_; }

  // Individual violations for aggregated errors (config validation).
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::vector<std::string> details_;
};

inline bool is_provider_error(ErrorCode code) {
  return family(code) == ErrorFamily::provider;
}

}  // namespace knowslm
