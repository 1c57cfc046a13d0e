#include "knowslm/error.hpp"

namespace knowslm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::precondition: return "PreconditionViolation";
    case ErrorCode::no_markers_found: return "NoMarkersFound";
    case ErrorCode::malformed_alternation: return "MalformedAlternation";
    case ErrorCode::empty_context: return "EmptyContext";
    case ErrorCode::empty_question: return "EmptyQuestion";
    case ErrorCode::empty_completion: return "EmptyCompletion";
    case ErrorCode::empty_dataset: return "EmptyDataset";
    case ErrorCode::malformed_dataset: return "MalformedDataset";
    case ErrorCode::missing_alpha: return "MissingAlpha";
    case ErrorCode::invalid_overlap: return "InvalidOverlap";
    case ErrorCode::zero_vector: return "ZeroVector";
    case ErrorCode::dim_mismatch: return "DimMismatch";
    case ErrorCode::empty_index: return "EmptyIndex";
    case ErrorCode::budget_too_small: return "BudgetTooSmall";
    case ErrorCode::malformed_index: return "MalformedIndex";
    case ErrorCode::missing_field: return "MissingField";
    case ErrorCode::no_verdict_token: return "NoVerdictToken";
    case ErrorCode::missing_output: return "MissingOutput";
    case ErrorCode::incomplete_ledger: return "IncompleteLedger";
    case ErrorCode::non_positive_duration: return "NonPositiveDuration";
    case ErrorCode::auth_error: return "AuthError";
    case ErrorCode::rate_limited: return "RateLimited";
    case ErrorCode::transport_error: return "TransportError";
    case ErrorCode::malformed_response: return "MalformedResponse";
    case ErrorCode::provider_validation: return "ValidationError";
    case ErrorCode::unknown_job: return "UnknownJob";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::validation_error: return "ValidationError";
    case ErrorCode::missing_input: return "MissingInput";
    case ErrorCode::stage_failure: return "StageFailure";
  }
  return "Unknown";
}

ErrorFamily family(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse_error:
    case ErrorCode::validation_error:
      return ErrorFamily::validation;
    case ErrorCode::auth_error:
    case ErrorCode::rate_limited:
    case ErrorCode::transport_error:
    case ErrorCode::malformed_response:
    case ErrorCode::provider_validation:
    case ErrorCode::unknown_job:
      return ErrorFamily::provider;
    case ErrorCode::missing_input:
    case ErrorCode::stage_failure:
      return ErrorFamily::stage;
    default:
      return ErrorFamily::other;
  }
}

int exit_code(ErrorCode code) {
  switch (family(code)) {
    case ErrorFamily::validation: return 2;
    case ErrorFamily::provider: return 3;
    default: return 4;
  }
}

}  // namespace knowslm
