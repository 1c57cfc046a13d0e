#include <algorithm>
#include <cmath>
#include <thread>

#include <spdlog/spdlog.h>

#include "knowslm/dialogue.hpp"
#include "knowslm/error.hpp"
#include "knowslm/io.hpp"
#include "knowslm/provider.hpp"

namespace knowslm::provider {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  return std::nullopt;
}

void validate(const ChatRequest& request) {
  if (request.messages.empty()) throw Error(ErrorCode::precondition, "chat request has no messages");
  if (request.max_tokens <= 0) throw Error(ErrorCode::precondition, "max_tokens must be positive");
}

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::succeeded: return "succeeded";
    case JobState::failed: return "failed";
  }
  return "queued";
}

void validate(const FinetuneJobSpec& spec) {
  if (spec.base_model_id.empty()) {
    throw Error(ErrorCode::provider_validation, "base_model_id is empty");
  }
  if (spec.epochs < 1) throw Error(ErrorCode::provider_validation, "epochs must be >= 1");
  try {
    lora::validate(spec.lora);
  } catch (const Error& e) {
    throw Error(ErrorCode::provider_validation, e.what());
  }
  if (!std::filesystem::is_regular_file(spec.dataset_file)) {
    throw Error(ErrorCode::provider_validation,
                "dataset file not found: " + spec.dataset_file.string());
  }
  try {
    auto ds = dialogue::import_dataset(io::read_file(spec.dataset_file),
                                       dialogue::DatasetFormat::role_records);
    if (ds.records.empty()) throw Error(ErrorCode::empty_dataset, "no records");
  } catch (const Error& e) {
    throw Error(ErrorCode::provider_validation,
                "dataset " + spec.dataset_file.string() + " is not valid role-records: " + e.what());
  }
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

bool is_transient_status(int status) {
  return status == 408 || status == 429 || (status >= 500 && status <= 599);
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry, std::mt19937_64& rng) {
  const double cap = std::min(static_cast<double>(policy.max_delay.count()),
                              static_cast<double>(policy.base_delay.count()) *
                                  std::pow(policy.factor, retry));
  std::uniform_real_distribution<double> dist(0.0, cap);
  return std::chrono::milliseconds(static_cast<std::int64_t>(dist(rng)));
}

RetryOutcome send_with_retry(HttpTransport& transport, const HttpRequest& request,
                             const RetryPolicy& policy, const Sleeper& sleep,
                             std::mt19937_64& rng) {
  const int max_attempts = std::max(1, policy.max_attempts);
  int last_status = 0;
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    try {
      HttpResponse resp = transport.send(request);
      if (!is_transient_status(resp.status)) return {std::move(resp), attempt};
      last_status = resp.status;
      last_error = "HTTP " + std::to_string(resp.status);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::transport_error) throw;
      last_status = 0;
      last_error = e.what();
    }
    spdlog::warn("{} {} attempt {}/{} failed: {}", request.method, request.path, attempt,
                 max_attempts, last_error);
    if (attempt < max_attempts) sleep(backoff_delay(policy, attempt - 1, rng));
  }
  if (last_status == 429) {
    throw Error(ErrorCode::rate_limited,
                "still rate limited after " + std::to_string(max_attempts) + " attempts");
  }
  throw Error(ErrorCode::transport_error,
              last_error + " after " + std::to_string(max_attempts) + " attempts");
}

RateLimiter::RateLimiter(double requests_per_minute, Sleeper sleep, Clock clock)
    : rpm_(requests_per_minute), sleep_(std::move(sleep)), clock_(std::move(clock)) {
  if (!(rpm_ > 0.0)) throw Error(ErrorCode::precondition, "requests_per_minute must be positive");
  capacity_ = std::max(1.0, rpm_ / 60.0);
  tokens_ = capacity_;
  last_ = clock_();
}

void RateLimiter::acquire() {
  std::lock_guard lock(mu_);
  const double per_ms = rpm_ / 60000.0;
  auto now = clock_();
  const double elapsed_ms =
      std::chrono::duration<double, std::milli>(now - last_).count();
  tokens_ = std::min(capacity_, tokens_ + elapsed_ms * per_ms);
  last_ = now;
  if (tokens_ >= 1.0) {
    tokens_ -= 1.0;
    return;
  }
  const auto wait = std::chrono::milliseconds(
      static_cast<std::int64_t>(std::ceil((1.0 - tokens_) / per_ms)));
  sleep_(wait);
  // The slept interval accrued exactly the missing fraction; it is spent now.
  tokens_ = 0.0;
  last_ = clock_();
}

}  // namespace knowslm::provider
