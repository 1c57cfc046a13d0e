#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "knowslm/embedding.hpp"
#include "knowslm/lora.hpp"

namespace knowslm::provider {

enum class Role { system, user, assistant };
std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view s);

struct Message {
  Role role = Role::user;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.7;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;
};

void validate(const ChatRequest& request);

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total() const { return prompt_tokens + completion_tokens; }
  Usage& operator+=(const Usage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    return *this;
  }
};

struct ChatResult {
  std::string text;
  Usage usage;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResult chat_complete(const ChatRequest& request) = 0;
  // Default model id used when a request leaves model_id empty.
  virtual std::string default_model() const = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<retrieval::EmbeddingVector> embed_texts(
      const std::vector<std::string>& texts) = 0;
};

// ---------------------------------------------------------------------------
// Fine-tune jobs

struct FinetuneJobSpec {
  std::string base_model_id;
  std::filesystem::path dataset_file;  // role-records JSONL
  lora::LoraConfig lora;
  int epochs = 1;
};

// Throws Error(provider_validation) when the dataset file is missing or does
// not parse as role-records, or on invalid LoRA/epoch settings.
void validate(const FinetuneJobSpec& spec);

enum class JobState { queued, running, succeeded, failed };
std::string_view to_string(JobState state);
inline bool is_terminal(JobState s) { return s == JobState::succeeded || s == JobState::failed; }

struct JobStatus {
  std::string job_id;
  JobState state = JobState::queued;
  double elapsed_seconds = 0.0;
  std::optional<double> reported_cost;
  std::optional<std::string> fine_tuned_model;
};

class FinetuneService {
 public:
  virtual ~FinetuneService() = default;
  virtual std::string submit_finetune(const FinetuneJobSpec& spec) = 0;
  virtual JobStatus poll_job(const std::string& job_id) = 0;
};

// ---------------------------------------------------------------------------
// Transport, retries, rate limiting

struct HttpRequest {
  std::string method = "POST";
  std::string path;
  std::map<std::string, std::string> headers;
  std::string body;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Network-level failures (connect, timeout) throw Error(transport_error).
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout);

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
  std::chrono::milliseconds max_delay{60000};
};

bool is_transient_status(int status);

// Full jitter: uniform in [0, min(max_delay, base * factor^retry)].
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry, std::mt19937_64& rng);

struct RetryOutcome {
  HttpResponse response;
  int attempts = 0;
};

// Sends with retries on timeouts/transport errors, 429 and 5xx. Other
// statuses are returned after the first attempt. Throws Error(rate_limited)
// or Error(transport_error) when attempts run out.
RetryOutcome send_with_retry(HttpTransport& transport, const HttpRequest& request,
                             const RetryPolicy& policy, const Sleeper& sleep,
                             std::mt19937_64& rng);

// Token bucket shared by every caller of one provider.
class RateLimiter {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  explicit RateLimiter(double requests_per_minute, Sleeper sleep = real_sleeper(),
                       Clock clock = [] { return std::chrono::steady_clock::now(); });

  void acquire();
  double requests_per_minute() const { return rpm_; }

 private:
  double rpm_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  Sleeper sleep_;
  Clock clock_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible client

struct OpenAIConfig {
  std::string base_url = "https://api.openai.com";
  std::string chat_model = "gpt-4o";
  std::string embedding_model = "text-embedding-3-small";
  std::string api_key;  // resolved from the configured environment variable
  std::string api_key_env = "OPENAI_API_KEY";
  RetryPolicy retry;
  std::uint64_t jitter_seed = 0;
};

// Wire helpers, exposed for tests.
std::string build_chat_body(const ChatRequest& request);
ChatResult parse_chat_response(std::string_view body);
std::string build_embeddings_body(const std::string& model, const std::vector<std::string>& texts);
std::vector<retrieval::EmbeddingVector> parse_embeddings_response(std::string_view body,
                                                                  std::size_t expected);

class OpenAIClient final : public ChatProvider, public EmbeddingProvider {
 public:
  OpenAIClient(OpenAIConfig config, std::shared_ptr<HttpTransport> transport,
               std::shared_ptr<RateLimiter> limiter, Sleeper sleep = real_sleeper());

  ChatResult chat_complete(const ChatRequest& request) override;
  std::vector<retrieval::EmbeddingVector> embed_texts(const std::vector<std::string>& texts) override;
  std::string default_model() const override { return config_.chat_model; }

  int last_attempts() const { return last_attempts_.load(); }

 private:
  HttpResponse post_json(const std::string& path, std::string body);

  OpenAIConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  std::shared_ptr<RateLimiter> limiter_;
  Sleeper sleep_;
  std::mt19937_64 rng_;
  std::mutex rng_mu_;
  std::atomic<int> last_attempts_{0};
};

// Minimal job API: POST /v1/fine_tuning/jobs, GET /v1/fine_tuning/jobs/{id}.
std::string build_finetune_body(const FinetuneJobSpec& spec);

class OpenAIFinetuneClient final : public FinetuneService {
 public:
  OpenAIFinetuneClient(OpenAIConfig config, std::shared_ptr<HttpTransport> transport,
                       std::shared_ptr<RateLimiter> limiter, Sleeper sleep = real_sleeper());

  std::string submit_finetune(const FinetuneJobSpec& spec) override;
  JobStatus poll_job(const std::string& job_id) override;

 private:
  HttpResponse call(HttpRequest request);

  OpenAIConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  std::shared_ptr<RateLimiter> limiter_;
  Sleeper sleep_;
  std::mt19937_64 rng_;
  std::mutex mu_;
  std::map<std::string, double> last_elapsed_;
};

// ---------------------------------------------------------------------------
// Offline providers. Every output is a pure function of (seed, request).

enum class MockRule {
  generator,        // question/answer synthesis and subject answering
  first_slot,       // judge that always prefers the response shown as A
  content_overlap,  // judge preferring more overlap with context terms
};
std::optional<MockRule> parse_mock_rule(std::string_view s);

class MockChatProvider final : public ChatProvider {
 public:
  MockChatProvider(std::int64_t seed, MockRule rule, std::string model = "mock-chat");

  ChatResult chat_complete(const ChatRequest& request) override;
  std::string default_model() const override { return model_; }

 private:
  std::int64_t seed_;
  MockRule rule_;
  std::string model_;
};

class MockEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit MockEmbeddingProvider(std::size_t dims = retrieval::kHashEmbeddingDims) : dims_(dims) {}
  std::vector<retrieval::EmbeddingVector> embed_texts(const std::vector<std::string>& texts) override;

 private:
  std::size_t dims_;
};

struct MockFinetuneSchedule {
  int polls_to_complete = 3;
  double tokens_per_second = 78.0;  // simulated training throughput
  double cost_per_second = 0.0022;  // USD
};

class MockFinetuneService final : public FinetuneService {
 public:
  explicit MockFinetuneService(MockFinetuneSchedule schedule = {}) : schedule_(schedule) {}

  // Job id "mock-<first 12 hex of sha256(canonical spec)>".
  std::string submit_finetune(const FinetuneJobSpec& spec) override;
  JobStatus poll_job(const std::string& job_id) override;

 private:
  struct Job {
    std::string base_model;
    double total_seconds = 0.0;
    int polls = 0;
  };
  MockFinetuneSchedule schedule_;
  std::mutex mu_;
  std::map<std::string, Job> jobs_;
};

}  // namespace knowslm::provider
