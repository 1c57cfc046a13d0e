#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <nlohmann/json.hpp>

#include "knowslm/error.hpp"
#include "knowslm/io.hpp"
#include "knowslm/provider.hpp"
#include "knowslm/text.hpp"

namespace knowslm::provider {
namespace {

using nlohmann::json;

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(const std::string& base_url, std::chrono::seconds timeout)
      : client_(base_url) {
    client_.set_connection_timeout(timeout);
    client_.set_read_timeout(timeout);
    client_.set_write_timeout(timeout);
  }

  HttpResponse send(const HttpRequest& request) override {
    httplib::Headers headers(request.headers.begin(), request.headers.end());
    httplib::Result res = request.method == "GET"
                              ? client_.Get(request.path, headers)
                              : client_.Post(request.path, headers, request.body,
                                             "application/json");
    if (!res) {
      throw Error(ErrorCode::transport_error,
                  request.method + " " + request.path + ": " + httplib::to_string(res.error()));
    }
    return HttpResponse{res->status, res->body};
  }

 private:
  httplib::Client client_;
};

std::map<std::string, std::string> auth_headers(const OpenAIConfig& config) {
  return {{"Authorization", "Bearer " + config.api_key}, {"Content-Type", "application/json"}};
}

void require_credentials(const OpenAIConfig& config) {
  if (config.api_key.empty()) {
    throw Error(ErrorCode::auth_error, "no API key; set " + config.api_key_env);
  }
}

// Maps a final (non-retried) HTTP status to the gateway's error codes.
void check_status(const HttpResponse& resp, const std::string& what) {
  if (resp.status >= 200 && resp.status < 300) return;
  std::string detail = what + " returned HTTP " + std::to_string(resp.status);
  if (resp.status == 401 || resp.status == 403) throw Error(ErrorCode::auth_error, detail);
  if (resp.status == 404) throw Error(ErrorCode::unknown_job, detail);
  throw Error(ErrorCode::provider_validation, detail + ": " + resp.body.substr(0, 200));
}

json parse_json(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, e.what());
  }
}

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout) {
  return std::make_shared<HttplibTransport>(base_url, timeout);
}

std::string build_chat_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json body = {{"model", request.model_id},
               {"messages", std::move(messages)},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens}};
  if (request.seed) body["seed"] = *request.seed;
  return body.dump();
}

ChatResult parse_chat_response(std::string_view body) {
  const json doc = parse_json(body);
  try {
    ChatResult out;
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    out.text = content.is_null() ? "" : content.get<std::string>();
    if (doc.contains("usage")) {
      const auto& u = doc.at("usage");
      out.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
      out.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("chat completion: ") + e.what());
  }
}

std::string build_embeddings_body(const std::string& model, const std::vector<std::string>& texts) {
  return json{{"model", model}, {"input", texts}}.dump();
}

std::vector<retrieval::EmbeddingVector> parse_embeddings_response(std::string_view body,
                                                                  std::size_t expected) {
  const json doc = parse_json(body);
  try {
    const auto& data = doc.at("data");
    if (data.size() != expected) {
      throw Error(ErrorCode::malformed_response, "expected " + std::to_string(expected) +
                                                     " embeddings, got " +
                                                     std::to_string(data.size()));
    }
    std::vector<retrieval::EmbeddingVector> out(expected);
    std::vector<bool> seen(expected, false);
    for (const auto& item : data) {
      const auto idx = item.at("index").get<std::size_t>();
      if (idx >= expected || seen[idx]) {
        throw Error(ErrorCode::malformed_response, "bad embedding index");
      }
      seen[idx] = true;
      out[idx] = retrieval::EmbeddingVector(item.at("embedding").get<std::vector<double>>());
    }
    for (std::size_t i = 1; i < out.size(); ++i) {
      if (out[i].dims() != out[0].dims()) {
        throw Error(ErrorCode::malformed_response, "embeddings differ in dimension");
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("embeddings: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::precondition) {
      throw Error(ErrorCode::malformed_response, e.what());
    }
    throw;
  }
}

OpenAIClient::OpenAIClient(OpenAIConfig config, std::shared_ptr<HttpTransport> transport,
                           std::shared_ptr<RateLimiter> limiter, Sleeper sleep)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      limiter_(std::move(limiter)),
      sleep_(std::move(sleep)),
      rng_(config_.jitter_seed) {}

HttpResponse OpenAIClient::post_json(const std::string& path, std::string body) {
  require_credentials(config_);
  if (limiter_) limiter_->acquire();
  HttpRequest req{.method = "POST", .path = path, .headers = auth_headers(config_),
                  .body = std::move(body)};
  std::mt19937_64 rng;
  {
    std::lock_guard lock(rng_mu_);
    rng.seed(rng_());
  }
  auto outcome = send_with_retry(*transport_, req, config_.retry, sleep_, rng);
  last_attempts_ = outcome.attempts;
  return std::move(outcome.response);
}

ChatResult OpenAIClient::chat_complete(const ChatRequest& request) {
  validate(request);
  ChatRequest req = request;
  if (req.model_id.empty()) req.model_id = config_.chat_model;
  auto resp = post_json("/v1/chat/completions", build_chat_body(req));
  check_status(resp, "chat completion");
  return parse_chat_response(resp.body);
}

std::vector<retrieval::EmbeddingVector> OpenAIClient::embed_texts(
    const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  for (const auto& t : texts) {
    if (text::is_blank(t)) throw Error(ErrorCode::precondition, "cannot embed an empty text");
  }
  auto resp = post_json("/v1/embeddings", build_embeddings_body(config_.embedding_model, texts));
  check_status(resp, "embeddings");
  return parse_embeddings_response(resp.body, texts.size());
}

std::string build_finetune_body(const FinetuneJobSpec& spec) {
  return json{{"model", spec.base_model_id},
              {"training_file", spec.dataset_file.string()},
              {"hyperparameters",
               {{"n_epochs", spec.epochs},
                {"lora_r", spec.lora.rank_r},
                {"lora_alpha", spec.lora.alpha},
                {"lora_dropout", spec.lora.dropout}}}}
      .dump();
}

OpenAIFinetuneClient::OpenAIFinetuneClient(OpenAIConfig config,
                                           std::shared_ptr<HttpTransport> transport,
                                           std::shared_ptr<RateLimiter> limiter, Sleeper sleep)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      limiter_(std::move(limiter)),
      sleep_(std::move(sleep)),
      rng_(config_.jitter_seed) {}

HttpResponse OpenAIFinetuneClient::call(HttpRequest request) {
  require_credentials(config_);
  if (limiter_) limiter_->acquire();
  request.headers = auth_headers(config_);
  std::mt19937_64 rng;
  {
    std::lock_guard lock(mu_);
    rng.seed(rng_());
  }
  return send_with_retry(*transport_, request, config_.retry, sleep_, rng).response;
}

std::string OpenAIFinetuneClient::submit_finetune(const FinetuneJobSpec& spec) {
  validate(spec);
  auto resp = call({.method = "POST", .path = "/v1/fine_tuning/jobs",
                    .body = build_finetune_body(spec)});
  check_status(resp, "fine-tune submit");
  const json doc = parse_json(resp.body);
  if (!doc.contains("id") || !doc["id"].is_string()) {
    throw Error(ErrorCode::malformed_response, "fine-tune submit response has no id");
  }
  return doc["id"].get<std::string>();
}

JobStatus OpenAIFinetuneClient::poll_job(const std::string& job_id) {
  auto resp = call({.method = "GET", .path = "/v1/fine_tuning/jobs/" + job_id});
  check_status(resp, "fine-tune poll");
  const json doc = parse_json(resp.body);
  try {
    JobStatus st;
    st.job_id = doc.at("id").get<std::string>();
    const auto state = doc.at("status").get<std::string>();
    if (state == "succeeded") {
      st.state = JobState::succeeded;
    } else if (state == "failed" || state == "cancelled") {
      st.state = JobState::failed;
    } else if (state == "running") {
      st.state = JobState::running;
    } else {
      st.state = JobState::queued;
    }
    if (doc.contains("created_at") && doc.contains("finished_at") && !doc["finished_at"].is_null()) {
      st.elapsed_seconds = doc["finished_at"].get<double>() - doc["created_at"].get<double>();
    } else if (doc.contains("elapsed_seconds")) {
      st.elapsed_seconds = doc["elapsed_seconds"].get<double>();
    }
    if (doc.contains("cost") && doc["cost"].is_number()) st.reported_cost = doc["cost"].get<double>();
    if (doc.contains("fine_tuned_model") && doc["fine_tuned_model"].is_string()) {
      st.fine_tuned_model = doc["fine_tuned_model"].get<std::string>();
    }
    std::lock_guard lock(mu_);
    auto& last = last_elapsed_[job_id];
    st.elapsed_seconds = std::max(st.elapsed_seconds, last);  // nondecreasing across polls
    last = st.elapsed_seconds;
    return st;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("fine-tune status: ") + e.what());
  }
}

}  // namespace knowslm::provider
