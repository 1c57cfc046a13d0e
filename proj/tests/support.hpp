#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "knowslm/error.hpp"
#include "knowslm/provider.hpp"

namespace testing {

inline std::filesystem::path source_dir() { return KNOWSLM_SOURCE_DIR; }
inline std::filesystem::path toy_dir() { return source_dir() / "data" / "toy"; }
inline std::filesystem::path golden_dir() { return source_dir() / "tests" / "golden"; }

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("knowslm-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Replays a fixed script of responses; a string entry is thrown as a
// transport error instead.
class ScriptedTransport final : public knowslm::provider::HttpTransport {
 public:
  using Step = std::variant<knowslm::provider::HttpResponse, std::string>;

  explicit ScriptedTransport(std::vector<Step> script) : script_(script.begin(), script.end()) {}

  knowslm::provider::HttpResponse send(const knowslm::provider::HttpRequest& request) override {
    std::lock_guard lock(mu_);
    requests.push_back(request);
    if (script_.empty()) return {500, R"({"error":"script exhausted"})"};
    auto step = script_.front();
    script_.pop_front();
    if (auto* msg = std::get_if<std::string>(&step)) {
      throw knowslm::Error(knowslm::ErrorCode::transport_error, *msg);
    }
    return std::get<knowslm::provider::HttpResponse>(step);
  }

  std::size_t calls() const { return requests.size(); }

  std::vector<knowslm::provider::HttpRequest> requests;

 private:
  std::deque<Step> script_;
  std::mutex mu_;
};

struct RecordingSleeper {
  std::vector<std::chrono::milliseconds> waits;
  knowslm::provider::Sleeper fn() {
    return [this](std::chrono::milliseconds d) { waits.push_back(d); };
  }
};

inline std::string chat_ok(const std::string& content) {
  return R"({"id":"c1","object":"chat.completion","choices":[{"index":0,"message":{"role":"assistant","content":)" +
         std::string("\"") + content + R"("},"finish_reason":"stop"}],"usage":{"prompt_tokens":11,"completion_tokens":5,"total_tokens":16}})";
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t dims, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(dims);
  for (auto& x : v) x = d(rng);
  return v;
}

inline std::string random_word(std::mt19937_64& rng, std::size_t min_len = 1, std::size_t max_len = 8) {
  static constexpr std::string_view letters = "abcdefghijklmnopqrstuvwxyz";
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, letters.size() - 1);
  std::string w;
  const auto n = len(rng);
  for (std::size_t i = 0; i < n; ++i) w += letters[pick(rng)];
  return w;
}

}  // namespace testing
