#pragma once

// Minimal JSON-over-HTTP client shared by the generation, embedding and
// labeling clients.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <string_view>

#include "json.hpp"

namespace divprobe {

struct Endpoint {
  /// Scheme, host, optional port and optional path prefix, e.g.
  /// "http://127.0.0.1:8000" or "https://api.example.com/proxy".
  std::string base_url;
  std::string api_key;
  double timeout_seconds = 120.0;
};

struct RetryPolicy {
  /// Retries after the first attempt; 3 means up to 4 attempts.
  int budget = 3;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{8000};
};

/// True for statuses worth retrying: 429 and 5xx.
bool is_retryable_status(int status);

/// Delay before retry number `attempt` (1-based): base * 2^(attempt-1),
/// capped at max_delay, scaled by a jitter factor drawn from [0.5, 1.0].
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt, std::mt19937_64& rng);

struct Telemetry {
  std::atomic<std::size_t> requests{0};
  std::atomic<std::size_t> retries{0};
  std::atomic<std::size_t> failures{0};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

class HttpClient {
 public:
  explicit HttpClient(Endpoint endpoint);
  ~HttpClient();
  HttpClient(HttpClient&&) noexcept;
  HttpClient& operator=(HttpClient&&) noexcept;

  /// One POST of `body` to `path` (appended to the base URL's path prefix).
  /// Throws TransportError when no response arrives.
  HttpResponse post_json(std::string_view path, const nlohmann::json& body) const;

  /// POST with the retry policy applied. Non-retryable non-2xx responses
  /// throw HttpStatusError immediately; retryable ones and transport errors
  /// are retried until the budget is spent, then rethrown. A 2xx body that is
  /// not valid JSON throws SchemaError.
  nlohmann::json post_json_with_retry(std::string_view path, const nlohmann::json& body, const RetryPolicy& policy,
                                      Telemetry& telemetry) const;

  const Endpoint& endpoint() const noexcept { return endpoint_; }

 private:
  Endpoint endpoint_;
  std::string host_;        // scheme://host[:port]
  std::string path_prefix_;  // no trailing slash
  mutable std::mutex rng_mutex_;
  mutable std::mt19937_64 jitter_rng_;
};

}  // namespace divprobe
