#include "divprobe/http.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "divprobe/error.hpp"
#include "httplib.h"

namespace divprobe {

namespace {

constexpr std::size_t kBodyExcerpt = 300;

std::string excerpt(std::string_view body) {
  if (body.size() <= kBodyExcerpt) return std::string(body);
  return std::string(body.substr(0, kBodyExcerpt)) + "...";
}

}  // namespace

bool is_retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt, std::mt19937_64& rng) {
  const double base = static_cast<double>(policy.base_delay.count());
  const double cap = static_cast<double>(policy.max_delay.count());
  const double raw = std::min(cap, base * std::ldexp(1.0, std::max(0, attempt - 1)));
  const double jitter = 0.5 + 0.5 * std::generate_canonical<double, 53>(rng);
  return std::chrono::milliseconds(static_cast<long long>(raw * jitter));
}

HttpClient::HttpClient(Endpoint endpoint) : endpoint_(std::move(endpoint)), jitter_rng_(std::random_device{}()) {
  const auto& url = endpoint_.base_url;
  if (url.empty()) throw ConfigError("endpoint URL is empty");
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint URL '" + url + "' has no scheme (http:// or https://)");
  auto path_start = url.find('/', scheme + 3);
  host_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

HttpClient::~HttpClient() = default;

HttpClient::HttpClient(HttpClient&& other) noexcept
    : endpoint_(std::move(other.endpoint_)),
      host_(std::move(other.host_)),
      path_prefix_(std::move(other.path_prefix_)),
      jitter_rng_(other.jitter_rng_) {}

HttpClient& HttpClient::operator=(HttpClient&& other) noexcept {
  endpoint_ = std::move(other.endpoint_);
  host_ = std::move(other.host_);
  path_prefix_ = std::move(other.path_prefix_);
  jitter_rng_ = other.jitter_rng_;
  return *this;
}

HttpResponse HttpClient::post_json(std::string_view path, const nlohmann::json& body) const {
  // httplib::Client is not thread-safe; one per request keeps callers free to
  // share this object across workers.
  httplib::Client client(host_);
  const auto timeout = std::chrono::duration<double>(endpoint_.timeout_seconds);
  const auto sec = static_cast<time_t>(timeout.count());
  const auto usec = static_cast<time_t>((timeout.count() - static_cast<double>(sec)) * 1e6);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);

  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

  const std::string full_path = path_prefix_ + std::string(path);
  auto result = client.Post(full_path, headers, body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                            "application/json");
  if (!result)
    throw TransportError("POST " + host_ + full_path + " failed: " + httplib::to_string(result.error()));
  return HttpResponse{result->status, std::move(result->body)};
}

nlohmann::json HttpClient::post_json_with_retry(std::string_view path, const nlohmann::json& body,
                                                const RetryPolicy& policy, Telemetry& telemetry) const {
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0) {
      ++telemetry.retries;
      std::chrono::milliseconds delay;
      {
        std::lock_guard lock(rng_mutex_);
        delay = backoff_delay(policy, attempt, jitter_rng_);
      }
      std::this_thread::sleep_for(delay);
    }
    ++telemetry.requests;
    const bool last = attempt >= policy.budget;
    HttpResponse response;
    try {
      response = post_json(path, body);
    } catch (const TransportError&) {
      if (last) {
        ++telemetry.failures;
        throw;
      }
      continue;
    }
    if (response.status >= 200 && response.status < 300) {
      try {
        return nlohmann::json::parse(response.body);
      } catch (const nlohmann::json::parse_error& e) {
        ++telemetry.failures;
        throw SchemaError("<body>", std::string("response is not JSON: ") + e.what());
      }
    }
    if (!is_retryable_status(response.status) || last) {
      ++telemetry.failures;
      throw HttpStatusError(response.status, excerpt(response.body));
    }
  }
}

}  // namespace divprobe
