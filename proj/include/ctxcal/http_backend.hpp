#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include "ctxcal/backend.hpp"
#include "ctxcal/error.hpp"

namespace ctxcal {

/// Connection-level failure (refused, timed out, reset). Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// Throws TransportError when no HTTP response was obtained.
  virtual HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders& headers) = 0;
};

/// Plain cpp-httplib client against `base_url` ("http://host:port").
std::unique_ptr<HttpTransport> make_live_transport(const std::string& base_url, int timeout_ms);

/// Forwards to `inner` and appends every exchange to a line-delimited
/// fixture file: {"request": <body>, "status": <int>, "response": <body>}.
/// Headers (and so the API key) are never written.
class RecordingTransport final : public HttpTransport {
 public:
  RecordingTransport(std::unique_ptr<HttpTransport> inner, std::filesystem::path fixture);
  HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders& headers) override;

 private:
  std::unique_ptr<HttpTransport> inner_;
  std::filesystem::path fixture_;
  std::mutex mu_;
};

/// Serves recorded exchanges keyed by the exact request body. An unknown
/// request throws BackendUnavailable.
class ReplayTransport final : public HttpTransport {
 public:
  explicit ReplayTransport(const std::filesystem::path& fixture);
  HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders& headers) override;
  std::size_t size() const { return exchanges_.size(); }

 private:
  std::map<std::string, HttpResponse> exchanges_;
};

struct HttpBackendConfig {
  std::string base_url;
  std::string path = "/v1/completions";
  /// Sent as "model" when non-empty.
  std::string model;
  std::string auth_header = "Authorization";
  std::string auth_scheme = "Bearer ";
  std::string api_key;
  int timeout_ms = 30000;
  std::size_t max_parallel = 4;
  int top_k = 5;
  int max_retries = 4;
  int backoff_initial_ms = 500;
  int backoff_max_ms = 16000;
  /// Global cap on request starts per second; 0 disables it.
  double max_requests_per_second = 0.0;
};

/// Request body for the completions endpoint. Key order is fixed so that
/// identical requests serialize to identical bytes.
std::string completion_request_body(const std::string& prompt, int max_tokens, int logprobs,
                                    const std::string& model = {});

/// First-position top_logprobs of a completions response, exponentiated.
NextTokenDistribution parse_first_token_distribution(const std::string& response_body);

/// Next-token probabilities from a completions-style HTTP endpoint.
///
/// Each call issues one POST {prompt, max_tokens, logprobs, echo: false,
/// temperature: 0}. Transport failures, 429 and 5xx are retried with
/// exponential backoff; other statuses fail immediately.
class HttpBackend final : public LanguageModel {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  HttpBackend(HttpBackendConfig config, std::unique_ptr<HttpTransport> transport, Sleeper sleeper = {});

  NextTokenDistribution next_token(const Request& request, int top_k) override;
  Completion complete(const Request& request, const GenerationOptions& options) override;
  std::string id() const override;
  std::size_t max_parallel() const override { return config_.max_parallel; }

  std::size_t requests_sent() const;

 private:
  std::string post(const std::string& body);
  void wait_for_rate_slot();

  HttpBackendConfig config_;
  std::unique_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
  std::counting_semaphore<1024> in_flight_;
  mutable std::mutex mu_;
  std::chrono::steady_clock::time_point next_slot_{};
  std::size_t sent_ = 0;
};

}  // namespace ctxcal
