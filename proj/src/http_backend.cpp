#include "ctxcal/http_backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace ctxcal {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

class LiveTransport final : public HttpTransport {
 public:
  LiveTransport(const std::string& base_url, int timeout_ms) : client_(base_url) {
    if (!client_.is_valid()) throw ConfigError("unsupported backend base_url '" + base_url + "'");
    const auto sec = timeout_ms / 1000;
    const auto usec = (timeout_ms % 1000) * 1000;
    client_.set_connection_timeout(sec, usec);
    client_.set_read_timeout(sec, usec);
    client_.set_write_timeout(sec, usec);
  }

  HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders& headers) override {
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client_.Post(path, h, body, "application/json");
    if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

 private:
  httplib::Client client_;
};

bool retryable(int status) { return status == 429 || status >= 500; }

std::string excerpt(const std::string& s) { return s.size() <= 200 ? s : s.substr(0, 200) + "..."; }

const json& first_choice(const json& j) {
  const auto& choices = j.at("choices");
  if (!choices.is_array() || choices.empty()) throw BackendUnavailable("response has no choices");
  return choices.front();
}

}  // namespace

std::unique_ptr<HttpTransport> make_live_transport(const std::string& base_url, int timeout_ms) {
  return std::make_unique<LiveTransport>(base_url, timeout_ms);
}

RecordingTransport::RecordingTransport(std::unique_ptr<HttpTransport> inner, std::filesystem::path fixture)
    : inner_(std::move(inner)), fixture_(std::move(fixture)) {}

HttpResponse RecordingTransport::post(const std::string& path, const std::string& body,
                                      const HttpHeaders& headers) {
  auto res = inner_->post(path, body, headers);
  ordered_json rec;
  rec["request"] = body;
  rec["status"] = res.status;
  rec["response"] = res.body;
  std::lock_guard lock(mu_);
  std::ofstream out(fixture_, std::ios::app | std::ios::binary);
  if (!out) throw ConfigError("cannot append to fixture " + fixture_.string());
  out << rec.dump() << '\n';
  return res;
}

ReplayTransport::ReplayTransport(const std::filesystem::path& fixture) {
  std::ifstream in(fixture, std::ios::binary);
  if (!in) throw ConfigError("cannot open fixture " + fixture.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    // First recording of a request wins.
    exchanges_.try_emplace(j.at("request").get<std::string>(),
                           HttpResponse{j.at("status").get<int>(), j.at("response").get<std::string>()});
  }
}

HttpResponse ReplayTransport::post(const std::string&, const std::string& body, const HttpHeaders&) {
  auto it = exchanges_.find(body);
  if (it == exchanges_.end()) throw BackendUnavailable("no recorded exchange for request " + excerpt(body));
  return it->second;
}

std::string completion_request_body(const std::string& prompt, int max_tokens, int logprobs,
                                    const std::string& model) {
  ordered_json body;
  if (!model.empty()) body["model"] = model;
  body["prompt"] = prompt;
  body["max_tokens"] = max_tokens;
  body["logprobs"] = logprobs;
  body["echo"] = false;
  body["temperature"] = 0;
  return body.dump();
}

NextTokenDistribution parse_first_token_distribution(const std::string& response_body) {
  NextTokenDistribution dist;
  try {
    const auto j = json::parse(response_body);
    const auto& top = first_choice(j).at("logprobs").at("top_logprobs");
    if (!top.is_array() || top.empty()) throw BackendUnavailable("response has no top_logprobs");
    for (const auto& [token, logprob] : top.front().items()) {
      dist.top.push_back({token, std::exp(logprob.get<double>())});
    }
  } catch (const json::exception& e) {
    throw BackendUnavailable(std::string("malformed completions response: ") + e.what());
  }
  std::stable_sort(dist.top.begin(), dist.top.end(), [](const TokenProb& a, const TokenProb& b) {
    return a.prob != b.prob ? a.prob > b.prob : a.token < b.token;
  });
  double listed = 0.0;
  for (const auto& t : dist.top) listed += t.prob;
  if (listed > 1.0) {
    // Rounded logprobs can overshoot slightly.
    for (auto& t : dist.top) t.prob /= listed;
    listed = 1.0;
  }
  dist.remainder_mass = std::max(0.0, 1.0 - listed);
  return dist;
}

HttpBackend::HttpBackend(HttpBackendConfig config, std::unique_ptr<HttpTransport> transport, Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(config_.max_parallel, 1, 1024))) {
  if (!transport_) throw ConfigError("HttpBackend needs a transport");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  config_.max_parallel = std::clamp<std::size_t>(config_.max_parallel, 1, 1024);
}

std::string HttpBackend::id() const {
  return config_.base_url + config_.path + (config_.model.empty() ? "" : "#" + config_.model);
}

std::size_t HttpBackend::requests_sent() const {
  std::lock_guard lock(mu_);
  return sent_;
}

void HttpBackend::wait_for_rate_slot() {
  if (config_.max_requests_per_second <= 0.0) return;
  const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / config_.max_requests_per_second));
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_slot_);
    next_slot_ = slot + interval;
  }
  std::this_thread::sleep_until(slot);
}

std::string HttpBackend::post(const std::string& body) {
  HttpHeaders headers;
  if (!config_.api_key.empty()) headers.emplace_back(config_.auth_header, config_.auth_scheme + config_.api_key);

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto shift = std::min(attempt - 1, 20);
      const auto delay = std::min<long long>(static_cast<long long>(config_.backoff_initial_ms) << shift,
                                             config_.backoff_max_ms);
      sleeper_(std::chrono::milliseconds(delay));
    }
    wait_for_rate_slot();
    {
      std::lock_guard lock(mu_);
      ++sent_;
    }
    try {
      auto res = transport_->post(config_.path, body, headers);
      if (res.status >= 200 && res.status < 300) return res.body;
      last_error = "HTTP " + std::to_string(res.status) + ": " + excerpt(res.body);
      if (!retryable(res.status)) throw BackendUnavailable(last_error);
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw BackendUnavailable("giving up after " + std::to_string(config_.max_retries + 1) +
                           " attempts: " + last_error);
}

NextTokenDistribution HttpBackend::next_token(const Request& request, int top_k) {
  const int k = top_k > 0 ? top_k : config_.top_k;
  return parse_first_token_distribution(post(completion_request_body(request.prompt, 1, k, config_.model)));
}

Completion HttpBackend::complete(const Request& request, const GenerationOptions& options) {
  const auto body = post(completion_request_body(request.prompt, options.max_tokens, 1, config_.model));
  Completion out;
  try {
    const auto j = json::parse(body);
    const auto& choice = first_choice(j);
    out.text = choice.at("text").get<std::string>();
    if (cut_at_stop(out.text, options.stop)) return out;
    if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("tokens")) {
      out.hit_max_tokens = choice["logprobs"]["tokens"].size() >= static_cast<std::size_t>(options.max_tokens);
    } else if (auto it = choice.find("finish_reason"); it != choice.end() && it->is_string()) {
      out.hit_max_tokens = *it == "length";
    }
  } catch (const json::exception& e) {
    throw BackendUnavailable(std::string("malformed completions response: ") + e.what());
  }
  return out;
}

}  // namespace ctxcal
