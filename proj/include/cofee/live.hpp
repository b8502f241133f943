#pragma once

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <random>
#include <string>
#include <thread>

#include "cofee/backend.hpp"
#include "cofee/errors.hpp"
#include "cofee/util.hpp"

namespace cofee::backend {

inline constexpr const char* kApiKeyEnvVar = "COFEE_API_KEY";

struct LiveConfig {
  std::string base_url;  // e.g. https://api.openai.com
  std::string completion_path = "/v1/chat/completions";
  std::string model;
  PriceTable prices;
  int max_attempts = 3;
  int backoff_base_ms = 500;
  int timeout_seconds = 120;
};

/// HTTPS chat-completion client. Transient transport failures and retryable
/// statuses are retried with exponential backoff plus jitter; other non-2xx
/// responses are rejected immediately.
class LiveProvider : public Provider {
 public:
  explicit LiveProvider(LiveConfig config) : config_(std::move(config)) {
    const char* key = std::getenv(kApiKeyEnvVar);
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorCode::ConfigError,
                  std::string("environment variable ") + kApiKeyEnvVar + " is not set");
    }
    api_key_ = key;
    if (config_.base_url.empty()) {
      throw Error(ErrorCode::ConfigError, "live provider requires a base_url");
    }
  }

  AgentTranscript complete(const CompletionRequest& request) override {
    const std::string body = build_body(request);
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      if (attempt > 1) sleep_before_retry(attempt);
      httplib::Client client(config_.base_url);
      client.set_connection_timeout(config_.timeout_seconds);
      client.set_read_timeout(config_.timeout_seconds);
      httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
      auto res = client.Post(config_.completion_path, headers, body, "application/json");
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 200 && res->status < 300) {
        return parse_response(request, res->body);
      }
      if (is_retryable_status(res->status)) {
        last_error = "retryable status " + std::to_string(res->status);
        continue;
      }
      throw Error(ErrorCode::ProviderRejection,
                  "status " + std::to_string(res->status) + ": " + res->body);
    }
    throw Error(ErrorCode::TransportError,
                "gave up after " + std::to_string(config_.max_attempts) + " attempts; last: " +
                    last_error);
  }

  std::string kind() const override { return "live"; }

 private:
  static bool is_retryable_status(int status) {
    return status == 429 || status == 500 || status == 502 || status == 503 || status == 504;
  }

  void sleep_before_retry(int attempt) const {
    static thread_local std::mt19937 rng{std::random_device{}()};
    const int base = config_.backoff_base_ms * (1 << (attempt - 2));
    std::uniform_int_distribution<int> jitter(0, base / 2 + 1);
    std::this_thread::sleep_for(std::chrono::milliseconds(base + jitter(rng)));
  }

  std::string build_body(const CompletionRequest& request) const {
    Json body = Json{
        {"model", config_.model},
        {"temperature", request.determinism},
        {"messages", Json::array({Json{{"role", "system"}, {"content", request.system_prompt}},
                                  Json{{"role", "user"}, {"content", request.user_payload}}})},
    };
    return body.dump();
  }

  AgentTranscript parse_response(const CompletionRequest& request, const std::string& body) const {
    Json j = parse_json(body, "provider response");
    AgentTranscript t;
    t.request = request;
    t.provider = "live";
    try {
      t.raw_response = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ProviderRejection,
                  std::string("malformed completion payload: ") + e.what());
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      t.input_tokens = j["usage"].value("prompt_tokens", std::size_t{0});
      t.output_tokens = j["usage"].value("completion_tokens", std::size_t{0});
    }
    if (t.input_tokens == 0 && t.output_tokens == 0) {
      t.input_tokens = approx_token_count(request.system_prompt) +
                       approx_token_count(request.user_payload);
      t.output_tokens = approx_token_count(t.raw_response);
    }
    t.cost = config_.prices.cost(t.input_tokens, t.output_tokens);
    return t;
  }

  LiveConfig config_;
  std::string api_key_;
};

}  // namespace cofee::backend
