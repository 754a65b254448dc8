#include "citeval/gateway.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <thread>

#include "json.hpp"

namespace citeval {

using nlohmann::json;

namespace {

bool is_retryable(ErrorCode c) {
  return c == ErrorCode::kRateLimited || c == ErrorCode::kTimeout ||
         c == ErrorCode::kUnreachable;
}

// Classifies a reply; returns nullopt for a usable 2xx.
std::optional<std::pair<ErrorCode, std::string>> classify(const HttpReply& reply) {
  switch (reply.failure) {
    case TransportFailure::kTimeout:
      return std::pair{ErrorCode::kTimeout, "request timed out: " + reply.failure_message};
    case TransportFailure::kConnection:
      return std::pair{ErrorCode::kUnreachable, "connection failed: " + reply.failure_message};
    case TransportFailure::kNone: break;
  }
  const int s = reply.status;
  if (s >= 200 && s < 300) return std::nullopt;
  const std::string msg = "HTTP " + std::to_string(s);
  if (s == 401 || s == 403) return std::pair{ErrorCode::kAuthFailure, msg};
  if (s == 429) return std::pair{ErrorCode::kRateLimited, msg};
  if (s == 408 || s == 504) return std::pair{ErrorCode::kTimeout, msg};
  if (s >= 500) return std::pair{ErrorCode::kUnreachable, msg};
  return std::pair{ErrorCode::kMalformedResponse, msg + ": " + reply.body.substr(0, 200)};
}

}  // namespace

void GenerationConfig::validate() const {
  if (!(temperature >= 0.0)) throw Error(ErrorCode::kConfigInvalid, "temperature must be >= 0");
  if (max_tokens <= 0) throw Error(ErrorCode::kConfigInvalid, "max_tokens must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0))
    throw Error(ErrorCode::kConfigInvalid, "top_p must be in (0, 1]");
}

std::optional<std::string> resolve_api_key(const std::string& env_name) {
  if (env_name.empty()) return std::nullopt;
  const char* v = std::getenv(env_name.c_str());
  if (v == nullptr || *v == '\0')
    throw Error(ErrorCode::kAuthFailure, "environment variable " + env_name + " is not set");
  return std::string(v);
}

std::string redact_headers(const std::vector<std::pair<std::string, std::string>>& headers) {
  std::string out;
  for (const auto& [k, v] : headers) {
    auto lk = text::to_lower_ascii(k);
    bool secret = lk == "authorization" || lk == "x-api-key" || lk == "api-key";
    out += k + ": " + (secret ? std::string("<redacted>") : v) + "\n";
  }
  return out;
}

Gateway::Gateway(std::shared_ptr<Transport> transport, RetryPolicy policy)
    : transport_(std::move(transport)), policy_(std::move(policy)), rng_(policy_.seed) {
  if (!transport_) throw Error(ErrorCode::kInvalidArgument, "gateway needs a transport");
  if (policy_.max_attempts < 1)
    throw Error(ErrorCode::kInvalidArgument, "retry cap must be >= 1");
  if (!policy_.sleep)
    policy_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string Gateway::request_body(const std::string& prompt, const GenerationConfig& config) {
  json body = {
      {"model", config.model_name},
      {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", config.temperature},
      {"max_tokens", config.max_tokens},
      {"top_p", config.top_p},
  };
  return body.dump();
}

std::chrono::milliseconds Gateway::backoff_delay(int attempt) const {
  double u;
  {
    std::lock_guard lock(rng_mutex_);
    u = rng_.unit();
  }
  double ms = static_cast<double>(policy_.base_delay.count()) *
              std::pow(policy_.factor, attempt - 1) * (1.0 + policy_.jitter * u);
  return std::chrono::milliseconds(static_cast<long long>(ms));
}

GatewayResult Gateway::complete(const std::string& prompt, const GenerationConfig& config) const {
  if (text::is_blank(prompt)) throw Error(ErrorCode::kInvalidArgument, "empty prompt");
  config.validate();

  HttpRequest req;
  req.url = config.endpoint_url;
  req.headers.emplace_back("Content-Type", "application/json");
  if (auto key = resolve_api_key(config.api_key_env))
    req.headers.emplace_back("Authorization", "Bearer " + *key);
  req.body = request_body(prompt, config);

  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    spdlog::debug("POST {} attempt {}\n{}{}", req.url, attempt, redact_headers(req.headers),
                  req.body);
    HttpReply reply = transport_->post(req);
    spdlog::debug("reply status {} body {}", reply.status, reply.body);

    if (auto err = classify(reply)) {
      auto [code, msg] = *err;
      last_error = msg;
      if (!is_retryable(code)) throw Error(code, msg);
      if (attempt < policy_.max_attempts) policy_.sleep(backoff_delay(attempt));
      continue;
    }

    auto doc = json::parse(reply.body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("choices") ||
        !doc["choices"].is_array() || doc["choices"].empty())
      throw Error(ErrorCode::kMalformedResponse, "response has no choices");
    const auto& first = doc["choices"][0];
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string())
      throw Error(ErrorCode::kMalformedResponse, "first choice has no message content");

    GatewayResult result;
    result.completion_text = first["message"]["content"].get<std::string>();
    result.attempts = attempt;
    const auto usage = doc.value("usage", json::object());
    if (usage.is_object() && usage.contains("prompt_tokens") &&
        usage.contains("completion_tokens") && usage["prompt_tokens"].is_number_unsigned() &&
        usage["completion_tokens"].is_number_unsigned()) {
      result.prompt_tokens = usage["prompt_tokens"].get<std::uint64_t>();
      result.completion_tokens = usage["completion_tokens"].get<std::uint64_t>();
    } else {
      result.prompt_tokens = text::count_whitespace_tokens(prompt);
      result.completion_tokens = text::count_whitespace_tokens(result.completion_text);
      result.usage_estimated = true;
    }
    result.latency_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    return result;
  }
  throw Error(ErrorCode::kExhaustedRetries,
              "gave up after " + std::to_string(policy_.max_attempts) +
                  " attempts; last error: " + last_error);
}

std::vector<BatchOutcome> Gateway::complete_batch(std::span<const AttributionTask> tasks,
                                                  const GenerationConfig& config,
                                                  std::size_t max_in_flight) const {
  if (max_in_flight == 0) throw Error(ErrorCode::kInvalidArgument, "max_in_flight must be >= 1");
  std::vector<BatchOutcome> out(tasks.size());
  parallel_for_bounded(tasks.size(), max_in_flight, [&](std::size_t i) {
    try {
      out[i].result = complete(tasks[i].rendered_prompt, config);
    } catch (const Error& e) {
      out[i].error = e.code();
      out[i].error_message = e.what();
    }
  });
  return out;
}

}  // namespace citeval
