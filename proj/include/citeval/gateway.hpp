#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "citeval/error.hpp"
#include "citeval/parallel.hpp"
#include "citeval/prompting.hpp"
#include "citeval/text.hpp"

namespace citeval {

// -- HTTP transport ------------------------------------------------------------

struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
};

enum class TransportFailure { kNone, kTimeout, kConnection };

struct HttpReply {
  int status = 0;
  std::string body;
  TransportFailure failure = TransportFailure::kNone;
  std::string failure_message;
};

/// Minimal blocking HTTP client surface. Implementations must be callable
/// from several threads at once.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpReply post(const HttpRequest& request) = 0;
  virtual HttpReply get(const HttpRequest& request) = 0;
};

/// cpp-httplib backed transport; supports http:// and https:// URLs.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(60))
      : timeout_(timeout) {}
  HttpReply post(const HttpRequest& request) override;
  HttpReply get(const HttpRequest& request) override;

 private:
  std::chrono::seconds timeout_;
};

/// Adapts a callable; used for in-process stubs.
class FunctionTransport final : public Transport {
 public:
  using Handler = std::function<HttpReply(const HttpRequest&)>;
  explicit FunctionTransport(Handler post, Handler get = nullptr)
      : post_(std::move(post)), get_(std::move(get)) {}
  HttpReply post(const HttpRequest& r) override { return post_(r); }
  HttpReply get(const HttpRequest& r) override {
    if (!get_) return {404, "", TransportFailure::kNone, ""};
    return get_(r);
  }

 private:
  Handler post_;
  Handler get_;
};

/// Splits "scheme://host[:port]/path" into origin and path.
std::pair<std::string, std::string> split_url(const std::string& url);

/// Resolves an API key from the environment; an empty variable name means
/// "no authentication". A named but unset variable is an auth failure.
std::optional<std::string> resolve_api_key(const std::string& env_name);

/// Copy of `headers` safe to log.
std::string redact_headers(const std::vector<std::pair<std::string, std::string>>& headers);

// -- Chat completion gateway ---------------------------------------------------

struct GenerationConfig {
  double temperature = 1.0;
  int max_tokens = 256;
  double top_p = 0.95;
  std::string model_name;
  std::string endpoint_url;
  std::string api_key_env;

  void validate() const;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
  // Multiplicative jitter: delay *= 1 + jitter * U[0,1).
  double jitter = 0.25;
  std::uint64_t seed = 0;
  // Replaceable so tests do not sleep.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayResult {
  std::string completion_text;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
  bool usage_estimated = false;
  int attempts = 0;
  double latency_ms = 0.0;
};

/// One slot of a batch: either a result or the error that ended that item.
struct BatchOutcome {
  std::optional<GatewayResult> result;
  std::optional<ErrorCode> error;
  std::string error_message;

  bool ok() const { return result.has_value(); }
};

class Gateway {
 public:
  Gateway(std::shared_ptr<Transport> transport, RetryPolicy policy = {});

  GatewayResult complete(const std::string& prompt, const GenerationConfig& config) const;

  /// Results are in task order; at most max_in_flight requests are
  /// outstanding at any instant. Item failures are reported in place.
  std::vector<BatchOutcome> complete_batch(std::span<const AttributionTask> tasks,
                                           const GenerationConfig& config,
                                           std::size_t max_in_flight) const;

  /// Request body sent for a prompt (exposed for wire-format tests).
  static std::string request_body(const std::string& prompt, const GenerationConfig& config);

  const RetryPolicy& policy() const { return policy_; }

 private:
  std::chrono::milliseconds backoff_delay(int attempt) const;

  std::shared_ptr<Transport> transport_;
  RetryPolicy policy_;
  mutable std::mutex rng_mutex_;
  mutable text::Rng rng_;
};

}  // namespace citeval
