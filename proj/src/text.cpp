#include "citeval/text.hpp"

#include <openssl/evp.h>

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "citeval/error.hpp"

namespace citeval {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kFileMissing: return "file-missing";
    case ErrorCode::kMalformedDocument: return "malformed-document";
    case ErrorCode::kSchemaViolation: return "schema-violation";
    case ErrorCode::kEmptyCorpus: return "empty-corpus";
    case ErrorCode::kAuthFailure: return "auth-failure";
    case ErrorCode::kRateLimited: return "rate-limited";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kUnreachable: return "unreachable";
    case ErrorCode::kExhaustedRetries: return "exhausted-retries";
    case ErrorCode::kMalformedResponse: return "malformed-endpoint-response";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kEmbedderFailure: return "embedder-failure";
    case ErrorCode::kRerankerUnavailable: return "reranker-unavailable";
    case ErrorCode::kUndefinedMetric: return "undefined-metric";
    case ErrorCode::kInsufficientRecords: return "insufficient-records";
    case ErrorCode::kConfigInvalid: return "config-invalid";
    case ErrorCode::kLocked: return "locked";
    case ErrorCode::kTampered: return "tampered";
    case ErrorCode::kNoResults: return "no-results";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

namespace text {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

// Multi-byte punctuation that shows up in scraped titles.
constexpr std::array<std::string_view, 8> kUtf8Punct = {
    "\xE2\x80\x98", "\xE2\x80\x99", "\xE2\x80\x9C", "\xE2\x80\x9D",
    "\xE2\x80\x93", "\xE2\x80\x94", "\xE2\x80\xA6", "\xC2\xA0"};

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

bool is_blank(std::string_view s) {
  for (char c : s)
    if (!is_space(static_cast<unsigned char>(c))) return false;
  return true;
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < s.size();) {
    auto u = static_cast<unsigned char>(s[i]);
    if (u >= 0x80) {
      bool punct = false;
      for (auto p : kUtf8Punct) {
        if (s.substr(i, p.size()) == p) {
          punct = true;
          i += p.size();
          break;
        }
      }
      if (punct) {
        flush();
      } else {
        cur.push_back(s[i]);
        ++i;
      }
      continue;
    }
    if (is_space(u) || std::ispunct(u)) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
    ++i;
  }
  flush();
  return tokens;
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::size_t count_whitespace_tokens(std::string_view s) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : s) {
    bool sp = is_space(static_cast<unsigned char>(c));
    if (!sp && !in_token) ++n;
    in_token = !sp;
  }
  return n;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1)
    throw Error(ErrorCode::kIo, "sha256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

// splitmix64
std::uint64_t Rng::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorCode::kInvalidArgument, "Rng::below(0)");
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % bound;
}

double Rng::unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

}  // namespace text
}  // namespace citeval
