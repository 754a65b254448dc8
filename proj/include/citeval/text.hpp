#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace citeval::text {

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool is_blank(std::string_view s);

/// Lowercases, turns punctuation into separators and splits on whitespace.
/// Empty tokens are dropped. This is the single tokenizer shared by the
/// lexical index and every comparison metric.
std::vector<std::string> tokenize(std::string_view s);

std::string join(std::span<const std::string> parts, std::string_view sep);

/// Whitespace token count, used for context budgets and usage estimates.
std::size_t count_whitespace_tokens(std::string_view s);

std::string sha256_hex(std::string_view data);

/// Full-precision decimal rendering (round-trips through strtod).
std::string format_double(double v);

// Deterministic RNG helpers. Standard distributions are implementation
// defined, so sampling that must reproduce from a seed goes through these.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  // Uniform in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  // Uniform in [0, 1).
  double unit();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace citeval::text
