#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "citeval/corpus.hpp"
#include "citeval/error.hpp"

namespace citeval {

/// Gestalt pattern matching similarity: 2*M / (|a| + |b|), where M counts the
/// characters of the matching blocks found by taking the longest common
/// substring (earliest in `a`, then earliest in `b`) and recursing on both
/// flanks. Two empty strings score 1.
double ratcliff_obershelp(std::string_view a, std::string_view b);

/// Upper bound on ratcliff_obershelp from character multisets.
double ratcliff_obershelp_quick_bound(std::string_view a, std::string_view b);

enum class SwapField { kTitle, kAbstract };

std::string_view swap_field_name(SwapField f) noexcept;
std::optional<SwapField> parse_swap_field(std::string_view name) noexcept;

inline constexpr double kConfusableThreshold = 0.70;

struct PerturbedRecord {
  CitationRecord base;
  SwapField swapped_field = SwapField::kTitle;
  RecordKey substitute_source_key;
  std::string substitute_value;
  double similarity = 0.0;

  /// The base record with the swapped field replaced.
  CitationRecord perturbed() const;
};

struct ConfusableOptions {
  double threshold = kConfusableThreshold;
  // Compare lowercased strings; off by default.
  bool casefold = false;
  // 0 = hardware concurrency.
  std::size_t threads = 0;
};

/// Most similar other record whose field value differs from the original and
/// clears the threshold; ties go to the lexicographically smaller key.
std::optional<PerturbedRecord> find_confusable(const CitationRecord& record, const Corpus& corpus,
                                               SwapField field,
                                               const ConfusableOptions& options = {});

struct AdversarialOptions {
  ConfusableOptions confusable;
  // Sample per domain in round-robin order instead of globally.
  bool stratify_by_domain = false;
};

class InsufficientRecordsError : public Error {
 public:
  InsufficientRecordsError(std::size_t requested, std::size_t achievable);
  std::size_t requested() const noexcept { return requested_; }
  std::size_t achievable() const noexcept { return achievable_; }

 private:
  std::size_t requested_;
  std::size_t achievable_;
};

/// Seeded uniform sample of `n` perturbable records (a seeded permutation is
/// walked until `n` records admit a confusable substitute).
std::vector<PerturbedRecord> build_adversarial_set(const Corpus& corpus, std::size_t n,
                                                   SwapField field, std::uint64_t seed,
                                                   const AdversarialOptions& options = {});

/// Input-corpus schema plus swapped_field, substitute_source_key, similarity.
std::string adversarial_set_to_json(const std::vector<PerturbedRecord>& set);

}  // namespace citeval
