#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citeval/corpus.hpp"
#include "citeval/prompting.hpp"

namespace citeval::metrics {

/// Lowercase, punctuation stripped, whitespace split, no empty tokens.
std::vector<std::string> normalize(std::string_view text);

/// Symmetric-difference fraction over the union of unique tokens.
/// 0 when both sides are empty.
double word_mismatch(std::string_view generated, std::string_view truth);

/// Smoothed sentence BLEU-4 (uniform weights, brevity penalty). Orders with
/// zero matches use (matches + 1) / (total + 1). Empty candidate scores 0.
double bleu4(std::string_view candidate, std::string_view reference);

/// Multiset token-overlap F1; 0 when either side is empty.
double f1_token(std::string_view candidate, std::string_view reference);

struct AuthorMatch {
  bool exact = false;
  double f1 = 0.0;
};

/// Whole-name comparison with set semantics after normalisation.
AuthorMatch author_match(std::span<const std::string> generated,
                         std::span<const std::string> truth);

/// Normalised token sequences are equal. Also the SID escalation judge.
bool title_exact_match(std::string_view generated, std::string_view truth);

struct ScoredResponse {
  RecordKey record_key;
  std::string domain;
  TaskKind protocol = TaskKind::kIndirectTitle;
  ModelVerdict verdict;
  std::string ground_truth;
  bool exact_match = false;
  // Absent for passes.
  std::optional<double> word_mismatch;
  std::optional<double> bleu4;
  std::optional<double> f1;
  bool is_pass = false;
  bool is_unparseable = false;
};

/// Scores a verdict against the record's ground truth for its protocol:
/// the cited title for title tasks, the cited authors for author tasks.
ScoredResponse score_response(const CitationRecord& record, TaskKind protocol,
                              const ModelVerdict& verdict);

enum class PassHandling {
  kExclude,  // passes leave both HR denominators
  kInclude,  // passes stay in the denominators and contribute 0
};

/// HR = 1/2 (mean I[not exact] + mean word_mismatch). Throws
/// kUndefinedMetric when no response is counted.
double hallucination_rate(std::span<const ScoredResponse> responses,
                          PassHandling passes = PassHandling::kExclude);

double pass_percentage(std::span<const ModelVerdict> verdicts);
double pass_percentage(std::span<const ScoredResponse> responses);

enum class StdConvention {
  kSample,      // divide by N - 1
  kPopulation,  // divide by N
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and standard deviation; a single value has std 0.
MeanStd aggregate(std::span<const double> values, StdConvention convention = StdConvention::kSample);

struct DomainReport {
  std::string domain;
  std::size_t query_count = 0;
  std::size_t pass_count = 0;
  std::optional<double> hr;  // absent when every response was a pass
  double pp = 0.0;
  std::optional<double> f1_mean;
  std::optional<double> bleu_mean;
  double f1_std = 0.0;
  double bleu_std = 0.0;
  std::size_t unparseable_count = 0;
  std::size_t format_noncompliant_count = 0;
};

DomainReport domain_report(const std::string& domain, std::span<const ScoredResponse> responses,
                           PassHandling passes = PassHandling::kExclude,
                           StdConvention convention = StdConvention::kSample);

}  // namespace citeval::metrics
