#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "citeval/gateway.hpp"
#include "citeval/metrics.hpp"
#include "citeval/retrieval.hpp"

namespace citeval {

enum class Protocol { kDirectAuthor, kDirectAuthorMeta, kIndirectTitle, kSid };
enum class RetrievalMode { kNone, kNaive, kAdvanced };

std::string_view protocol_name(Protocol p) noexcept;
std::optional<Protocol> parse_protocol(std::string_view name) noexcept;
std::string_view retrieval_mode_name(RetrievalMode m) noexcept;
std::optional<RetrievalMode> parse_retrieval_mode(std::string_view name) noexcept;

// -- Configuration -------------------------------------------------------------

struct ExperimentConfig {
  std::string corpus;
  bool strict = true;
  // Empty set accepts any category.
  std::set<std::string> domains = default_domains();
  std::vector<Protocol> protocols{Protocol::kIndirectTitle};
  RetrievalMode retrieval_mode = RetrievalMode::kNone;
  GenerationConfig generation;
  std::size_t concurrency = 4;
  // Records per domain, 0 = all. Sampled with `seed`.
  std::size_t sample_limit = 0;
  std::uint64_t seed = 0;
  std::string output_dir;

  std::string reranker_url;
  // Empty embedding_url selects the built-in hashing embedder.
  std::string embedding_url;
  std::string embedding_model;
  std::string embedding_api_key_env;
  std::size_t embedding_dim = 256;
  std::string embedding_cache_dir;
  std::size_t shortlist_n = kDefaultShortlist;
  // 0 = mode default (2 for Naive, 40 for Advanced).
  std::size_t top_k = 0;
  std::size_t context_budget = 2048;

  std::string judge = "exact";
  metrics::PassHandling pass_handling = metrics::PassHandling::kExclude;
  metrics::StdConvention std_convention = metrics::StdConvention::kSample;
  std::string template_dir;

  int retry_max_attempts = 5;
  int retry_base_delay_ms = 1000;
  int request_timeout_s = 60;

  void validate() const;
  std::size_t effective_top_k() const;

  /// Every key with its current value; the inverse of set().
  std::map<std::string, std::string> to_map() const;
  void set(const std::string& key, const std::string& value);

  static const std::vector<std::string>& keys();
};

/// Flat `key = value` text; `#` starts a comment. API keys are rejected.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

// -- Run -----------------------------------------------------------------------

struct RunManifest {
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> template_hashes;
  std::string template_set_hash;
  std::string corpus_hash;
  std::string checkpoint_hash;
  std::string started_at;
  std::string finished_at;
  // cell key ("Protocol|link#id") -> sha256 of its persisted row.
  std::map<std::string, std::string> completed;
  std::size_t rows = 0;
  std::uint64_t results_bytes = 0;
  std::string chain_head;

  // Counters of the most recent invocation; not persisted.
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

/// Injection points; null members are built from the config.
struct RunServices {
  std::shared_ptr<Transport> llm;
  std::shared_ptr<Transport> aux;  // embedder and reranker traffic
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<const Reranker> reranker;
  std::function<void(std::chrono::milliseconds)> sleep;
};

inline constexpr const char* kResultsFile = "results.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kLockFile = ".lock";

/// Executes every (protocol, record) cell not yet recorded in the output
/// directory and appends its scored row. Completed rows are committed in
/// input order after each batch, so an interrupted run resumes where it
/// stopped.
RunManifest run(const ExperimentConfig& config, const RunServices& services = {});

/// Loads a manifest and checks it against its results file. Throws kTampered
/// on any inconsistency.
RunManifest verify_run(const std::filesystem::path& output_dir);

/// Verified, committed result rows of a run, in file order.
std::vector<std::string> committed_rows(const std::filesystem::path& output_dir);

// -- Reports -------------------------------------------------------------------

struct ReportCell {
  std::string protocol;  // protocol plus retrieval mode, e.g. "IndirectTitle/Naive"
  std::string metric;    // HR, PP, F1, BLEU, Unparseable, Noncompliant
  std::string model;
  std::string row;       // domain, "Mean" or "Standard Deviation"
  std::optional<double> value;

  bool operator==(const ReportCell&) const = default;
};

struct ReportBundle {
  std::vector<ReportCell> cells;
  bool operator==(const ReportBundle&) const = default;
};

struct ReportOptions {
  metrics::PassHandling pass_handling = metrics::PassHandling::kExclude;
  metrics::StdConvention std_convention = metrics::StdConvention::kSample;
};

inline constexpr const char* kMeanRow = "Mean";
inline constexpr const char* kStdRow = "Standard Deviation";

/// Scans `results_dir` recursively for results files. HR and PP are scaled
/// to percent, F1 and BLEU stay in [0, 1].
ReportBundle report(const std::filesystem::path& results_dir, const ReportOptions& options = {});

/// Per-domain values of one column turned into cells with Mean and
/// Standard Deviation rows appended.
std::vector<ReportCell> column_cells(const std::string& protocol, const std::string& metric,
                                     const std::string& model,
                                     const std::map<std::string, std::optional<double>>& by_domain,
                                     metrics::StdConvention convention);

std::string report_to_csv(const ReportBundle& bundle);
ReportBundle report_from_csv(const std::string& csv);
/// Aligned tables, two decimals.
std::string report_to_text(const ReportBundle& bundle);

// -- Cost ----------------------------------------------------------------------

struct ModelCost {
  std::string model;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
  std::size_t rows = 0;
  bool estimated = false;  // some row's usage was estimated
  std::optional<double> cost;

  std::uint64_t total_tokens() const { return prompt_tokens + completion_tokens; }
};

/// `model = price per 1K tokens` lines.
std::map<std::string, double> parse_price_table(const std::string& text);

std::vector<ModelCost> cost_summary(const std::filesystem::path& results_dir,
                                    const std::map<std::string, double>& prices = {});

std::string cost_summary_to_text(const std::vector<ModelCost>& costs);

}  // namespace citeval
