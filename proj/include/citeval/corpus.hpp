#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace citeval {

/// Unique handle of a record inside a corpus.
struct RecordKey {
  std::string source_link;
  std::uint64_t sentence_id = 0;

  auto operator<=>(const RecordKey&) const = default;
  bool operator==(const RecordKey&) const = default;

  /// "link#id"; parsed back with `parse`.
  std::string str() const;
  static RecordKey parse(const std::string& s);
};

/// One sentence-level attribution instance.
struct CitationRecord {
  std::string category;
  std::string source_link;
  std::string source_title;
  std::uint64_t sentence_id = 0;
  std::string sentence;
  std::string citation_text;
  std::string cited_paper_id;
  std::string cited_title;
  std::string cited_abstract;
  std::vector<std::string> cited_authors;
  // Optional pass-through metadata (surrounding sentences, cross-domain
  // markers, publication date) kept as serialized JSON values.
  std::map<std::string, std::string> extras;

  RecordKey key() const { return {source_link, sentence_id}; }
  bool operator==(const CitationRecord&) const = default;
};

/// The twelve arXiv domains the benchmark covers.
const std::set<std::string>& default_domains();

struct LoadOptions {
  bool strict = true;
  // Empty means "accept any category".
  std::set<std::string> domains = default_domains();
};

class Corpus {
 public:
  Corpus() = default;
  // Validates uniqueness and builds the domain index; throws on violation.
  explicit Corpus(std::vector<CitationRecord> records);

  const std::vector<CitationRecord>& records() const { return records_; }
  const std::map<std::string, std::vector<std::size_t>>& domain_index() const {
    return domain_index_;
  }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // Index of a key, or npos.
  std::size_t find(const RecordKey& key) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  // Populated by load_corpus.
  std::size_t raw_count = 0;
  std::size_t dropped_count = 0;
  std::vector<std::string> warnings;
  std::string content_hash;

 private:
  std::vector<CitationRecord> records_;
  std::map<std::string, std::vector<std::size_t>> domain_index_;
  std::map<RecordKey, std::size_t> by_key_;
};

struct QueryView {
  RecordKey key;
  std::string category;
  std::string sentence;
  std::string source_title;
};

struct MetadataView {
  RecordKey key;
  std::string cited_paper_id;
  std::string citation_text;
  std::string cited_title;
  std::string cited_abstract;
  std::vector<std::string> cited_authors;
  std::map<std::string, std::string> extras;
};

struct CorpusSplit {
  std::vector<QueryView> query_side;
  std::vector<MetadataView> metadata_side;
};

Corpus load_corpus(const std::filesystem::path& path,
                   const LoadOptions& options = {});
Corpus parse_corpus(const std::string& document,
                    const LoadOptions& options = {});

/// Returns the violated invariant, or an empty string for a valid record.
std::string validate_record(const CitationRecord& record,
                            const std::set<std::string>& domains);

CorpusSplit split_corpus(const Corpus& corpus);
/// Inverse of split_corpus: joins both views on their keys.
std::vector<CitationRecord> join_split(const CorpusSplit& split);

std::map<std::string, std::size_t> domain_counts(const Corpus& corpus);

/// Serializes records in the input schema (array of objects).
std::string corpus_to_json(const std::vector<CitationRecord>& records);

}  // namespace citeval
