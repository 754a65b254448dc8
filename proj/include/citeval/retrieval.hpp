#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "citeval/corpus.hpp"
#include "citeval/gateway.hpp"

namespace citeval {

using Embedding = std::vector<double>;

// -- Service handles ---------------------------------------------------------

/// Text embedding service. Output order matches input order.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) const = 0;
  virtual std::string model_id() const = 0;
};

/// Deterministic feature-hashing embedder (signed token hashing, L2
/// normalised). Offline stand-in for a neural bi-encoder.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;
  std::string model_id() const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// {input: [...], model} -> {data: [{embedding: [...]}]}
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::shared_ptr<Transport> transport, std::string url, std::string model,
               std::string api_key_env = {});
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;
  std::string model_id() const override { return model_; }

 private:
  std::shared_ptr<Transport> transport_;
  std::string url_;
  std::string model_;
  std::string api_key_env_;
};

/// Content-hash keyed on-disk cache in front of another embedder. Each vector
/// lives in `<dir>/<sha256>.bin` (u32 dim + little-endian f64 values) and is
/// listed in `<dir>/manifest.tsv`.
class CachingEmbedder final : public Embedder {
 public:
  CachingEmbedder(std::shared_ptr<const Embedder> inner, std::filesystem::path dir);
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;
  std::string model_id() const override { return inner_->model_id(); }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::string key_for(const std::string& text) const;

  std::shared_ptr<const Embedder> inner_;
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  mutable std::size_t hits_ = 0;
  mutable std::size_t misses_ = 0;
};

/// Cross-encoder relevance scoring service.
class Reranker {
 public:
  virtual ~Reranker() = default;
  /// One score per candidate, order preserving.
  virtual std::vector<double> score(const std::string& sentence,
                                    std::span<const std::string> candidates) const = 0;
  virtual std::string checkpoint_hash() const { return {}; }
};

/// POST <base>/score {sentence, candidates} -> {scores}; GET <base>/health.
class HttpReranker final : public Reranker {
 public:
  HttpReranker(std::shared_ptr<Transport> transport, std::string base_url);
  std::vector<double> score(const std::string& sentence,
                            std::span<const std::string> candidates) const override;
  std::string checkpoint_hash() const override;

 private:
  std::shared_ptr<Transport> transport_;
  std::string base_url_;
};

// -- Index ----------------------------------------------------------------------

struct IndexedDocument {
  RecordKey doc_id;
  std::string title;
  std::string abstract;
  std::string text;  // title + "\n" + abstract
  Embedding embedding;
  std::map<std::string, std::size_t> term_frequencies;
  std::size_t length = 0;
};

struct RetrievalIndex {
  std::vector<IndexedDocument> documents;
  std::unordered_map<std::string, std::size_t> df;
  double avg_length = 0.0;
  std::size_t embedding_dim = 0;
  // Identical texts came back with different vectors.
  bool nondeterministic_embedder = false;

  std::map<RecordKey, std::size_t> by_id;

  const IndexedDocument* find(const RecordKey& id) const;
};

/// Embeds every metadata document once (batched; failed batches are retried
/// per document before giving up) and computes lexical statistics.
RetrievalIndex build_index(std::span<const MetadataView> metadata_side, const Embedder& embedder,
                           std::size_t batch_size = 64);

double dot(std::span<const double> a, std::span<const double> b);

/// exp(q . d); strictly positive.
double biencoder_score(std::span<const double> query_embedding,
                       std::span<const double> doc_embedding);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

double bm25_idf(std::size_t n_docs, std::size_t df);

double bm25_score(std::span<const std::string> query_terms, const IndexedDocument& doc,
                  const RetrievalIndex& index, Bm25Params params = {});

struct RankedHit {
  RecordKey doc_id;
  double bi_encoder_score = 0.0;
  double rank_score = 0.0;
  std::size_t rank = 0;

  bool operator==(const RankedHit&) const = default;
};

inline constexpr std::size_t kDefaultShortlist = 100;
inline constexpr std::size_t kNaiveTopK = 2;
inline constexpr std::size_t kAdvancedTopK = 40;

/// Bi-encoder shortlist of `shortlist_n`, ordered by BM25. Ties fall back to
/// the bi-encoder score, then the smaller doc id.
std::vector<RankedHit> retrieve_naive(const std::string& sentence, const RetrievalIndex& index,
                                      const Embedder& embedder,
                                      std::size_t shortlist_n = kDefaultShortlist,
                                      std::size_t top_k = kNaiveTopK, Bm25Params params = {});

/// Bi-encoder shortlist of max(shortlist_n, top_k) re-scored by the
/// cross-encoder. A failing reranker is reported, never replaced by BM25.
std::vector<RankedHit> retrieve_advanced(const std::string& sentence, const RetrievalIndex& index,
                                         const Embedder& embedder, const Reranker& reranker,
                                         std::size_t top_k = kAdvancedTopK,
                                         std::size_t shortlist_n = kDefaultShortlist);

/// Title + abstract of each hit in rank order, whole documents only, until
/// the whitespace-token budget is spent. The first document is always kept.
std::string format_context(std::span<const RankedHit> hits, const Corpus& corpus,
                           std::size_t budget);

}  // namespace citeval
