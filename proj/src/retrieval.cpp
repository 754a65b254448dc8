#include "citeval/retrieval.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "citeval/error.hpp"
#include "citeval/text.hpp"

namespace citeval {

namespace {

struct Candidate {
  std::size_t doc = 0;
  double dot = 0.0;
  double score = 0.0;
};

std::vector<Embedding> embed_checked(const Embedder& embedder, std::span<const std::string> texts) {
  auto out = embedder.embed(texts);
  if (out.size() != texts.size())
    throw Error(ErrorCode::kEmbedderFailure,
                "embedder returned " + std::to_string(out.size()) + " vectors for " +
                    std::to_string(texts.size()) + " inputs");
  return out;
}

Embedding embed_query(const std::string& sentence, const RetrievalIndex& index,
                      const Embedder& embedder) {
  if (index.documents.empty()) throw Error(ErrorCode::kEmptyCorpus, "empty retrieval index");
  std::string q = sentence;
  auto v = embed_checked(embedder, std::span<const std::string>(&q, 1));
  if (v[0].size() != index.embedding_dim)
    throw Error(ErrorCode::kDimensionMismatch, "query embedding dimension mismatch");
  return std::move(v[0]);
}

// Bi-encoder shortlist: top `n` by raw dot product (exp is monotone), ties by
// smaller doc id.
std::vector<Candidate> shortlist(const Embedding& q, const RetrievalIndex& index, std::size_t n) {
  std::vector<Candidate> all(index.documents.size());
  for (std::size_t i = 0; i < all.size(); ++i)
    all[i] = {i, dot(q, index.documents[i].embedding), 0.0};
  n = std::min(n, all.size());
  auto by_dot = [&](const Candidate& a, const Candidate& b) {
    if (a.dot != b.dot) return a.dot > b.dot;
    return index.documents[a.doc].doc_id < index.documents[b.doc].doc_id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), by_dot);
  all.resize(n);
  return all;
}

std::vector<RankedHit> finish(std::vector<Candidate> cands, const RetrievalIndex& index,
                              std::size_t top_k) {
  std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.dot != b.dot) return a.dot > b.dot;
    return index.documents[a.doc].doc_id < index.documents[b.doc].doc_id;
  });
  std::vector<RankedHit> hits;
  for (std::size_t i = 0; i < cands.size() && i < top_k; ++i) {
    hits.push_back({index.documents[cands[i].doc].doc_id, std::exp(cands[i].dot),
                    cands[i].score, i + 1});
  }
  return hits;
}

}  // namespace

const IndexedDocument* RetrievalIndex::find(const RecordKey& id) const {
  auto it = by_id.find(id);
  return it == by_id.end() ? nullptr : &documents[it->second];
}

constexpr int kPerDocumentAttempts = 2;

RetrievalIndex build_index(std::span<const MetadataView> metadata_side, const Embedder& embedder,
                           std::size_t batch_size) {
  if (metadata_side.empty()) throw Error(ErrorCode::kEmptyCorpus, "no documents to index");
  if (batch_size == 0) batch_size = 1;

  RetrievalIndex index;
  index.documents.reserve(metadata_side.size());
  std::vector<std::string> texts;
  texts.reserve(metadata_side.size());
  for (const auto& m : metadata_side) {
    IndexedDocument d;
    d.doc_id = m.key;
    d.title = m.cited_title;
    d.abstract = m.cited_abstract;
    d.text = m.cited_title + "\n" + m.cited_abstract;
    for (auto& tok : text::tokenize(d.text)) ++d.term_frequencies[tok];
    for (const auto& [term, tf] : d.term_frequencies) {
      d.length += tf;
      ++index.df[term];
    }
    if (!index.by_id.emplace(d.doc_id, index.documents.size()).second)
      throw Error(ErrorCode::kSchemaViolation, "duplicate document id " + d.doc_id.str());
    texts.push_back(d.text);
    index.documents.push_back(std::move(d));
  }

  for (std::size_t start = 0; start < texts.size(); start += batch_size) {
    const std::size_t end = std::min(texts.size(), start + batch_size);
    std::span<const std::string> batch(texts.data() + start, end - start);
    std::vector<Embedding> vecs;
    try {
      vecs = embed_checked(embedder, batch);
    } catch (const Error& e) {
      spdlog::warn("embedding batch {}..{} failed ({}); retrying per document", start, end,
                   e.what());
      vecs.clear();
      for (const auto& t : batch) {
        std::span<const std::string> one(&t, 1);
        for (int attempt = 1;; ++attempt) {
          try {
            vecs.push_back(std::move(embed_checked(embedder, one)[0]));
            break;
          } catch (const Error& doc_error) {
            if (attempt == kPerDocumentAttempts)
              throw Error(ErrorCode::kEmbedderFailure,
                          std::string("embedding failed: ") + doc_error.what());
          }
        }
      }
    }
    for (std::size_t i = 0; i < vecs.size(); ++i)
      index.documents[start + i].embedding = std::move(vecs[i]);
  }

  index.embedding_dim = index.documents.front().embedding.size();
  if (index.embedding_dim == 0) throw Error(ErrorCode::kDimensionMismatch, "zero-length embedding");
  std::size_t total = 0;
  std::map<std::string_view, const Embedding*> seen_text;
  for (const auto& d : index.documents) {
    if (d.embedding.size() != index.embedding_dim)
      throw Error(ErrorCode::kDimensionMismatch,
                  "document " + d.doc_id.str() + " has dimension " +
                      std::to_string(d.embedding.size()) + ", expected " +
                      std::to_string(index.embedding_dim));
    total += d.length;
    auto [it, inserted] = seen_text.emplace(d.text, &d.embedding);
    if (!inserted && *it->second != d.embedding) index.nondeterministic_embedder = true;
  }
  if (index.nondeterministic_embedder)
    spdlog::warn("embedder returned different vectors for identical documents");
  index.avg_length = static_cast<double>(total) / static_cast<double>(index.documents.size());
  return index;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::kDimensionMismatch, "vectors of dimension " + std::to_string(a.size()) +
                                                   " and " + std::to_string(b.size()));
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double biencoder_score(std::span<const double> q, std::span<const double> d) {
  return std::exp(dot(q, d));
}

double bm25_idf(std::size_t n_docs, std::size_t df) {
  const double n = static_cast<double>(n_docs), f = static_cast<double>(df);
  return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

double bm25_score(std::span<const std::string> query_terms, const IndexedDocument& doc,
                  const RetrievalIndex& index, Bm25Params p) {
  double score = 0.0;
  const double len_norm =
      index.avg_length > 0.0 ? static_cast<double>(doc.length) / index.avg_length : 0.0;
  for (const auto& term : query_terms) {
    auto tf_it = doc.term_frequencies.find(term);
    if (tf_it == doc.term_frequencies.end()) continue;
    auto df_it = index.df.find(term);
    const std::size_t df = df_it == index.df.end() ? 0 : df_it->second;
    const double tf = static_cast<double>(tf_it->second);
    score += bm25_idf(index.documents.size(), df) * tf * (p.k1 + 1.0) /
             (tf + p.k1 * (1.0 - p.b + p.b * len_norm));
  }
  return score;
}

std::vector<RankedHit> retrieve_naive(const std::string& sentence, const RetrievalIndex& index,
                                      const Embedder& embedder, std::size_t shortlist_n,
                                      std::size_t top_k, Bm25Params params) {
  if (top_k == 0) throw Error(ErrorCode::kInvalidArgument, "top_k must be positive");
  const Embedding q = embed_query(sentence, index, embedder);
  auto cands = shortlist(q, index, std::max(shortlist_n, top_k));
  const auto terms = text::tokenize(sentence);
  for (auto& c : cands) c.score = bm25_score(terms, index.documents[c.doc], index, params);
  return finish(std::move(cands), index, top_k);
}

std::vector<RankedHit> retrieve_advanced(const std::string& sentence, const RetrievalIndex& index,
                                         const Embedder& embedder, const Reranker& reranker,
                                         std::size_t top_k, std::size_t shortlist_n) {
  if (top_k == 0) throw Error(ErrorCode::kInvalidArgument, "top_k must be positive");
  const Embedding q = embed_query(sentence, index, embedder);
  auto cands = shortlist(q, index, std::max(shortlist_n, top_k));

  std::vector<std::string> texts;
  texts.reserve(cands.size());
  for (const auto& c : cands) texts.push_back(index.documents[c.doc].text);
  std::vector<double> scores;
  try {
    scores = reranker.score(sentence, texts);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kRerankerUnavailable,
                std::string("advanced retrieval degraded: reranker failed: ") + e.what());
  }
  if (scores.size() != cands.size())
    throw Error(ErrorCode::kRerankerUnavailable,
                "advanced retrieval degraded: reranker returned " + std::to_string(scores.size()) +
                    " scores for " + std::to_string(cands.size()) + " candidates");
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw Error(ErrorCode::kRerankerUnavailable, "reranker returned a non-finite score");
    cands[i].score = scores[i];
  }
  return finish(std::move(cands), index, top_k);
}

std::string format_context(std::span<const RankedHit> hits, const Corpus& corpus,
                           std::size_t budget) {
  std::string out;
  std::size_t used = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    auto idx = corpus.find(hits[i].doc_id);
    if (idx == Corpus::npos) continue;
    const auto& r = corpus.records()[idx];
    const std::size_t cost =
        text::count_whitespace_tokens(r.cited_title) + text::count_whitespace_tokens(r.cited_abstract);
    if (!out.empty() && used + cost > budget) break;
    if (!out.empty()) out += "\n\n";
    out += "[" + std::to_string(hits[i].rank) + "] Title: " + r.cited_title +
           "\nAbstract: " + r.cited_abstract;
    used += cost;
  }
  return out;
}

}  // namespace citeval
