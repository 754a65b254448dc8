#include "citeval/adversarial.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <mutex>
#include <thread>

#include "citeval/parallel.hpp"
#include "citeval/text.hpp"
#include "json.hpp"

namespace citeval {

namespace {

struct Block {
  std::size_t alo, ahi, blo, bhi;
};

// Total matched characters. Longest match search keeps the first maximal
// match in (i, j) scan order, which is earliest in `a` then earliest in `b`.
std::size_t matched_chars(std::string_view a, std::string_view b) {
  thread_local std::vector<std::uint32_t> prev, cur;
  std::size_t total = 0;
  std::vector<Block> stack{{0, a.size(), 0, b.size()}};
  while (!stack.empty()) {
    const Block blk = stack.back();
    stack.pop_back();
    if (blk.alo >= blk.ahi || blk.blo >= blk.bhi) continue;
    const std::size_t width = blk.bhi - blk.blo;
    prev.assign(width + 1, 0);
    cur.assign(width + 1, 0);
    std::size_t best = 0, bi = blk.alo, bj = blk.blo;
    for (std::size_t i = blk.alo; i < blk.ahi; ++i) {
      const char ca = a[i];
      for (std::size_t j = 0; j < width; ++j) {
        if (b[blk.blo + j] == ca) {
          const std::uint32_t k = prev[j] + 1;
          cur[j + 1] = k;
          if (k > best) {
            best = k;
            bi = i + 1 - k;
            bj = blk.blo + j + 1 - k;
          }
        } else {
          cur[j + 1] = 0;
        }
      }
      std::swap(prev, cur);
    }
    if (best == 0) continue;
    total += best;
    stack.push_back({blk.alo, bi, blk.blo, bj});
    stack.push_back({bi + best, blk.ahi, bj + best, blk.bhi});
  }
  return total;
}

using Histogram = std::array<std::uint32_t, 256>;

Histogram histogram(std::string_view s) {
  Histogram h{};
  for (unsigned char c : s) ++h[c];
  return h;
}

double ratio(std::size_t matched, std::size_t total) {
  return total == 0 ? 1.0 : 2.0 * static_cast<double>(matched) / static_cast<double>(total);
}

const std::string& field_of(const CitationRecord& r, SwapField f) {
  return f == SwapField::kTitle ? r.cited_title : r.cited_abstract;
}

// Distinct field values of a corpus, each with the smallest key carrying it.
struct CandidatePool {
  std::vector<std::string> values;  // compared form (casefolded if asked)
  std::vector<std::string> originals;
  std::vector<RecordKey> keys;
  std::vector<Histogram> histograms;
  std::map<std::string, std::size_t> index_of;  // compared form -> slot

  CandidatePool(const Corpus& corpus, SwapField field, bool casefold) {
    std::map<std::string, std::pair<RecordKey, std::string>> best;
    for (const auto& rec : corpus.records()) {
      const std::string& raw = field_of(rec, field);
      std::string cmp = casefold ? text::to_lower_ascii(raw) : raw;
      auto [it, inserted] = best.try_emplace(std::move(cmp), rec.key(), raw);
      if (!inserted && rec.key() < it->second.first) it->second = {rec.key(), raw};
    }
    for (auto& [cmp, kv] : best) {
      index_of.emplace(cmp, values.size());
      histograms.push_back(histogram(cmp));
      values.push_back(cmp);
      keys.push_back(kv.first);
      originals.push_back(kv.second);
    }
  }
};

struct Candidate {
  double similarity = -1.0;
  std::size_t slot = static_cast<std::size_t>(-1);
};

bool better(const Candidate& x, const Candidate& y, const CandidatePool& pool) {
  if (x.slot == static_cast<std::size_t>(-1)) return false;
  if (y.slot == static_cast<std::size_t>(-1)) return true;
  if (x.similarity != y.similarity) return x.similarity > y.similarity;
  return pool.keys[x.slot] < pool.keys[y.slot];
}

std::optional<PerturbedRecord> search(const CitationRecord& record, const CandidatePool& pool,
                                      SwapField field, const ConfusableOptions& options) {
  const std::string& raw = field_of(record, field);
  const std::string query = options.casefold ? text::to_lower_ascii(raw) : raw;
  const Histogram qh = histogram(query);
  const std::size_t n = pool.values.size();

  std::size_t threads = options.threads == 0 ? std::thread::hardware_concurrency() : options.threads;
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n / 64));

  std::vector<Candidate> local(threads);
  parallel_for_bounded(threads, threads, [&](std::size_t t) {
    Candidate best;
    for (std::size_t s = t; s < n; s += threads) {
      const std::string& v = pool.values[s];
      if (v == query) continue;
      const std::size_t total = v.size() + query.size();
      const double floor = std::max(options.threshold, best.similarity);
      if (ratio(std::min(v.size(), query.size()), total) < floor) continue;
      std::size_t common = 0;
      const Histogram& vh = pool.histograms[s];
      for (std::size_t c = 0; c < 256; ++c) common += std::min(qh[c], vh[c]);
      if (ratio(common, total) < floor) continue;
      Candidate c{ratio(matched_chars(query, v), total), s};
      if (c.similarity >= options.threshold && better(c, best, pool)) best = c;
    }
    local[t] = best;
  });

  Candidate best;
  for (const auto& c : local)
    if (better(c, best, pool)) best = c;
  if (best.slot == static_cast<std::size_t>(-1)) return std::nullopt;

  PerturbedRecord out;
  out.base = record;
  out.swapped_field = field;
  out.substitute_source_key = pool.keys[best.slot];
  out.substitute_value = pool.originals[best.slot];
  out.similarity = best.similarity;
  return out;
}

}  // namespace

double ratcliff_obershelp(std::string_view a, std::string_view b) {
  return ratio(matched_chars(a, b), a.size() + b.size());
}

double ratcliff_obershelp_quick_bound(std::string_view a, std::string_view b) {
  const Histogram ha = histogram(a), hb = histogram(b);
  std::size_t common = 0;
  for (std::size_t c = 0; c < 256; ++c) common += std::min(ha[c], hb[c]);
  return ratio(common, a.size() + b.size());
}

std::string_view swap_field_name(SwapField f) noexcept {
  return f == SwapField::kTitle ? "Title" : "Abstract";
}

std::optional<SwapField> parse_swap_field(std::string_view name) noexcept {
  const std::string lower = text::to_lower_ascii(name);
  if (lower == "title") return SwapField::kTitle;
  if (lower == "abstract") return SwapField::kAbstract;
  return std::nullopt;
}

CitationRecord PerturbedRecord::perturbed() const {
  CitationRecord r = base;
  (swapped_field == SwapField::kTitle ? r.cited_title : r.cited_abstract) = substitute_value;
  return r;
}

std::optional<PerturbedRecord> find_confusable(const CitationRecord& record, const Corpus& corpus,
                                               SwapField field,
                                               const ConfusableOptions& options) {
  return search(record, CandidatePool(corpus, field, options.casefold), field, options);
}

InsufficientRecordsError::InsufficientRecordsError(std::size_t requested, std::size_t achievable)
    : Error(ErrorCode::kInsufficientRecords,
            "requested " + std::to_string(requested) + " perturbable records, only " +
                std::to_string(achievable) + " achievable"),
      requested_(requested),
      achievable_(achievable) {}

std::vector<PerturbedRecord> build_adversarial_set(const Corpus& corpus, std::size_t n,
                                                   SwapField field, std::uint64_t seed,
                                                   const AdversarialOptions& options) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "adversarial set size must be positive");
  text::Rng rng(seed);
  std::vector<std::size_t> order;
  if (options.stratify_by_domain) {
    // Each domain is shuffled on its own, then domains are interleaved.
    std::vector<std::vector<std::size_t>> buckets;
    for (const auto& [domain, idx] : corpus.domain_index()) {
      buckets.push_back(idx);
      rng.shuffle(buckets.back());
    }
    for (std::size_t round = 0;; ++round) {
      bool any = false;
      for (const auto& b : buckets)
        if (round < b.size()) {
          order.push_back(b[round]);
          any = true;
        }
      if (!any) break;
    }
  } else {
    order.resize(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
  }

  const CandidatePool pool(corpus, field, options.confusable.casefold);
  std::vector<PerturbedRecord> out;
  for (std::size_t idx : order) {
    if (auto p = search(corpus.records()[idx], pool, field, options.confusable)) {
      out.push_back(std::move(*p));
      if (out.size() == n) return out;
    }
  }
  throw InsufficientRecordsError(n, out.size());
}

std::string adversarial_set_to_json(const std::vector<PerturbedRecord>& set) {
  std::vector<CitationRecord> rows;
  rows.reserve(set.size());
  for (const auto& p : set) rows.push_back(p.perturbed());
  auto doc = nlohmann::json::parse(corpus_to_json(rows));
  for (std::size_t i = 0; i < set.size(); ++i) {
    doc[i]["swapped_field"] = swap_field_name(set[i].swapped_field);
    doc[i]["substitute_source_key"] = set[i].substitute_source_key.str();
    doc[i]["similarity"] = set[i].similarity;
  }
  return doc.dump(2);
}

}  // namespace citeval
