#include "citeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "citeval/error.hpp"
#include "citeval/text.hpp"

namespace citeval::metrics {

namespace {

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  Counts c;
  if (toks.size() < n) return c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++c[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                 toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return c;
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::string normalized_name(const std::string& name) {
  auto toks = normalize(name);
  return text::join(toks, " ");
}

}  // namespace

std::vector<std::string> normalize(std::string_view s) { return text::tokenize(s); }

double word_mismatch(std::string_view generated, std::string_view truth) {
  auto g = normalize(generated), t = normalize(truth);
  std::set<std::string> gs(g.begin(), g.end()), ts(t.begin(), t.end());
  std::set<std::string> uni = gs;
  uni.insert(ts.begin(), ts.end());
  if (uni.empty()) return 0.0;
  std::size_t both = 0;
  for (const auto& w : uni)
    if (gs.contains(w) && ts.contains(w)) ++both;
  return static_cast<double>(uni.size() - both) / static_cast<double>(uni.size());
}

double bleu4(std::string_view candidate, std::string_view reference) {
  const auto cand = normalize(candidate), ref = normalize(reference);
  if (cand.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cc = ngram_counts(cand, n), rc = ngram_counts(ref, n);
    std::size_t total = 0, matched = 0;
    for (const auto& [g, k] : cc) {
      total += k;
      auto it = rc.find(g);
      if (it != rc.end()) matched += std::min(k, it->second);
    }
    const double p = matched == 0 ? 1.0 / static_cast<double>(total + 1)
                                  : static_cast<double>(matched) / static_cast<double>(total);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(cand.size()), r = static_cast<double>(ref.size());
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 4.0);
}

double f1_token(std::string_view candidate, std::string_view reference) {
  const auto cand = normalize(candidate), ref = normalize(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  std::map<std::string, std::size_t> rc;
  for (const auto& t : ref) ++rc[t];
  std::size_t overlap = 0;
  for (const auto& t : cand) {
    auto it = rc.find(t);
    if (it != rc.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  const double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return harmonic(p, r);
}

AuthorMatch author_match(std::span<const std::string> generated,
                         std::span<const std::string> truth) {
  std::set<std::string> g, t;
  for (const auto& n : generated)
    if (auto s = normalized_name(n); !s.empty()) g.insert(std::move(s));
  for (const auto& n : truth)
    if (auto s = normalized_name(n); !s.empty()) t.insert(std::move(s));
  AuthorMatch m;
  if (g.empty() || t.empty()) return m;
  std::size_t both = 0;
  for (const auto& n : g) both += t.contains(n) ? 1 : 0;
  m.exact = g == t;
  m.f1 = harmonic(static_cast<double>(both) / static_cast<double>(g.size()),
                  static_cast<double>(both) / static_cast<double>(t.size()));
  return m;
}

bool title_exact_match(std::string_view generated, std::string_view truth) {
  auto g = normalize(generated);
  return !g.empty() && g == normalize(truth);
}

ScoredResponse score_response(const CitationRecord& record, TaskKind protocol,
                              const ModelVerdict& verdict) {
  ScoredResponse s;
  s.record_key = record.key();
  s.domain = record.category;
  s.protocol = protocol;
  s.verdict = verdict;
  s.is_pass = verdict.kind == VerdictKind::kPass;
  s.is_unparseable = verdict.kind == VerdictKind::kUnparseable;

  if (is_author_task(protocol)) {
    s.ground_truth = text::join(record.cited_authors, ", ");
    if (s.is_pass) return s;
    std::vector<std::string> names;
    if (verdict.kind == VerdictKind::kAuthorList) names = verdict.authors;
    const std::string generated = text::join(names, ", ");
    const auto m = author_match(names, record.cited_authors);
    s.exact_match = m.exact;
    s.f1 = m.f1;
    s.word_mismatch = m.exact ? 0.0 : word_mismatch(generated, s.ground_truth);
    s.bleu4 = bleu4(generated, s.ground_truth);
    return s;
  }

  s.ground_truth = record.cited_title;
  if (s.is_pass) return s;
  const std::string generated = verdict.kind == VerdictKind::kTitle ? verdict.title : "";
  s.exact_match = title_exact_match(generated, s.ground_truth);
  s.word_mismatch = word_mismatch(generated, s.ground_truth);
  s.bleu4 = bleu4(generated, s.ground_truth);
  s.f1 = f1_token(generated, s.ground_truth);
  return s;
}

double hallucination_rate(std::span<const ScoredResponse> responses, PassHandling passes) {
  std::size_t denom = 0;
  double wrong = 0.0, mismatch = 0.0;
  for (const auto& r : responses) {
    if (r.is_pass) {
      if (passes == PassHandling::kInclude) ++denom;
      continue;
    }
    ++denom;
    wrong += r.exact_match ? 0.0 : 1.0;
    mismatch += r.word_mismatch.value_or(1.0);
  }
  if (denom == 0)
    throw Error(ErrorCode::kUndefinedMetric, "hallucination rate over zero counted responses");
  const double n = static_cast<double>(denom);
  return 0.5 * (wrong / n + mismatch / n);
}

double pass_percentage(std::span<const ModelVerdict> verdicts) {
  if (verdicts.empty()) throw Error(ErrorCode::kUndefinedMetric, "pass percentage of no verdicts");
  auto passes = std::count_if(verdicts.begin(), verdicts.end(),
                              [](const ModelVerdict& v) { return v.kind == VerdictKind::kPass; });
  return static_cast<double>(passes) / static_cast<double>(verdicts.size());
}

double pass_percentage(std::span<const ScoredResponse> responses) {
  if (responses.empty()) throw Error(ErrorCode::kUndefinedMetric, "pass percentage of no responses");
  auto passes = std::count_if(responses.begin(), responses.end(),
                              [](const ScoredResponse& r) { return r.is_pass; });
  return static_cast<double>(passes) / static_cast<double>(responses.size());
}

MeanStd aggregate(std::span<const double> values, StdConvention convention) {
  if (values.empty()) throw Error(ErrorCode::kUndefinedMetric, "aggregate of no values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double denom = convention == StdConvention::kSample ? n - 1.0 : n;
  return {mean, std::sqrt(ss / denom)};
}

DomainReport domain_report(const std::string& domain, std::span<const ScoredResponse> responses,
                           PassHandling passes, StdConvention convention) {
  DomainReport rep;
  rep.domain = domain;
  rep.query_count = responses.size();
  std::vector<double> f1s, bleus;
  for (const auto& r : responses) {
    if (r.is_pass) ++rep.pass_count;
    if (r.is_unparseable) ++rep.unparseable_count;
    if (r.verdict.format_noncompliant) ++rep.format_noncompliant_count;
    if (r.f1) f1s.push_back(*r.f1);
    if (r.bleu4) bleus.push_back(*r.bleu4);
  }
  if (responses.empty()) return rep;
  rep.pp = static_cast<double>(rep.pass_count) / static_cast<double>(rep.query_count);
  try {
    rep.hr = hallucination_rate(responses, passes);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUndefinedMetric) throw;
  }
  if (!f1s.empty()) {
    auto a = aggregate(f1s, convention);
    rep.f1_mean = a.mean;
    rep.f1_std = a.std;
  }
  if (!bleus.empty()) {
    auto a = aggregate(bleus, convention);
    rep.bleu_mean = a.mean;
    rep.bleu_std = a.std;
  }
  return rep;
}

}  // namespace citeval::metrics
