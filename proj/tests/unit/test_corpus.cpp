#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include "citeval/corpus.hpp"
#include "citeval/error.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace citeval;
using nlohmann::json;
using testsupport::fixture;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

json sample_json() {
  std::ifstream in(fixture("sample_record.json"));
  return json::parse(in);
}

}  // namespace

TEST_CASE("the dataset sample record is accepted") {
  auto c = load_corpus(fixture("sample_record.json"));
  REQUIRE(c.size() == 1);
  const auto& r = c.records()[0];
  CHECK(r.category == "Computer Vision");
  CHECK(r.sentence_id == 32);
  CHECK(r.cited_title ==
        "Photo-Realistic Single Image Super-Resolution Using a Generative Adversarial Network");
  CHECK(r.cited_authors.size() == 11);
  CHECK(r.cited_authors.front() == "Christian Ledig");
  CHECK(c.raw_count == 1);
  CHECK(c.dropped_count == 0);
  CHECK(c.content_hash.size() == 64);
}

TEST_CASE("lenient mode drops invalid records and keeps the count") {
  LoadOptions lenient;
  lenient.strict = false;
  auto c = load_corpus(fixture("lenient_corpus.json"), lenient);
  CHECK(c.size() == 1);
  CHECK(c.dropped_count == 1);
  CHECK(c.size() + c.dropped_count == c.raw_count);
  // The unknown key is reported, not fatal.
  REQUIRE(c.warnings.size() == 1);
  CHECK(c.warnings[0].find("unexpected_key") != std::string::npos);

  CHECK(code_of([] { load_corpus(fixture("lenient_corpus.json")); }) ==
        ErrorCode::kSchemaViolation);
}

TEST_CASE("duplicate keys are a schema violation in strict mode") {
  json doc = json::array({sample_json()[0], sample_json()[0]});
  CHECK(code_of([&] { parse_corpus(doc.dump()); }) == ErrorCode::kSchemaViolation);

  LoadOptions lenient;
  lenient.strict = false;
  auto c = parse_corpus(doc.dump(), lenient);
  CHECK(c.size() == 1);
  CHECK(c.dropped_count == 1);

  std::vector<CitationRecord> recs(2, testsupport::make_record("Robotics", "l", 1, "T"));
  CHECK_THROWS_AS(Corpus{recs}, Error);
}

TEST_CASE("document level failures") {
  CHECK(code_of([] { load_corpus("/nonexistent/corpus.json"); }) == ErrorCode::kFileMissing);
  CHECK(code_of([] { parse_corpus("[{"); }) == ErrorCode::kMalformedDocument);
  CHECK(code_of([] { parse_corpus("{\"a\": 1}"); }) == ErrorCode::kMalformedDocument);
  CHECK(code_of([] { parse_corpus("[]"); }) == ErrorCode::kEmptyCorpus);

  auto bad = sample_json();
  bad[0]["sentence_id"] = -3;
  CHECK(code_of([&] { parse_corpus(bad.dump()); }) == ErrorCode::kSchemaViolation);
  bad = sample_json();
  bad[0].erase("cited_paper_title");
  CHECK(code_of([&] { parse_corpus(bad.dump()); }) == ErrorCode::kSchemaViolation);
  bad = sample_json();
  bad[0]["cited_paper_authors"] = "Christian Ledig";
  CHECK(code_of([&] { parse_corpus(bad.dump()); }) == ErrorCode::kSchemaViolation);
}

TEST_CASE("domain filter") {
  auto doc = sample_json();
  doc[0]["category"] = "Astrophysics";
  CHECK(code_of([&] { parse_corpus(doc.dump()); }) == ErrorCode::kSchemaViolation);
  LoadOptions any;
  any.domains.clear();
  CHECK(parse_corpus(doc.dump(), any).size() == 1);
}

TEST_CASE("validate_record reports the violated invariant") {
  auto r = testsupport::make_record("Robotics", "l", 1, "Title");
  CHECK(validate_record(r, default_domains()).empty());
  r.cited_authors.clear();
  CHECK(validate_record(r, default_domains()) == "cited_paper_authors is empty");
  r.cited_authors = {" "};
  CHECK(validate_record(r, default_domains()) == "cited_paper_authors has an empty name");
  CHECK(default_domains().size() == 12);
}

TEST_CASE("record keys round-trip through their string form") {
  RecordKey k{"http://arxiv.org/abs/2012.05435v2", 32};
  CHECK(k.str() == "http://arxiv.org/abs/2012.05435v2#32");
  CHECK(RecordKey::parse(k.str()) == k);
  CHECK_THROWS_AS(RecordKey::parse("no-id"), Error);
  CHECK_THROWS_AS(RecordKey::parse("x#12a"), Error);
  CHECK(RecordKey{"a", 2} < RecordKey{"a", 10});
}

TEST_CASE("split of a singleton shares the key") {
  auto c = load_corpus(fixture("sample_record.json"));
  auto s = split_corpus(c);
  REQUIRE(s.query_side.size() == 1);
  REQUIRE(s.metadata_side.size() == 1);
  CHECK(s.query_side[0].key == s.metadata_side[0].key);
  CHECK_THROWS_AS(split_corpus(Corpus{}), Error);
}

TEST_CASE("load, split and join is lossless") {
  auto c = load_corpus(fixture("small_corpus.json"));
  auto s = split_corpus(c);
  CHECK(s.query_side.size() == c.size());
  CHECK(s.metadata_side.size() == c.size());
  CHECK(join_split(s) == c.records());
  // Pass-through metadata survives too.
  CHECK(c.records()[0].extras.at("publication_date") == "\"2020-12-09\"");

  // corpus_to_json writes the input schema back.
  auto again = parse_corpus(corpus_to_json(c.records()));
  CHECK(again.records() == c.records());

  std::reverse(s.metadata_side.begin(), s.metadata_side.end());
  CHECK(join_split(s) == c.records());
  s.metadata_side.pop_back();
  CHECK_THROWS_AS(join_split(s), Error);
}

TEST_CASE("domain counts") {
  CHECK(domain_counts(Corpus{}).empty());
  Corpus three({testsupport::make_record("Computer Vision", "a", 1, "T1"),
                testsupport::make_record("Computer Vision", "a", 2, "T2"),
                testsupport::make_record("Natural Language Processing", "b", 1, "T3")});
  CHECK(domain_counts(three) ==
        std::map<std::string, std::size_t>{{"Computer Vision", 2},
                                           {"Natural Language Processing", 1}});

  // Over random subsets of a loaded corpus the counts add up to the size.
  auto c = load_corpus(fixture("small_corpus.json"));
  std::mt19937_64 rng(5);
  for (int round = 0; round < 50; ++round) {
    std::vector<CitationRecord> subset;
    for (const auto& r : c.records())
      if (rng() % 2) subset.push_back(r);
    Corpus sub(subset);
    auto counts = domain_counts(sub);
    std::size_t total = 0;
    for (const auto& [d, n] : counts) total += n;
    CHECK(total == sub.size());
  }
}
