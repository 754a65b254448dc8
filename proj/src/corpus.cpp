#include "citeval/corpus.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include "json.hpp"
#include <sstream>

#include "citeval/error.hpp"
#include "citeval/text.hpp"

namespace citeval {

using nlohmann::json;

namespace {

constexpr const char* kRequiredKeys[] = {
    "category",        "link",           "paper_title",
    "sentence_id",     "sentence",       "citation_text",
    "cited_paper_id",  "cited_paper_title", "cited_paper_abstract",
    "cited_paper_authors"};

constexpr const char* kPassThroughKeys[] = {
    "surrounding_sentences", "cross_domain_markers", "publication_date",
    "context",
    // Written by the adversarial generator.
    "swapped_field", "substitute_source_key", "similarity"};

bool is_required(const std::string& k) {
  for (auto* r : kRequiredKeys)
    if (k == r) return true;
  return false;
}

bool is_pass_through(const std::string& k) {
  for (auto* r : kPassThroughKeys)
    if (k == r) return true;
  return false;
}

// Converts one JSON object; returns an error message on shape problems.
std::string convert(const json& obj, CitationRecord& out,
                    std::set<std::string>& unknown_keys) {
  if (!obj.is_object()) return "record is not an object";
  for (auto* k : kRequiredKeys)
    if (!obj.contains(k)) return std::string("missing key '") + k + "'";

  auto str_field = [&](const char* k, std::string& dst) -> std::string {
    const auto& v = obj.at(k);
    if (!v.is_string()) return std::string("key '") + k + "' is not a string";
    dst = v.get<std::string>();
    return {};
  };
  for (auto [k, dst] : {std::pair{"category", &out.category},
                        std::pair{"link", &out.source_link},
                        std::pair{"paper_title", &out.source_title},
                        std::pair{"sentence", &out.sentence},
                        std::pair{"citation_text", &out.citation_text},
                        std::pair{"cited_paper_id", &out.cited_paper_id},
                        std::pair{"cited_paper_title", &out.cited_title},
                        std::pair{"cited_paper_abstract", &out.cited_abstract}}) {
    if (auto err = str_field(k, *dst); !err.empty()) return err;
  }

  const auto& sid = obj.at("sentence_id");
  if (sid.is_number_unsigned()) {
    out.sentence_id = sid.get<std::uint64_t>();
  } else if (sid.is_number_integer() && sid.get<std::int64_t>() >= 0) {
    out.sentence_id = static_cast<std::uint64_t>(sid.get<std::int64_t>());
  } else {
    return "sentence_id is not a non-negative integer";
  }

  const auto& authors = obj.at("cited_paper_authors");
  if (!authors.is_array()) return "cited_paper_authors is not an array";
  for (const auto& a : authors) {
    if (!a.is_string()) return "cited_paper_authors has a non-string element";
    out.cited_authors.push_back(a.get<std::string>());
  }

  for (const auto& [k, v] : obj.items()) {
    if (is_required(k)) continue;
    if (is_pass_through(k)) {
      out.extras[k] = v.dump();
    } else {
      unknown_keys.insert(k);
    }
  }
  return {};
}

}  // namespace

std::string RecordKey::str() const {
  return source_link + "#" + std::to_string(sentence_id);
}

RecordKey RecordKey::parse(const std::string& s) {
  auto pos = s.rfind('#');
  if (pos == std::string::npos || pos + 1 == s.size())
    throw Error(ErrorCode::kInvalidArgument, "bad record key: " + s);
  RecordKey k;
  k.source_link = s.substr(0, pos);
  try {
    std::size_t used = 0;
    k.sentence_id = std::stoull(s.substr(pos + 1), &used);
    if (used != s.size() - pos - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "bad record key: " + s);
  }
  return k;
}

const std::set<std::string>& default_domains() {
  static const std::set<std::string> kDomains = {
      "Artificial Intelligence",
      "Computer Vision",
      "Natural Language Processing",
      "Information Retrieval",
      "Databases",
      "Graphics",
      "Human-Computer Interaction",
      "Biomolecules",
      "Neurons and Cognition",
      "Cryptography",
      "Robotics",
      "Quantum Computing"};
  return kDomains;
}

Corpus::Corpus(std::vector<CitationRecord> records)
    : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    auto [it, inserted] = by_key_.emplace(records_[i].key(), i);
    if (!inserted)
      throw Error(ErrorCode::kSchemaViolation,
                  "duplicate record key " + records_[i].key().str());
    domain_index_[records_[i].category].push_back(i);
  }
}

std::size_t Corpus::find(const RecordKey& key) const {
  auto it = by_key_.find(key);
  return it == by_key_.end() ? npos : it->second;
}

std::string validate_record(const CitationRecord& r,
                            const std::set<std::string>& domains) {
  if (text::is_blank(r.sentence)) return "sentence is empty";
  if (text::is_blank(r.cited_title)) return "cited_paper_title is empty";
  if (r.cited_authors.empty()) return "cited_paper_authors is empty";
  for (const auto& a : r.cited_authors)
    if (text::is_blank(a)) return "cited_paper_authors has an empty name";
  if (!domains.empty() && !domains.contains(r.category))
    return "category '" + r.category + "' is not a configured domain";
  return {};
}

Corpus parse_corpus(const std::string& document, const LoadOptions& options) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedDocument, e.what());
  }
  if (!doc.is_array())
    throw Error(ErrorCode::kMalformedDocument,
                "corpus document must be a top-level array");

  std::vector<CitationRecord> accepted;
  std::set<RecordKey> seen;
  std::set<std::string> unknown_keys;
  std::size_t dropped = 0;

  for (std::size_t i = 0; i < doc.size(); ++i) {
    CitationRecord rec;
    std::string err = convert(doc[i], rec, unknown_keys);
    if (err.empty()) err = validate_record(rec, options.domains);
    if (err.empty() && seen.contains(rec.key()))
      err = "duplicate (link, sentence_id) " + rec.key().str();
    if (!err.empty()) {
      if (options.strict)
        throw Error(ErrorCode::kSchemaViolation,
                    "record " + std::to_string(i) + ": " + err);
      spdlog::debug("dropping record {}: {}", i, err);
      ++dropped;
      continue;
    }
    seen.insert(rec.key());
    accepted.push_back(std::move(rec));
  }

  if (accepted.empty())
    throw Error(ErrorCode::kEmptyCorpus,
                "no records left after validation (" + std::to_string(dropped) +
                    " dropped)");

  Corpus corpus(std::move(accepted));
  corpus.raw_count = doc.size();
  corpus.dropped_count = dropped;
  for (const auto& k : unknown_keys) {
    corpus.warnings.push_back("ignoring unknown key '" + k + "'");
    spdlog::warn("corpus: ignoring unknown key '{}'", k);
  }
  corpus.content_hash = text::sha256_hex(document);
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path,
                   const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileMissing, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str(), options);
}

CorpusSplit split_corpus(const Corpus& corpus) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "empty corpus");
  CorpusSplit split;
  split.query_side.reserve(corpus.size());
  split.metadata_side.reserve(corpus.size());
  for (const auto& r : corpus.records()) {
    split.query_side.push_back({r.key(), r.category, r.sentence, r.source_title});
    split.metadata_side.push_back({r.key(), r.cited_paper_id, r.citation_text,
                                   r.cited_title, r.cited_abstract,
                                   r.cited_authors, r.extras});
  }
  return split;
}

std::vector<CitationRecord> join_split(const CorpusSplit& split) {
  std::map<RecordKey, const MetadataView*> meta;
  for (const auto& m : split.metadata_side) meta.emplace(m.key, &m);
  if (meta.size() != split.query_side.size())
    throw Error(ErrorCode::kSchemaViolation, "split views differ in size");

  std::vector<CitationRecord> out;
  out.reserve(split.query_side.size());
  for (const auto& q : split.query_side) {
    auto it = meta.find(q.key);
    if (it == meta.end())
      throw Error(ErrorCode::kSchemaViolation,
                  "query key without metadata: " + q.key.str());
    const MetadataView& m = *it->second;
    CitationRecord r;
    r.category = q.category;
    r.source_link = q.key.source_link;
    r.sentence_id = q.key.sentence_id;
    r.source_title = q.source_title;
    r.sentence = q.sentence;
    r.citation_text = m.citation_text;
    r.cited_paper_id = m.cited_paper_id;
    r.cited_title = m.cited_title;
    r.cited_abstract = m.cited_abstract;
    r.cited_authors = m.cited_authors;
    r.extras = m.extras;
    out.push_back(std::move(r));
  }
  return out;
}

std::map<std::string, std::size_t> domain_counts(const Corpus& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& [domain, idx] : corpus.domain_index())
    counts[domain] = idx.size();
  return counts;
}

std::string corpus_to_json(const std::vector<CitationRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) {
    json o;
    o["category"] = r.category;
    o["link"] = r.source_link;
    o["paper_title"] = r.source_title;
    o["sentence_id"] = r.sentence_id;
    o["sentence"] = r.sentence;
    o["citation_text"] = r.citation_text;
    o["cited_paper_id"] = r.cited_paper_id;
    o["cited_paper_title"] = r.cited_title;
    o["cited_paper_abstract"] = r.cited_abstract;
    o["cited_paper_authors"] = r.cited_authors;
    for (const auto& [k, v] : r.extras) o[k] = json::parse(v);
    arr.push_back(std::move(o));
  }
  return arr.dump(2);
}

}  // namespace citeval
