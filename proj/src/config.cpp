#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "citeval/harness.hpp"
#include "citeval/text.hpp"

namespace citeval {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expected) {
  throw Error(ErrorCode::kConfigInvalid,
              "config key '" + key + "': '" + value + "' is not " + expected);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    bad(key, v, "a non-negative integer");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad(key, v, "an integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad(key, v, "a number");
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  const auto l = text::to_lower_ascii(v);
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  bad(key, v, "a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = text::trim(item); !t.empty()) out.push_back(t);
  return out;
}

std::string join_list(const std::vector<std::string>& v) { return text::join(v, ","); }

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

#define CITEVAL_STR(name, member)                                          \
  Field {                                                                  \
    name, [](const ExperimentConfig& c) { return c.member; },              \
        [](ExperimentConfig& c, const std::string&, const std::string& v) { \
          c.member = v;                                                    \
        }                                                                  \
  }
#define CITEVAL_UINT(name, member, type)                                                  \
  Field {                                                                                 \
    name, [](const ExperimentConfig& c) { return std::to_string(c.member); },             \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {             \
          c.member = static_cast<type>(parse_u64(k, v));                                  \
        }                                                                                 \
  }
#define CITEVAL_INT(name, member)                                                          \
  Field {                                                                                 \
    name, [](const ExperimentConfig& c) { return std::to_string(c.member); },             \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {             \
          c.member = parse_int(k, v);                                                     \
        }                                                                                 \
  }
#define CITEVAL_REAL(name, member)                                                          \
  Field {                                                                                 \
    name, [](const ExperimentConfig& c) { return text::format_double(c.member); },        \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {             \
          c.member = parse_real(k, v);                                                    \
        }                                                                                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      CITEVAL_STR("corpus", corpus),
      Field{"strict", [](const ExperimentConfig& c) { return std::string(c.strict ? "true" : "false"); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.strict = parse_bool(k, v);
            }},
      Field{"domains",
            [](const ExperimentConfig& c) {
              if (c.domains.empty()) return std::string("*");
              return join_list({c.domains.begin(), c.domains.end()});
            },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.domains.clear();
              if (text::trim(v) == "*") return;
              for (auto& d : split_list(v)) c.domains.insert(d);
            }},
      Field{"protocols",
            [](const ExperimentConfig& c) {
              std::vector<std::string> names;
              for (auto p : c.protocols) names.emplace_back(protocol_name(p));
              return join_list(names);
            },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.protocols.clear();
              for (const auto& name : split_list(v)) {
                auto p = parse_protocol(name);
                if (!p) bad(k, name, "one of DirectAuthor, DirectAuthorMeta, IndirectTitle, SID");
                if (std::find(c.protocols.begin(), c.protocols.end(), *p) != c.protocols.end())
                  bad(k, name, "listed once");
                c.protocols.push_back(*p);
              }
            }},
      Field{"retrieval_mode",
            [](const ExperimentConfig& c) { return std::string(retrieval_mode_name(c.retrieval_mode)); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              auto m = parse_retrieval_mode(v);
              if (!m) bad(k, v, "one of None, Naive, Advanced");
              c.retrieval_mode = *m;
            }},
      CITEVAL_STR("model_name", generation.model_name),
      CITEVAL_STR("endpoint_url", generation.endpoint_url),
      CITEVAL_STR("api_key_env", generation.api_key_env),
      CITEVAL_REAL("temperature", generation.temperature),
      CITEVAL_INT("max_tokens", generation.max_tokens),
      CITEVAL_REAL("top_p", generation.top_p),
      CITEVAL_UINT("concurrency", concurrency, std::size_t),
      CITEVAL_UINT("sample_limit", sample_limit, std::size_t),
      CITEVAL_UINT("seed", seed, std::uint64_t),
      CITEVAL_STR("output_dir", output_dir),
      CITEVAL_STR("reranker_url", reranker_url),
      CITEVAL_STR("embedding_url", embedding_url),
      CITEVAL_STR("embedding_model", embedding_model),
      CITEVAL_STR("embedding_api_key_env", embedding_api_key_env),
      CITEVAL_UINT("embedding_dim", embedding_dim, std::size_t),
      CITEVAL_STR("embedding_cache_dir", embedding_cache_dir),
      CITEVAL_UINT("shortlist_n", shortlist_n, std::size_t),
      CITEVAL_UINT("top_k", top_k, std::size_t),
      CITEVAL_UINT("context_budget", context_budget, std::size_t),
      CITEVAL_STR("judge", judge),
      Field{"pass_handling",
            [](const ExperimentConfig& c) {
              return std::string(c.pass_handling == metrics::PassHandling::kExclude ? "exclude"
                                                                                    : "include");
            },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              const auto l = text::to_lower_ascii(v);
              if (l == "exclude") c.pass_handling = metrics::PassHandling::kExclude;
              else if (l == "include") c.pass_handling = metrics::PassHandling::kInclude;
              else bad(k, v, "exclude or include");
            }},
      Field{"std_convention",
            [](const ExperimentConfig& c) {
              return std::string(c.std_convention == metrics::StdConvention::kSample
                                     ? "sample"
                                     : "population");
            },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              const auto l = text::to_lower_ascii(v);
              if (l == "sample") c.std_convention = metrics::StdConvention::kSample;
              else if (l == "population") c.std_convention = metrics::StdConvention::kPopulation;
              else bad(k, v, "sample or population");
            }},
      CITEVAL_STR("template_dir", template_dir),
      CITEVAL_INT("retry_max_attempts", retry_max_attempts),
      CITEVAL_INT("retry_base_delay_ms", retry_base_delay_ms),
      CITEVAL_INT("request_timeout_s", request_timeout_s),
  };
  return kFields;
}

#undef CITEVAL_STR
#undef CITEVAL_UINT
#undef CITEVAL_INT
#undef CITEVAL_REAL

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

bool looks_like_secret(const std::string& key) {
  const auto l = text::to_lower_ascii(key);
  if (l.ends_with("_env")) return false;
  return l.find("api_key") != std::string::npos || l.find("apikey") != std::string::npos ||
         l.find("secret") != std::string::npos || l.find("token") != std::string::npos ||
         l.find("password") != std::string::npos;
}

}  // namespace

std::string_view protocol_name(Protocol p) noexcept {
  switch (p) {
    case Protocol::kDirectAuthor: return "DirectAuthor";
    case Protocol::kDirectAuthorMeta: return "DirectAuthorMeta";
    case Protocol::kIndirectTitle: return "IndirectTitle";
    case Protocol::kSid: return "SID";
  }
  return "?";
}

std::optional<Protocol> parse_protocol(std::string_view name) noexcept {
  for (auto p : {Protocol::kDirectAuthor, Protocol::kDirectAuthorMeta, Protocol::kIndirectTitle,
                 Protocol::kSid})
    if (text::to_lower_ascii(name) == text::to_lower_ascii(protocol_name(p))) return p;
  return std::nullopt;
}

std::string_view retrieval_mode_name(RetrievalMode m) noexcept {
  switch (m) {
    case RetrievalMode::kNone: return "None";
    case RetrievalMode::kNaive: return "Naive";
    case RetrievalMode::kAdvanced: return "Advanced";
  }
  return "?";
}

std::optional<RetrievalMode> parse_retrieval_mode(std::string_view name) noexcept {
  for (auto m : {RetrievalMode::kNone, RetrievalMode::kNaive, RetrievalMode::kAdvanced})
    if (text::to_lower_ascii(name) == text::to_lower_ascii(retrieval_mode_name(m))) return m;
  return std::nullopt;
}

std::size_t ExperimentConfig::effective_top_k() const {
  if (top_k != 0) return top_k;
  return retrieval_mode == RetrievalMode::kAdvanced ? kAdvancedTopK : kNaiveTopK;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfigInvalid, m); };
  if (corpus.empty()) fail("corpus is not set");
  if (output_dir.empty()) fail("output_dir is not set");
  if (protocols.empty()) fail("no protocols selected");
  if (generation.endpoint_url.empty()) fail("endpoint_url is not set");
  if (generation.model_name.empty()) fail("model_name is not set");
  generation.validate();
  if (concurrency == 0) fail("concurrency must be >= 1");
  if (retry_max_attempts < 1) fail("retry_max_attempts must be >= 1");
  if (retry_base_delay_ms < 0) fail("retry_base_delay_ms must be >= 0");
  if (request_timeout_s < 1) fail("request_timeout_s must be >= 1");
  if (judge != "exact") fail("judge must be 'exact'");
  if (retrieval_mode != RetrievalMode::kNone) {
    if (embedding_dim == 0) fail("embedding_dim must be positive");
    if (shortlist_n == 0) fail("shortlist_n must be positive");
    if (context_budget == 0) fail("context_budget must be positive");
    if (!embedding_url.empty() && embedding_model.empty())
      fail("embedding_model is required with embedding_url");
  }
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(*this);
  return out;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (f == nullptr) {
    if (looks_like_secret(key))
      throw Error(ErrorCode::kConfigInvalid,
                  "config key '" + key +
                      "' looks like a credential; keys are read from the environment only "
                      "(set api_key_env to the variable name)");
    throw Error(ErrorCode::kConfigInvalid, "unknown config key '" + key + "'");
  }
  f->set(*this, key, text::trim(value));
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> kKeys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.emplace_back(f.key);
    return k;
  }();
  return kKeys;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = text::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kConfigInvalid,
                  "config line " + std::to_string(lineno) + ": expected key = value");
    base.set(text::trim(t.substr(0, eq)), t.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileMissing, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace citeval
