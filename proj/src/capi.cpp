#include "citeval/citeval.h"

#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

#include "citeval/adversarial.hpp"
#include "citeval/corpus.hpp"
#include "citeval/harness.hpp"
#include "json.hpp"

struct citeval_corpus {
  citeval::Corpus corpus;
  std::vector<std::pair<std::string, std::size_t>> domains;
};

struct citeval_config {
  citeval::ExperimentConfig config;
  std::string last_get;
};

struct citeval_text {
  std::string data;
};

namespace {

thread_local std::string g_last_error;

citeval_status to_status(citeval::ErrorCode c) { return static_cast<citeval_status>(c); }

citeval_status fail(citeval_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

// Runs fn, mapping every exception onto a status.
template <typename F>
citeval_status guarded(F&& fn) {
  try {
    g_last_error.clear();
    fn();
    return CITEVAL_OK;
  } catch (const citeval::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CITEVAL_E_INTERNAL, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(CITEVAL_E_IO, e.what());
  } catch (const std::exception& e) {
    return fail(CITEVAL_E_INTERNAL, e.what());
  } catch (...) {
    return fail(CITEVAL_E_INTERNAL, "unknown exception");
  }
}

#define CITEVAL_REQUIRE(cond, what) \
  if (!(cond)) return fail(CITEVAL_E_INVALID_ARGUMENT, what)

citeval_text* make_text(std::string s) { return new citeval_text{std::move(s)}; }

void fill_summary(const citeval::RunManifest& m, citeval_run_summary* s) {
  if (s == nullptr) return;
  s->executed = m.executed;
  s->skipped = m.skipped;
  s->failed = m.failed;
  s->rows = m.rows;
}

}  // namespace

extern "C" {

const char* citeval_version(void) { return "1.0.0"; }

const char* citeval_status_name(citeval_status status) {
  if (status == CITEVAL_OK) return "ok";
  if (status == CITEVAL_E_INTERNAL) return "internal";
  if (status < CITEVAL_E_INVALID_ARGUMENT || status > CITEVAL_E_IO) return "unknown";
  static thread_local std::string name;
  name = std::string(citeval::error_code_name(static_cast<citeval::ErrorCode>(status)));
  return name.c_str();
}

const char* citeval_last_error(void) { return g_last_error.c_str(); }

citeval_status citeval_set_log_level(int level) {
  CITEVAL_REQUIRE(level >= 0 && level <= 6, "log level must be in [0, 6]");
  spdlog::set_level(static_cast<spdlog::level::level_enum>(level));
  g_last_error.clear();
  return CITEVAL_OK;
}

const char* citeval_text_data(const citeval_text* text) {
  return text == nullptr ? "" : text->data.c_str();
}
size_t citeval_text_size(const citeval_text* text) { return text == nullptr ? 0 : text->data.size(); }
void citeval_text_free(citeval_text* text) { delete text; }

citeval_status citeval_corpus_load(const char* path, int strict, const char* domains,
                                   citeval_corpus** out) {
  CITEVAL_REQUIRE(path != nullptr && out != nullptr, "path and out are required");
  *out = nullptr;
  return guarded([&] {
    citeval::LoadOptions lo;
    lo.strict = strict != 0;
    if (domains != nullptr) {
      citeval::ExperimentConfig scratch;
      scratch.set("domains", domains);
      lo.domains = scratch.domains;
    }
    auto handle = std::make_unique<citeval_corpus>();
    handle->corpus = citeval::load_corpus(path, lo);
    for (const auto& [d, n] : citeval::domain_counts(handle->corpus))
      handle->domains.emplace_back(d, n);
    *out = handle.release();
  });
}

void citeval_corpus_free(citeval_corpus* corpus) { delete corpus; }
size_t citeval_corpus_size(const citeval_corpus* c) { return c ? c->corpus.size() : 0; }
size_t citeval_corpus_raw_count(const citeval_corpus* c) { return c ? c->corpus.raw_count : 0; }
size_t citeval_corpus_dropped(const citeval_corpus* c) { return c ? c->corpus.dropped_count : 0; }
const char* citeval_corpus_hash(const citeval_corpus* c) {
  return c ? c->corpus.content_hash.c_str() : "";
}
size_t citeval_corpus_warning_count(const citeval_corpus* c) {
  return c ? c->corpus.warnings.size() : 0;
}
const char* citeval_corpus_warning(const citeval_corpus* c, size_t i) {
  return c && i < c->corpus.warnings.size() ? c->corpus.warnings[i].c_str() : nullptr;
}
size_t citeval_corpus_domain_count(const citeval_corpus* c) { return c ? c->domains.size() : 0; }
const char* citeval_corpus_domain_name(const citeval_corpus* c, size_t i) {
  return c && i < c->domains.size() ? c->domains[i].first.c_str() : nullptr;
}
size_t citeval_corpus_domain_size(const citeval_corpus* c, size_t i) {
  return c && i < c->domains.size() ? c->domains[i].second : 0;
}

void citeval_adversarial_options_init(citeval_adversarial_options* o) {
  if (o == nullptr) return;
  o->n = 200;
  o->field = "title";
  o->seed = 0;
  o->threshold = citeval::kConfusableThreshold;
  o->stratify_by_domain = 0;
  o->casefold = 0;
}

citeval_status citeval_adversarial_build(const citeval_corpus* corpus,
                                         const citeval_adversarial_options* options,
                                         const char* out_path, size_t* achievable) {
  CITEVAL_REQUIRE(corpus != nullptr && options != nullptr && out_path != nullptr,
                  "corpus, options and out_path are required");
  CITEVAL_REQUIRE(options->field != nullptr, "field is required");
  const auto field = citeval::parse_swap_field(options->field);
  CITEVAL_REQUIRE(field.has_value(), "field must be 'title' or 'abstract'");
  CITEVAL_REQUIRE(options->threshold >= 0.0 && options->threshold <= 1.0,
                  "threshold must be in [0, 1]");
  return guarded([&] {
    citeval::AdversarialOptions ao;
    ao.confusable.threshold = options->threshold;
    ao.confusable.casefold = options->casefold != 0;
    ao.stratify_by_domain = options->stratify_by_domain != 0;
    try {
      auto set = citeval::build_adversarial_set(corpus->corpus, options->n, *field, options->seed,
                                                ao);
      if (achievable) *achievable = set.size();
      std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
      if (!out) throw citeval::Error(citeval::ErrorCode::kIo, std::string("cannot write ") + out_path);
      out << citeval::adversarial_set_to_json(set) << "\n";
      if (!out.flush()) throw citeval::Error(citeval::ErrorCode::kIo, "write failed");
    } catch (const citeval::InsufficientRecordsError& e) {
      if (achievable) *achievable = e.achievable();
      throw;
    }
  });
}

citeval_status citeval_config_new(citeval_config** out) {
  CITEVAL_REQUIRE(out != nullptr, "out is required");
  return guarded([&] { *out = new citeval_config{}; });
}

void citeval_config_free(citeval_config* config) { delete config; }

citeval_status citeval_config_load_file(citeval_config* config, const char* path) {
  CITEVAL_REQUIRE(config != nullptr && path != nullptr, "config and path are required");
  return guarded([&] { config->config = citeval::load_config(path, config->config); });
}

citeval_status citeval_config_set(citeval_config* config, const char* key, const char* value) {
  CITEVAL_REQUIRE(config != nullptr && key != nullptr && value != nullptr,
                  "config, key and value are required");
  return guarded([&] { config->config.set(key, value); });
}

citeval_status citeval_config_get(citeval_config* config, const char* key, const char** value) {
  CITEVAL_REQUIRE(config != nullptr && key != nullptr && value != nullptr,
                  "config, key and value are required");
  return guarded([&] {
    const auto m = config->config.to_map();
    auto it = m.find(key);
    if (it == m.end())
      throw citeval::Error(citeval::ErrorCode::kConfigInvalid,
                           std::string("unknown config key '") + key + "'");
    config->last_get = it->second;
    *value = config->last_get.c_str();
  });
}

citeval_status citeval_config_validate(const citeval_config* config) {
  CITEVAL_REQUIRE(config != nullptr, "config is required");
  return guarded([&] { config->config.validate(); });
}

size_t citeval_config_key_count(void) { return citeval::ExperimentConfig::keys().size(); }

const char* citeval_config_key_name(size_t i) {
  const auto& k = citeval::ExperimentConfig::keys();
  return i < k.size() ? k[i].c_str() : nullptr;
}

citeval_status citeval_run(const citeval_config* config, citeval_run_summary* summary) {
  CITEVAL_REQUIRE(config != nullptr, "config is required");
  return guarded([&] { fill_summary(citeval::run(config->config), summary); });
}

citeval_status citeval_run_with_completer(const citeval_config* config,
                                          citeval_completion_fn completer, void* user,
                                          citeval_run_summary* summary) {
  CITEVAL_REQUIRE(config != nullptr && completer != nullptr, "config and completer are required");
  return guarded([&] {
    citeval::RunServices services;
    services.llm = std::make_shared<citeval::FunctionTransport>(
        [completer, user](const citeval::HttpRequest& req) -> citeval::HttpReply {
          auto body = nlohmann::json::parse(req.body, nullptr, false);
          std::string prompt;
          if (!body.is_discarded())
            prompt = body["messages"][0].value("content", std::string());
          const char* completion = nullptr;
          const int rc = completer(user, prompt.c_str(), &completion);
          if (rc != 0) return {rc, "", citeval::TransportFailure::kNone, ""};
          nlohmann::json reply = {
              {"choices",
               nlohmann::json::array(
                   {{{"message", {{"role", "assistant"},
                                  {"content", completion ? completion : ""}}}}})}};
          return {200, reply.dump(), citeval::TransportFailure::kNone, ""};
        });
    services.sleep = [](std::chrono::milliseconds) {};
    fill_summary(citeval::run(config->config, services), summary);
  });
}

citeval_status citeval_verify_run(const char* output_dir, size_t* rows) {
  CITEVAL_REQUIRE(output_dir != nullptr, "output_dir is required");
  return guarded([&] {
    auto m = citeval::verify_run(output_dir);
    if (rows) *rows = m.rows;
  });
}

citeval_status citeval_report(const char* results_dir, int pass_handling, int std_convention,
                              citeval_text** csv, citeval_text** text) {
  CITEVAL_REQUIRE(results_dir != nullptr, "results_dir is required");
  CITEVAL_REQUIRE(pass_handling == 0 || pass_handling == 1, "pass_handling must be 0 or 1");
  CITEVAL_REQUIRE(std_convention == 0 || std_convention == 1, "std_convention must be 0 or 1");
  if (csv) *csv = nullptr;
  if (text) *text = nullptr;
  return guarded([&] {
    citeval::ReportOptions o;
    o.pass_handling = pass_handling == 0 ? citeval::metrics::PassHandling::kExclude
                                         : citeval::metrics::PassHandling::kInclude;
    o.std_convention = std_convention == 0 ? citeval::metrics::StdConvention::kSample
                                           : citeval::metrics::StdConvention::kPopulation;
    const auto bundle = citeval::report(results_dir, o);
    if (csv) *csv = make_text(citeval::report_to_csv(bundle));
    if (text) *text = make_text(citeval::report_to_text(bundle));
  });
}

citeval_status citeval_cost_summary(const char* results_dir, const char* prices_path,
                                    citeval_text** out) {
  CITEVAL_REQUIRE(results_dir != nullptr && out != nullptr, "results_dir and out are required");
  *out = nullptr;
  return guarded([&] {
    std::map<std::string, double> prices;
    if (prices_path != nullptr) {
      std::ifstream in(prices_path, std::ios::binary);
      if (!in)
        throw citeval::Error(citeval::ErrorCode::kFileMissing,
                             std::string("cannot open price table ") + prices_path);
      std::stringstream ss;
      ss << in.rdbuf();
      prices = citeval::parse_price_table(ss.str());
    }
    *out = make_text(citeval::cost_summary_to_text(citeval::cost_summary(results_dir, prices)));
  });
}

}  // extern "C"
