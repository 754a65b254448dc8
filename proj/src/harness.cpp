#include <fcntl.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <ctime>
#include <fstream>
#include <sstream>

#include "citeval/harness.hpp"
#include "citeval/parallel.hpp"
#include "citeval/sid.hpp"
#include "citeval/text.hpp"
#include "json.hpp"

namespace citeval {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Keys that may change between invocations on the same output directory.
const std::set<std::string>& resume_neutral_keys() {
  static const std::set<std::string> kKeys = {
      "concurrency",    "output_dir",          "retry_max_attempts", "retry_base_delay_ms",
      "request_timeout_s", "embedding_cache_dir", "corpus",          "pass_handling",
      "std_convention", "api_key_env",         "embedding_api_key_env"};
  return kKeys;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& p, const std::string& data) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << data;
    if (!out.flush()) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::string chain_step(const std::string& head, const std::string& line) {
  return text::sha256_hex(head + "\n" + line);
}

json manifest_body(const RunManifest& m) {
  return json{{"format", 1},
              {"config", m.config},
              {"template_hashes", m.template_hashes},
              {"template_set_hash", m.template_set_hash},
              {"corpus_hash", m.corpus_hash},
              {"checkpoint_hash", m.checkpoint_hash},
              {"started_at", m.started_at},
              {"finished_at", m.finished_at},
              {"completed", m.completed},
              {"rows", m.rows},
              {"results_bytes", m.results_bytes},
              {"chain_head", m.chain_head}};
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  json doc = manifest_body(m);
  doc["digest"] = text::sha256_hex(doc.dump());
  write_file_atomic(dir / kManifestFile, doc.dump(2) + "\n");
}

[[noreturn]] void tampered(const fs::path& dir, const std::string& why) {
  throw Error(ErrorCode::kTampered, "run in " + dir.string() + " failed verification: " + why);
}

RunManifest read_manifest(const fs::path& dir) {
  auto doc = json::parse(read_file(dir / kManifestFile), nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("digest"))
    tampered(dir, "manifest is not valid JSON");
  const std::string digest = doc.value("digest", "");
  doc.erase("digest");
  if (text::sha256_hex(doc.dump()) != digest) tampered(dir, "manifest digest mismatch");
  RunManifest m;
  try {
    m.config = doc.at("config").get<std::map<std::string, std::string>>();
    m.template_hashes = doc.at("template_hashes").get<std::map<std::string, std::string>>();
    m.template_set_hash = doc.at("template_set_hash").get<std::string>();
    m.corpus_hash = doc.at("corpus_hash").get<std::string>();
    m.checkpoint_hash = doc.at("checkpoint_hash").get<std::string>();
    m.started_at = doc.at("started_at").get<std::string>();
    m.finished_at = doc.at("finished_at").get<std::string>();
    m.completed = doc.at("completed").get<std::map<std::string, std::string>>();
    m.rows = doc.at("rows").get<std::size_t>();
    m.results_bytes = doc.at("results_bytes").get<std::uint64_t>();
    m.chain_head = doc.at("chain_head").get<std::string>();
  } catch (const json::exception& e) {
    tampered(dir, std::string("manifest field missing: ") + e.what());
  }
  return m;
}

std::string cell_key(std::string_view protocol, const std::string& record_key) {
  return std::string(protocol) + "|" + record_key;
}

// Committed rows of a verified run.
std::vector<std::string> committed_lines(const fs::path& dir, const RunManifest& m) {
  const fs::path results = dir / kResultsFile;
  std::string data;
  if (fs::exists(results)) data = read_file(results);
  if (data.size() < m.results_bytes) tampered(dir, "results file is shorter than committed");
  data.resize(m.results_bytes);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < data.size()) {
    auto nl = data.find('\n', start);
    if (nl == std::string::npos) tampered(dir, "committed region ends mid-row");
    lines.push_back(data.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

void check_rows(const fs::path& dir, const RunManifest& m, const std::vector<std::string>& lines) {
  if (lines.size() != m.rows) tampered(dir, "row count differs from manifest");
  if (m.completed.size() != m.rows) tampered(dir, "completion map size differs from row count");
  std::string head;
  std::set<std::string> seen;
  for (const auto& line : lines) {
    head = chain_step(head, line);
    auto row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.contains("protocol") || !row.contains("record_key"))
      tampered(dir, "unreadable row");
    const auto key =
        cell_key(row["protocol"].get<std::string>(), row["record_key"].get<std::string>());
    if (!seen.insert(key).second) tampered(dir, "duplicate row for " + key);
    auto it = m.completed.find(key);
    if (it == m.completed.end()) tampered(dir, "row " + key + " missing from completion map");
    if (it->second != text::sha256_hex(line)) tampered(dir, "row " + key + " was modified");
  }
  if (head != m.chain_head) tampered(dir, "hash chain mismatch");
}

class LockFile {
 public:
  explicit LockFile(fs::path path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw Error(ErrorCode::kLocked, "output directory is in use (lock file " + path_.string() +
                                          " exists; remove it if no run is active)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::write(fd_, pid.data(), pid.size()) < 0) spdlog::warn("could not write lock file pid");
  }
  ~LockFile() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::vector<std::size_t> sample_records(const Corpus& corpus, std::size_t limit,
                                        std::uint64_t seed) {
  std::vector<std::size_t> picked;
  text::Rng rng(seed);
  for (const auto& [domain, idx] : corpus.domain_index()) {
    std::vector<std::size_t> bucket = idx;
    if (limit != 0 && bucket.size() > limit) {
      rng.shuffle(bucket);
      bucket.resize(limit);
    }
    picked.insert(picked.end(), bucket.begin(), bucket.end());
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

TaskKind task_for(Protocol p) {
  switch (p) {
    case Protocol::kDirectAuthor: return TaskKind::kDirectAuthor;
    case Protocol::kDirectAuthorMeta: return TaskKind::kDirectAuthorMeta;
    case Protocol::kIndirectTitle: return TaskKind::kIndirectTitle;
    case Protocol::kSid: return TaskKind::kSidStage2;
  }
  return TaskKind::kIndirectTitle;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

struct Cell {
  Protocol protocol;
  std::size_t record;
};

struct CellResult {
  std::optional<std::string> row;
  std::optional<ErrorCode> error;
  std::string message;
};

class Runner {
 public:
  Runner(const ExperimentConfig& config, const RunServices& services, const Corpus& corpus,
         const PromptTemplates& templates)
      : config_(config), corpus_(corpus), templates_(templates) {
    RetryPolicy policy;
    policy.max_attempts = config.retry_max_attempts;
    policy.base_delay = std::chrono::milliseconds(config.retry_base_delay_ms);
    policy.seed = config.seed;
    policy.sleep = services.sleep;
    auto llm = services.llm ? services.llm
                            : std::make_shared<HttpTransport>(
                                  std::chrono::seconds(config.request_timeout_s));
    gateway_ = std::make_unique<Gateway>(std::move(llm), std::move(policy));

    if (config.retrieval_mode == RetrievalMode::kNone) return;
    auto aux = services.aux ? services.aux
                            : std::make_shared<HttpTransport>(
                                  std::chrono::seconds(config.request_timeout_s));
    embedder_ = services.embedder;
    if (!embedder_) {
      if (config.embedding_url.empty())
        embedder_ = std::make_shared<HashEmbedder>(config.embedding_dim, config.seed);
      else
        embedder_ = std::make_shared<HttpEmbedder>(aux, config.embedding_url,
                                                   config.embedding_model,
                                                   config.embedding_api_key_env);
    }
    if (!config.embedding_cache_dir.empty())
      embedder_ = std::make_shared<CachingEmbedder>(embedder_, config.embedding_cache_dir);
    if (config.retrieval_mode == RetrievalMode::kAdvanced) {
      reranker_ = services.reranker;
      if (!reranker_) {
        if (config.reranker_url.empty())
          throw Error(ErrorCode::kConfigInvalid, "Advanced retrieval requires reranker_url");
        reranker_ = std::make_shared<HttpReranker>(aux, config.reranker_url);
      }
      try {
        checkpoint_hash_ = reranker_->checkpoint_hash();
      } catch (const Error& e) {
        throw Error(ErrorCode::kRerankerUnavailable,
                    std::string("reranker health check failed: ") + e.what());
      }
    }
    const auto split = split_corpus(corpus);
    index_ = build_index(split.metadata_side, *embedder_);
    if (index_.nondeterministic_embedder)
      spdlog::warn("embedder returned different vectors for identical texts");
  }

  const std::string& checkpoint_hash() const { return checkpoint_hash_; }

  CellResult execute(const Cell& cell) const {
    CellResult out;
    try {
      out.row = row_for(cell);
    } catch (const Error& e) {
      out.error = e.code();
      out.message = e.what();
    } catch (const std::exception& e) {
      out.error = ErrorCode::kIo;
      out.message = e.what();
    }
    return out;
  }

 private:
  std::string context_for(const CitationRecord& r, bool author_task) const {
    const std::string& query = author_task ? r.cited_title : r.sentence;
    std::vector<RankedHit> hits;
    if (config_.retrieval_mode == RetrievalMode::kNaive) {
      hits = retrieve_naive(query, index_, *embedder_,
                            std::max(config_.shortlist_n, config_.effective_top_k()),
                            config_.effective_top_k());
    } else {
      hits = retrieve_advanced(query, index_, *embedder_, *reranker_, config_.effective_top_k(),
                               config_.shortlist_n);
    }
    return format_context(hits, corpus_, config_.context_budget);
  }

  std::string row_for(const Cell& cell) const {
    const CitationRecord& rec = corpus_.records()[cell.record];
    const bool rag = config_.retrieval_mode != RetrievalMode::kNone;
    const TaskKind kind = task_for(cell.protocol);
    const bool author = is_author_task(kind);

    std::function<std::string(const std::string&)> decorate;
    if (rag) {
      const std::string context = context_for(rec, author);
      decorate = [this, context](const std::string& prompt) {
        return wrap_with_context(context, prompt, templates_);
      };
    }

    ModelVerdict verdict;
    std::string template_hash;
    bool escalated = false;
    if (cell.protocol == Protocol::kSid) {
      auto outcome = run_sid(rec, *gateway_, config_.generation, metrics::title_exact_match,
                             templates_, decorate);
      verdict = std::move(outcome.final_verdict);
      template_hash = outcome.template_hash;
      escalated = outcome.escalated;
    } else {
      const AttributionTask task = build_task(kind, rec, templates_);
      const std::string prompt = decorate ? decorate(task.rendered_prompt) : task.rendered_prompt;
      const GatewayResult res = gateway_->complete(prompt, config_.generation);
      verdict = parse_reply(res.completion_text, kind);
      verdict.prompt_tokens = res.prompt_tokens;
      verdict.completion_tokens = res.completion_tokens;
      verdict.usage_estimated = res.usage_estimated;
      verdict.latency_ms = res.latency_ms;
      template_hash = task.template_hash;
    }
    if (rag)
      template_hash =
          text::sha256_hex(template_hash + ":" + templates_.hash(TemplateId::kRagContext));

    const auto scored = metrics::score_response(rec, kind, verdict);
    json row = {
        {"record_key", scored.record_key.str()},
        {"protocol", std::string(protocol_name(cell.protocol))},
        {"retrieval_mode", std::string(retrieval_mode_name(config_.retrieval_mode))},
        {"model_name", config_.generation.model_name},
        {"domain", scored.domain},
        {"verdict_kind", std::string(verdict_kind_name(verdict.kind))},
        {"raw_text", verdict.raw_text},
        {"exact_match", scored.exact_match},
        {"word_mismatch", optional_number(scored.word_mismatch)},
        {"bleu4", optional_number(scored.bleu4)},
        {"f1", optional_number(scored.f1)},
        {"is_pass", scored.is_pass},
        {"is_unparseable", scored.is_unparseable},
        {"format_noncompliant", verdict.format_noncompliant},
        {"template_hash", template_hash},
        {"prompt_tokens", verdict.prompt_tokens},
        {"completion_tokens", verdict.completion_tokens},
        {"usage_estimated", verdict.usage_estimated},
        {"escalated", escalated},
    };
    return row.dump();
  }

  const ExperimentConfig& config_;
  const Corpus& corpus_;
  const PromptTemplates& templates_;
  std::unique_ptr<Gateway> gateway_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<const Reranker> reranker_;
  RetrievalIndex index_;
  std::string checkpoint_hash_;
};

bool aborts_run(ErrorCode c) { return c != ErrorCode::kMalformedResponse; }

}  // namespace

RunManifest verify_run(const fs::path& output_dir) {
  if (!fs::exists(output_dir / kManifestFile)) {
    if (fs::exists(output_dir / kResultsFile)) tampered(output_dir, "results without manifest");
    throw Error(ErrorCode::kNoResults, "no run manifest in " + output_dir.string());
  }
  RunManifest m = read_manifest(output_dir);
  check_rows(output_dir, m, committed_lines(output_dir, m));
  return m;
}

std::vector<std::string> committed_rows(const fs::path& output_dir) {
  RunManifest m = verify_run(output_dir);
  return committed_lines(output_dir, m);
}

RunManifest run(const ExperimentConfig& config, const RunServices& services) {
  config.validate();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  LockFile lock(dir / kLockFile);

  LoadOptions lo;
  lo.strict = config.strict;
  lo.domains = config.domains;
  const Corpus corpus = load_corpus(config.corpus, lo);
  for (const auto& w : corpus.warnings) spdlog::warn("{}", w);

  const PromptTemplates templates = config.template_dir.empty()
                                        ? PromptTemplates::builtin()
                                        : PromptTemplates::from_directory(config.template_dir);

  RunManifest manifest;
  const bool resuming = fs::exists(dir / kManifestFile);
  if (resuming) {
    manifest = read_manifest(dir);
    check_rows(dir, manifest, committed_lines(dir, manifest));
    const auto current = config.to_map();
    for (const auto& [k, v] : current) {
      if (resume_neutral_keys().contains(k)) continue;
      auto it = manifest.config.find(k);
      if (it == manifest.config.end() || it->second != v)
        throw Error(ErrorCode::kConfigInvalid,
                    "output directory holds a run with a different '" + k +
                        "'; use a fresh output_dir");
    }
    if (manifest.corpus_hash != corpus.content_hash)
      throw Error(ErrorCode::kConfigInvalid, "corpus content changed since the run started");
    if (manifest.template_set_hash != templates.set_hash())
      throw Error(ErrorCode::kConfigInvalid, "prompt templates changed since the run started");
    // Drop rows written after the last manifest commit.
    const fs::path results = dir / kResultsFile;
    if (fs::exists(results) && fs::file_size(results) > manifest.results_bytes) {
      spdlog::warn("discarding {} uncommitted bytes of {}",
                   fs::file_size(results) - manifest.results_bytes, results.string());
      fs::resize_file(results, manifest.results_bytes);
    }
  } else {
    if (fs::exists(dir / kResultsFile))
      tampered(dir, "results file present without a manifest");
    manifest.started_at = utc_now();
    manifest.corpus_hash = corpus.content_hash;
    manifest.template_set_hash = templates.set_hash();
    for (auto id : {TemplateId::kDirectAuthor, TemplateId::kDirectAuthorMeta, TemplateId::kIndirect,
                    TemplateId::kSidStage2, TemplateId::kRagContext})
      manifest.template_hashes[std::string(PromptTemplates::file_name(id))] = templates.hash(id);
  }
  manifest.config = config.to_map();

  Runner runner(config, services, corpus, templates);
  if (config.retrieval_mode == RetrievalMode::kAdvanced) {
    if (resuming && manifest.checkpoint_hash != runner.checkpoint_hash())
      throw Error(ErrorCode::kConfigInvalid, "reranker checkpoint changed since the run started");
    manifest.checkpoint_hash = runner.checkpoint_hash();
  }

  std::vector<Cell> pending;
  const auto records = sample_records(corpus, config.sample_limit, config.seed);
  for (Protocol p : config.protocols)
    for (std::size_t r : records) {
      if (manifest.completed.contains(cell_key(protocol_name(p), corpus.records()[r].key().str())))
        ++manifest.skipped;
      else
        pending.push_back({p, r});
    }
  spdlog::info("{} cells pending, {} already complete", pending.size(), manifest.skipped);
  if (!resuming) write_manifest(dir, manifest);

  std::ofstream results(dir / kResultsFile, std::ios::binary | std::ios::app);
  if (!results) throw Error(ErrorCode::kIo, "cannot open results file in " + dir.string());

  const std::size_t chunk = std::max<std::size_t>(config.concurrency * 8, 1);
  for (std::size_t begin = 0; begin < pending.size(); begin += chunk) {
    const std::size_t end = std::min(pending.size(), begin + chunk);
    std::vector<CellResult> out(end - begin);
    parallel_for_bounded(out.size(), config.concurrency,
                         [&](std::size_t i) { out[i] = runner.execute(pending[begin + i]); });

    std::optional<Error> fatal;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Cell& cell = pending[begin + i];
      const std::string key = cell_key(protocol_name(cell.protocol),
                                       corpus.records()[cell.record].key().str());
      if (!out[i].row) {
        ++manifest.failed;
        spdlog::warn("cell {} failed: {}", key, out[i].message);
        if (aborts_run(*out[i].error) && !fatal) fatal.emplace(*out[i].error, out[i].message);
        continue;
      }
      const std::string& line = *out[i].row;
      results << line << '\n';
      manifest.chain_head = chain_step(manifest.chain_head, line);
      manifest.completed[key] = text::sha256_hex(line);
      manifest.results_bytes += line.size() + 1;
      ++manifest.rows;
      ++manifest.executed;
    }
    results.flush();
    if (!results) throw Error(ErrorCode::kIo, "write to results file failed");
    write_manifest(dir, manifest);
    if (fatal) throw Error(fatal->code(), std::string("run stopped, partial results kept: ") +
                                              fatal->what());
  }
  manifest.finished_at = utc_now();
  write_manifest(dir, manifest);
  return manifest;
}

}  // namespace citeval
