#include "doctest.h"

#include <fstream>

#include "citeval/error.hpp"
#include "citeval/harness.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace citeval;
using nlohmann::json;
using testsupport::fixture;
namespace fs = std::filesystem;

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

ExperimentConfig base_config(const fs::path& out) {
  ExperimentConfig c;
  c.corpus = fixture("small_corpus.json");
  c.output_dir = out.string();
  c.generation.model_name = "stub-model";
  c.generation.endpoint_url = "http://stub.invalid/v1/chat/completions";
  c.concurrency = 2;
  c.seed = 11;
  return c;
}

RunServices stub(std::function<std::string(const std::string&)> answer) {
  RunServices s;
  s.llm = testsupport::answering(std::move(answer));
  s.sleep = [](std::chrono::milliseconds) {};
  return s;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<json> rows_of(const fs::path& dir) {
  std::vector<json> out;
  for (const auto& line : committed_rows(dir)) out.push_back(json::parse(line));
  return out;
}

const Corpus& small_corpus() {
  static const Corpus c = load_corpus(fixture("small_corpus.json"));
  return c;
}

std::optional<double> cell(const ReportBundle& b, const std::string& metric,
                           const std::string& row, const std::string& protocol = "") {
  for (const auto& c : b.cells)
    if (c.metric == metric && c.row == row && (protocol.empty() || c.protocol == protocol))
      return c.value;
  FAIL("no such cell " << metric << "/" << row);
  return std::nullopt;
}

}  // namespace

TEST_CASE("config text parsing") {
  auto c = parse_config(
      "# comment\n"
      "corpus = data/corpus.json\n"
      "protocols = DirectAuthor, sid\n"
      "retrieval_mode = naive   # trailing comment\n"
      "temperature = 0.2\n"
      "sample_limit = 5\n"
      "domains = *\n"
      "api_key_env = MY_KEY\n");
  CHECK(c.corpus == "data/corpus.json");
  CHECK(c.protocols == std::vector<Protocol>{Protocol::kDirectAuthor, Protocol::kSid});
  CHECK(c.retrieval_mode == RetrievalMode::kNaive);
  CHECK(c.generation.temperature == 0.2);
  CHECK(c.sample_limit == 5);
  CHECK(c.domains.empty());
  CHECK(c.generation.api_key_env == "MY_KEY");
  CHECK(c.effective_top_k() == 2);
  c.retrieval_mode = RetrievalMode::kAdvanced;
  CHECK(c.effective_top_k() == 40);

  // to_map and set are inverse.
  auto m = c.to_map();
  ExperimentConfig copy;
  for (const auto& [k, v] : m) copy.set(k, v);
  CHECK(copy.to_map() == m);
  CHECK(ExperimentConfig::keys().size() == m.size());

  CHECK(code_of([] { parse_config("no equals sign\n"); }) == ErrorCode::kConfigInvalid);
  CHECK(code_of([] { parse_config("bogus = 1\n"); }) == ErrorCode::kConfigInvalid);
  CHECK(code_of([] { parse_config("protocols = Nope\n"); }) == ErrorCode::kConfigInvalid);
  CHECK(code_of([] { parse_config("protocols = SID, SID\n"); }) == ErrorCode::kConfigInvalid);
  CHECK(code_of([] { parse_config("concurrency = -1\n"); }) == ErrorCode::kConfigInvalid);
  CHECK(code_of([] { parse_config("temperature = hot\n"); }) == ErrorCode::kConfigInvalid);
}

TEST_CASE("credentials are refused in config files") {
  for (std::string key : {"api_key", "openai_api_key", "API_KEY", "secret", "auth_token",
                          "password", "apikey"}) {
    try {
      parse_config(key + " = sk-live-123456\n");
      FAIL("accepted " << key);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfigInvalid);
      const std::string msg = e.what();
      CHECK(msg.find("credential") != std::string::npos);
      CHECK(msg.find("sk-live-123456") == std::string::npos);
    }
  }
  CHECK_NOTHROW(parse_config("embedding_api_key_env = EMBED_KEY\n"));
}

TEST_CASE("config validation") {
  testsupport::TempDir dir("validate");
  auto c = base_config(dir.path());
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.corpus.clear();
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kConfigInvalid);
  bad = c;
  bad.generation.endpoint_url.clear();
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kConfigInvalid);
  bad = c;
  bad.judge = "llm";
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kConfigInvalid);
  bad = c;
  bad.protocols.clear();
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kConfigInvalid);
  bad = c;
  bad.concurrency = 0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kConfigInvalid);
  bad = c;
  bad.retrieval_mode = RetrievalMode::kAdvanced;
  // No reranker configured or injected.
  CHECK(code_of([&] { run(bad, stub([](const std::string&) { return "pass"; })); }) ==
        ErrorCode::kConfigInvalid);
}

TEST_CASE("oracle stub gives HR 0 and PP 0 on every protocol") {
  testsupport::TempDir dir("oracle");
  auto c = base_config(dir.path());
  c.protocols = {Protocol::kDirectAuthor, Protocol::kDirectAuthorMeta, Protocol::kIndirectTitle,
                 Protocol::kSid};
  auto m = run(c, stub(testsupport::oracle(small_corpus())));
  CHECK(m.executed == 4 * small_corpus().size());
  CHECK(m.failed == 0);
  CHECK(m.rows == m.executed);
  CHECK_FALSE(m.finished_at.empty());

  for (const auto& row : rows_of(dir.path())) {
    CHECK(row["exact_match"] == true);
    CHECK(row["is_pass"] == false);
    CHECK(row["escalated"] == false);
    CHECK(row["model_name"] == "stub-model");
  }
  auto b = report(dir.path());
  for (const auto& cell : b.cells) {
    if (cell.metric == "HR" || cell.metric == "PP") {
      REQUIRE(cell.value.has_value());
      CHECK(*cell.value == 0.0);
    }
  }
}

TEST_CASE("pass stub gives PP 1 and an undefined HR") {
  testsupport::TempDir dir("passes");
  auto c = base_config(dir.path());
  run(c, stub([](const std::string&) { return "pass."; }));
  auto b = report(dir.path());
  CHECK(cell(b, "PP", "Robotics") == 100.0);
  CHECK_FALSE(cell(b, "HR", "Robotics").has_value());
  CHECK_FALSE(cell(b, "HR", kMeanRow).has_value());
  CHECK(cell(b, "PP", kMeanRow) == 100.0);
  CHECK(report_to_text(b).find("n/a") != std::string::npos);

  ReportOptions include;
  include.pass_handling = metrics::PassHandling::kInclude;
  CHECK(cell(report(dir.path(), include), "HR", "Robotics") == 0.0);
}

TEST_CASE("identical runs produce identical rows") {
  testsupport::TempDir a("det_a"), b("det_b");
  auto ca = base_config(a.path());
  ca.protocols = {Protocol::kIndirectTitle, Protocol::kSid};
  ca.concurrency = 3;
  auto cb = ca;
  cb.output_dir = b.str();
  cb.concurrency = 1;
  run(ca, stub(testsupport::oracle(small_corpus())));
  run(cb, stub(testsupport::oracle(small_corpus())));
  CHECK(read(a.path() / kResultsFile) == read(b.path() / kResultsFile));
}

TEST_CASE("interrupted run resumes without duplicates") {
  testsupport::TempDir dir("resume");
  auto c = base_config(dir.path());
  c.concurrency = 1;  // batches of 8 cells
  std::atomic<int> calls{0};
  auto flaky = RunServices{};
  flaky.sleep = [](std::chrono::milliseconds) {};
  flaky.llm = std::make_shared<FunctionTransport>([&](const HttpRequest& r) -> HttpReply {
    if (calls++ >= 10) return {401, "", TransportFailure::kNone, ""};
    return testsupport::chat_reply(testsupport::oracle(small_corpus())(testsupport::prompt_of(r)),
                                   3, 2);
  });
  CHECK(code_of([&] { run(c, flaky); }) == ErrorCode::kAuthFailure);
  // The first batch is committed, the second stopped; its successes are kept.
  const auto partial = verify_run(dir.path());
  CHECK(partial.rows == 10);
  CHECK_FALSE(fs::exists(dir.path() / kLockFile));

  std::vector<std::string> prompts;
  std::mutex mu;
  auto counting = stub([&](const std::string& p) {
    std::lock_guard lock(mu);
    prompts.push_back(p);
    return testsupport::oracle(small_corpus())(p);
  });
  auto m = run(c, counting);
  CHECK(m.skipped == 10);
  CHECK(m.executed == small_corpus().size() - 10);
  CHECK(prompts.size() == small_corpus().size() - 10);
  auto rows = committed_rows(dir.path());
  CHECK(rows.size() == small_corpus().size());
  std::set<std::string> keys;
  for (const auto& r : rows) keys.insert(json::parse(r)["record_key"].get<std::string>());
  CHECK(keys.size() == rows.size());

  // A rerun of a complete directory executes nothing.
  auto again = run(c, counting);
  CHECK(again.executed == 0);
  CHECK(again.skipped == small_corpus().size());
}

TEST_CASE("uncommitted tail is dropped on resume") {
  testsupport::TempDir dir("tail");
  auto c = base_config(dir.path());
  run(c, stub([](const std::string&) { return "pass"; }));
  const auto before = read(dir.path() / kResultsFile);
  {
    std::ofstream out(dir.path() / kResultsFile, std::ios::app | std::ios::binary);
    out << "{\"record_key\": \"half a row";
  }
  CHECK(verify_run(dir.path()).rows == small_corpus().size());
  run(c, stub([](const std::string&) { return "pass"; }));
  CHECK(read(dir.path() / kResultsFile) == before);
}

TEST_CASE("tampering is detected") {
  testsupport::TempDir dir("tamper");
  auto c = base_config(dir.path());
  run(c, stub([](const std::string&) { return "Wrong Title"; }));
  const fs::path results = dir.path() / kResultsFile;
  const fs::path manifest = dir.path() / kManifestFile;
  const auto original = read(results);
  const auto original_manifest = read(manifest);
  auto write = [](const fs::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary | std::ios::trunc) << s;
  };

  // Edit a row in place, keeping the length.
  auto edited = original;
  edited.replace(edited.find("false"), 5, "fals3");
  write(results, edited);
  CHECK(code_of([&] { verify_run(dir.path()); }) == ErrorCode::kTampered);
  CHECK(code_of([&] { run(c, stub([](const std::string&) { return "x"; })); }) ==
        ErrorCode::kTampered);

  // Drop a row.
  auto shorter = original.substr(original.find('\n') + 1);
  write(results, shorter);
  CHECK(code_of([&] { verify_run(dir.path()); }) == ErrorCode::kTampered);

  // Swap two rows.
  auto first_end = original.find('\n') + 1;
  auto second_end = original.find('\n', first_end) + 1;
  write(results, original.substr(first_end, second_end - first_end) +
                     original.substr(0, first_end) + original.substr(second_end));
  CHECK(code_of([&] { verify_run(dir.path()); }) == ErrorCode::kTampered);

  // Edit the manifest.
  write(results, original);
  auto doc = json::parse(original_manifest);
  doc["rows"] = doc["rows"].get<int>() - 1;
  write(manifest, doc.dump(2));
  CHECK(code_of([&] { verify_run(dir.path()); }) == ErrorCode::kTampered);

  // Results without a manifest.
  fs::remove(manifest);
  CHECK(code_of([&] { run(c, stub([](const std::string&) { return "x"; })); }) ==
        ErrorCode::kTampered);
  CHECK(code_of([&] { verify_run(dir.path()); }) == ErrorCode::kTampered);

  write(manifest, original_manifest);
  CHECK(verify_run(dir.path()).rows == small_corpus().size());
}

TEST_CASE("resume refuses a different experiment") {
  testsupport::TempDir dir("mismatch");
  auto c = base_config(dir.path());
  run(c, stub([](const std::string&) { return "pass"; }));
  auto other = c;
  other.generation.temperature = 0.3;
  CHECK(code_of([&] { run(other, stub([](const std::string&) { return "pass"; })); }) ==
        ErrorCode::kConfigInvalid);
  auto operational = c;
  operational.concurrency = 7;
  CHECK_NOTHROW(run(operational, stub([](const std::string&) { return "pass"; })));
}

TEST_CASE("an existing lock file blocks the run") {
  testsupport::TempDir dir("lock");
  auto c = base_config(dir.path());
  std::ofstream(dir.path() / kLockFile) << "123\n";
  CHECK(code_of([&] { run(c, stub([](const std::string&) { return "pass"; })); }) ==
        ErrorCode::kLocked);
  fs::remove(dir.path() / kLockFile);
  CHECK_NOTHROW(run(c, stub([](const std::string&) { return "pass"; })));
}

TEST_CASE("malformed endpoint replies skip the cell without stopping") {
  testsupport::TempDir dir("malformed");
  auto c = base_config(dir.path());
  RunServices s;
  s.sleep = [](std::chrono::milliseconds) {};
  s.llm = std::make_shared<FunctionTransport>([](const HttpRequest& r) -> HttpReply {
    if (testsupport::prompt_of(r).find("Mask R-CNN") != std::string::npos ||
        testsupport::prompt_of(r).find("mask r-cnn") != std::string::npos)
      return {200, "not json", TransportFailure::kNone, ""};
    return testsupport::chat_reply("pass");
  });
  auto m = run(c, s);
  CHECK(m.failed == 1);
  CHECK(m.rows == small_corpus().size() - 1);
}

TEST_CASE("sample limit per domain") {
  testsupport::TempDir dir("sample");
  auto c = base_config(dir.path());
  c.sample_limit = 2;
  auto m = run(c, stub([](const std::string&) { return "pass"; }));
  CHECK(m.rows == 6);
  std::map<std::string, int> per_domain;
  for (const auto& r : rows_of(dir.path())) per_domain[r["domain"]]++;
  for (const auto& [d, n] : per_domain) CHECK(n == 2);
}

TEST_CASE("no API key material is persisted") {
  testsupport::TempDir dir("keys");
  ::setenv("CITEVAL_HARNESS_KEY", "sk-harness-secret-987", 1);
  auto c = base_config(dir.path());
  c.generation.api_key_env = "CITEVAL_HARNESS_KEY";
  std::string auth;
  RunServices s;
  s.llm = std::make_shared<FunctionTransport>([&](const HttpRequest& r) {
    for (const auto& [k, v] : r.headers)
      if (k == "Authorization") auth = v;
    return testsupport::chat_reply("pass");
  });
  run(c, s);
  ::unsetenv("CITEVAL_HARNESS_KEY");
  CHECK(auth == "Bearer sk-harness-secret-987");
  for (const auto& e : fs::recursive_directory_iterator(dir.path()))
    if (e.is_regular_file()) CHECK(read(e.path()).find("sk-harness-secret-987") == std::string::npos);
  CHECK(read(dir.path() / kManifestFile).find("CITEVAL_HARNESS_KEY") != std::string::npos);
}

TEST_CASE("retrieval modes with stubs") {
  testsupport::TempDir naive("naive"), adv("advanced");
  auto c = base_config(naive.path());
  c.retrieval_mode = RetrievalMode::kNaive;
  std::vector<std::string> prompts;
  std::mutex mu;
  auto capture = [&](const std::string& p) {
    std::lock_guard lock(mu);
    prompts.push_back(p);
    return testsupport::oracle(small_corpus())(p);
  };
  run(c, stub(capture));
  REQUIRE_FALSE(prompts.empty());
  for (const auto& p : prompts) CHECK(p.rfind("Context:\n[1] Title: ", 0) == 0);
  auto rows = rows_of(naive.path());
  CHECK(rows[0]["retrieval_mode"] == "Naive");
  CHECK(rows[0]["template_hash"] !=
        PromptTemplates::builtin().hash(TemplateId::kIndirect));

  class Flat final : public Reranker {
   public:
    std::vector<double> score(const std::string&, std::span<const std::string> c) const override {
      return std::vector<double>(c.size(), 1.0);
    }
    std::string checkpoint_hash() const override { return "ckpt-1"; }
  };
  auto ca = base_config(adv.path());
  ca.retrieval_mode = RetrievalMode::kAdvanced;
  ca.top_k = 3;
  auto services = stub(testsupport::oracle(small_corpus()));
  services.reranker = std::make_shared<Flat>();
  auto m = run(ca, services);
  CHECK(m.checkpoint_hash == "ckpt-1");
  CHECK(verify_run(adv.path()).checkpoint_hash == "ckpt-1");

  class Down final : public Reranker {
   public:
    std::vector<double> score(const std::string&, std::span<const std::string>) const override {
      throw Error(ErrorCode::kUnreachable, "down");
    }
    std::string checkpoint_hash() const override { return "ckpt-1"; }
  };
  testsupport::TempDir down("down");
  auto cd = ca;
  cd.output_dir = down.str();
  services.reranker = std::make_shared<Down>();
  CHECK(code_of([&] { run(cd, services); }) == ErrorCode::kRerankerUnavailable);
}

TEST_CASE("report of a single domain run") {
  testsupport::TempDir dir("single");
  auto c = base_config(dir.path());
  c.domains = {"Robotics"};
  c.strict = false;
  run(c, stub([](const std::string& p) {
        return p.find("introduced probabilistic robotics") != std::string::npos ? "pass" : "Wrong Title";
      }));
  auto b = report(dir.path());
  const auto hr = cell(b, "HR", "Robotics");
  REQUIRE(hr.has_value());
  CHECK(cell(b, "HR", kMeanRow) == hr);
  CHECK(cell(b, "HR", kStdRow) == 0.0);
  CHECK(cell(b, "PP", "Robotics") == 25.0);
  CHECK(b.cells.front().protocol == "IndirectTitle/None");
  CHECK(b.cells.front().model == "stub-model");
}

TEST_CASE("mean and std rows over a twelve-domain HR column") {
  const std::vector<double> g1{30.9, 35.9, 27.51, 24.82, 37.48, 29.3,
                               22.92, 21.01, 36.05, 34.41, 34.71, 53.04};
  std::map<std::string, std::optional<double>> by_domain;
  int i = 0;
  for (const auto& d : default_domains()) by_domain[d] = g1[i++];
  auto cells = column_cells("DirectAuthor/None", "HR", "G1", by_domain,
                            metrics::StdConvention::kSample);
  REQUIRE(cells.size() == 14);
  CHECK(cells[12].row == kMeanRow);
  CHECK(std::abs(*cells[12].value - 32.33) <= 0.05);
  CHECK(cells[13].row == kStdRow);
  CHECK(std::abs(*cells[13].value - 8.52) <= 0.2);
  // Single source of truth with the metrics module.
  auto agg = metrics::aggregate(g1);
  CHECK(*cells[12].value == agg.mean);
  CHECK(*cells[13].value == agg.std);

  auto text = report_to_text(ReportBundle{cells});
  CHECK(text.find("32.34") != std::string::npos);  // 32.3375 rounds half away
  CHECK(text.find("8.53") != std::string::npos);
}

TEST_CASE("CSV round-trips at full precision") {
  ReportBundle b;
  b.cells = {{"IndirectTitle/None", "HR", "model, with \"quotes\"", "Robotics", 100.0 / 3.0},
             {"IndirectTitle/None", "HR", "m", kMeanRow, std::nullopt},
             {"SID/Naive", "BLEU", "m", "Artificial Intelligence", 0.1 + 0.2}};
  auto csv = report_to_csv(b);
  CHECK(csv.rfind("protocol,metric,model,row,value\n", 0) == 0);
  CHECK(report_from_csv(csv) == b);
  CHECK(report_to_text(report_from_csv(csv)) == report_to_text(b));
  CHECK_THROWS_AS(report_from_csv("protocol,metric,model,row,value\n\"open"), Error);
}

TEST_CASE("empty results directory") {
  testsupport::TempDir dir("empty");
  CHECK(code_of([&] { report(dir.path()); }) == ErrorCode::kNoResults);
  CHECK(cost_summary(dir.path()).empty());
}

TEST_CASE("cost summary") {
  testsupport::TempDir dir("cost");
  auto c = base_config(dir.path());
  c.domains = {"Robotics"};
  c.strict = false;
  c.sample_limit = 2;
  RunServices s;
  s.llm = std::make_shared<FunctionTransport>(
      [](const HttpRequest&) { return testsupport::chat_reply("pass", 100, 50); });
  run(c, s);
  auto prices = parse_price_table("# per 1K tokens\nstub-model = 1.0\n");
  auto costs = cost_summary(dir.path(), prices);
  REQUIRE(costs.size() == 1);
  CHECK(costs[0].rows == 2);
  CHECK(costs[0].total_tokens() == 300);
  REQUIRE(costs[0].cost.has_value());
  CHECK(*costs[0].cost == doctest::Approx(0.3));
  CHECK_FALSE(costs[0].estimated);
  CHECK(cost_summary_to_text(costs).find("300") != std::string::npos);

  CHECK_FALSE(cost_summary(dir.path())[0].cost.has_value());
  CHECK_THROWS_AS(parse_price_table("stub-model = cheap\n"), Error);
}
