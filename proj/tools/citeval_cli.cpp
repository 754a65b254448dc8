// Command line front end. Talks to the library only through citeval.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "citeval/citeval.h"

namespace {

int report_failure(citeval_status s) {
  std::cerr << "error (" << citeval_status_name(s) << "): " << citeval_last_error() << "\n";
  return static_cast<int>(s) == 0 ? 1 : static_cast<int>(s);
}

bool write_text(const std::string& path, const char* data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << data;
  return static_cast<bool>(out.flush());
}

std::string dashed(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return key;
}

int cmd_load_check(const std::string& path, bool lenient, const std::string& domains) {
  citeval_corpus* corpus = nullptr;
  auto s = citeval_corpus_load(path.c_str(), lenient ? 0 : 1,
                               domains.empty() ? nullptr : domains.c_str(), &corpus);
  if (s != CITEVAL_OK) return report_failure(s);
  std::cout << "records: " << citeval_corpus_size(corpus) << "\n"
            << "raw: " << citeval_corpus_raw_count(corpus) << "\n"
            << "dropped: " << citeval_corpus_dropped(corpus) << "\n"
            << "content hash: " << citeval_corpus_hash(corpus) << "\n";
  for (size_t i = 0; i < citeval_corpus_domain_count(corpus); ++i)
    std::cout << "  " << citeval_corpus_domain_name(corpus, i) << ": "
              << citeval_corpus_domain_size(corpus, i) << "\n";
  for (size_t i = 0; i < citeval_corpus_warning_count(corpus); ++i)
    std::cerr << "warning: " << citeval_corpus_warning(corpus, i) << "\n";
  citeval_corpus_free(corpus);
  return 0;
}

// Used by --dry-run: every prompt is answered with "pass".
int pass_completer(void*, const char*, const char** completion) {
  *completion = "pass";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source attribution evaluation harness"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  // load-check
  auto* load = app.add_subcommand("load-check", "Validate a corpus file");
  std::string corpus_path, domains;
  bool lenient = false;
  load->add_option("corpus", corpus_path, "Corpus JSON file")->required();
  load->add_flag("--lenient", lenient, "Drop invalid records instead of failing");
  load->add_option("--domains", domains, "Comma-separated domain set, '*' for any");

  // run
  auto* run = app.add_subcommand("run", "Execute an experiment config");
  std::string config_path;
  std::vector<std::string> sets;
  bool dry_run = false;
  run->add_option("-c,--config", config_path, "key = value config file");
  run->add_option("-s,--set", sets, "Override as key=value (repeatable)");
  run->add_flag("--dry-run", dry_run, "Answer every prompt with 'pass' instead of calling the endpoint");
  std::map<std::string, std::string> key_overrides;
  for (size_t i = 0; i < citeval_config_key_count(); ++i) {
    const std::string key = citeval_config_key_name(i);
    run->add_option_function<std::string>(
        "--" + dashed(key), [&key_overrides, key](const std::string& v) { key_overrides[key] = v; },
        "Override config key " + key);
  }

  // report
  auto* rep = app.add_subcommand("report", "Emit result tables");
  std::string results_dir, out_dir, pass_handling = "exclude", std_convention = "sample";
  rep->add_option("results", results_dir, "Directory containing runs")->required();
  rep->add_option("-o,--out", out_dir, "Where report.csv and report.txt go (default: results)");
  rep->add_option("--pass-handling", pass_handling)->check(CLI::IsMember({"exclude", "include"}));
  rep->add_option("--std-convention", std_convention)
      ->check(CLI::IsMember({"sample", "population"}));

  // adversarial
  auto* adv = app.add_subcommand("adversarial", "Build a perturbed evaluation set");
  citeval_adversarial_options ao;
  citeval_adversarial_options_init(&ao);
  std::string adv_corpus, adv_out, field = "title";
  bool stratify = false, casefold = false, adv_lenient = false;
  adv->add_option("corpus", adv_corpus, "Corpus JSON file")->required();
  adv->add_option("-o,--out", adv_out, "Output JSON file")->required();
  adv->add_option("-n", ao.n, "Number of perturbed records")->capture_default_str();
  adv->add_option("--field", field)->check(CLI::IsMember({"title", "abstract"}));
  adv->add_option("--seed", ao.seed)->capture_default_str();
  adv->add_option("--threshold", ao.threshold)->capture_default_str();
  adv->add_flag("--stratify", stratify, "Sample round-robin over domains");
  adv->add_flag("--casefold", casefold, "Compare lowercased strings");
  adv->add_flag("--lenient", adv_lenient, "Drop invalid records instead of failing");

  // cost
  auto* cost = app.add_subcommand("cost", "Token and cost totals per model");
  std::string cost_dir, prices;
  cost->add_option("results", cost_dir, "Directory containing runs")->required();
  cost->add_option("--prices", prices, "model = price per 1K tokens file");

  CLI11_PARSE(app, argc, argv);

  const std::map<std::string, int> levels = {{"trace", 0}, {"debug", 1}, {"info", 2},
                                             {"warn", 3},  {"error", 4}, {"off", 6}};
  citeval_set_log_level(levels.at(log_level));

  if (*load) return cmd_load_check(corpus_path, lenient, domains);

  if (*run) {
    citeval_config* cfg = nullptr;
    citeval_config_new(&cfg);
    auto s = CITEVAL_OK;
    if (!config_path.empty()) s = citeval_config_load_file(cfg, config_path.c_str());
    for (const auto& kv : sets) {
      if (s != CITEVAL_OK) break;
      auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "--set expects key=value, got '" << kv << "'\n";
        citeval_config_free(cfg);
        return 2;
      }
      s = citeval_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    }
    for (const auto& [k, v] : key_overrides) {
      if (s != CITEVAL_OK) break;
      s = citeval_config_set(cfg, k.c_str(), v.c_str());
    }
    citeval_run_summary summary{};
    if (s == CITEVAL_OK)
      s = dry_run ? citeval_run_with_completer(cfg, pass_completer, nullptr, &summary)
                  : citeval_run(cfg, &summary);
    citeval_config_free(cfg);
    std::cout << "executed " << summary.executed << ", skipped " << summary.skipped
              << ", failed " << summary.failed << ", rows " << summary.rows << "\n";
    return s == CITEVAL_OK ? 0 : report_failure(s);
  }

  if (*rep) {
    citeval_text* csv = nullptr;
    citeval_text* text = nullptr;
    auto s = citeval_report(results_dir.c_str(), pass_handling == "include" ? 1 : 0,
                            std_convention == "population" ? 1 : 0, &csv, &text);
    if (s != CITEVAL_OK) return report_failure(s);
    const std::string dir = out_dir.empty() ? results_dir : out_dir;
    const bool ok = write_text(dir + "/report.csv", citeval_text_data(csv)) &&
                    write_text(dir + "/report.txt", citeval_text_data(text));
    std::cout << citeval_text_data(text);
    citeval_text_free(csv);
    citeval_text_free(text);
    if (!ok) {
      std::cerr << "error: could not write report files to " << dir << "\n";
      return 1;
    }
    return 0;
  }

  if (*adv) {
    citeval_corpus* corpus = nullptr;
    auto s = citeval_corpus_load(adv_corpus.c_str(), adv_lenient ? 0 : 1, nullptr, &corpus);
    if (s != CITEVAL_OK) return report_failure(s);
    ao.field = field.c_str();
    ao.stratify_by_domain = stratify ? 1 : 0;
    ao.casefold = casefold ? 1 : 0;
    size_t achievable = 0;
    s = citeval_adversarial_build(corpus, &ao, adv_out.c_str(), &achievable);
    citeval_corpus_free(corpus);
    if (s != CITEVAL_OK) return report_failure(s);
    std::cout << "wrote " << achievable << " perturbed records to " << adv_out << "\n";
    return 0;
  }

  if (*cost) {
    citeval_text* out = nullptr;
    auto s = citeval_cost_summary(cost_dir.c_str(), prices.empty() ? nullptr : prices.c_str(), &out);
    if (s != CITEVAL_OK) return report_failure(s);
    std::cout << citeval_text_data(out);
    citeval_text_free(out);
    return 0;
  }
  return 0;
}
