#include <algorithm>
#include <cstdio>
#include <sstream>

#include "citeval/harness.hpp"
#include "citeval/text.hpp"
#include "json.hpp"

namespace citeval {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string>& metric_order() {
  static const std::vector<std::string> kOrder = {"HR", "PP", "F1", "BLEU", "Unparseable",
                                                  "Noncompliant"};
  return kOrder;
}

std::size_t metric_rank(const std::string& m) {
  const auto& o = metric_order();
  return static_cast<std::size_t>(std::find(o.begin(), o.end(), m) - o.begin());
}

std::vector<fs::path> run_directories(const fs::path& root) {
  std::vector<fs::path> dirs;
  if (!fs::exists(root)) return dirs;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == kResultsFile)
      dirs.push_back(e.path().parent_path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<json> all_rows(const fs::path& root) {
  std::vector<json> rows;
  for (const auto& dir : run_directories(root))
    for (const auto& line : committed_rows(dir)) rows.push_back(json::parse(line));
  return rows;
}

std::optional<double> number_or_null(const json& v) {
  if (v.is_number()) return v.get<double>();
  return std::nullopt;
}

metrics::ScoredResponse to_scored(const json& row) {
  metrics::ScoredResponse s;
  s.record_key = RecordKey::parse(row.at("record_key").get<std::string>());
  s.domain = row.at("domain").get<std::string>();
  s.exact_match = row.at("exact_match").get<bool>();
  s.word_mismatch = number_or_null(row.at("word_mismatch"));
  s.bleu4 = number_or_null(row.at("bleu4"));
  s.f1 = number_or_null(row.at("f1"));
  s.is_pass = row.at("is_pass").get<bool>();
  s.is_unparseable = row.value("is_unparseable", false);
  s.verdict.format_noncompliant = row.value("format_noncompliant", false);
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv_rows(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < csv.size(); ++i) {
    const char c = csv[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < csv.size() && csv[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (quoted) throw Error(ErrorCode::kMalformedDocument, "unterminated quoted CSV field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string two_decimals(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

std::vector<ReportCell> column_cells(const std::string& protocol, const std::string& metric,
                                     const std::string& model,
                                     const std::map<std::string, std::optional<double>>& by_domain,
                                     metrics::StdConvention convention) {
  std::vector<ReportCell> cells;
  std::vector<double> defined;
  for (const auto& [domain, v] : by_domain) {
    cells.push_back({protocol, metric, model, domain, v});
    if (v) defined.push_back(*v);
  }
  std::optional<double> mean, sd;
  if (!defined.empty()) {
    const auto a = metrics::aggregate(defined, convention);
    mean = a.mean;
    sd = a.std;
  }
  cells.push_back({protocol, metric, model, kMeanRow, mean});
  cells.push_back({protocol, metric, model, kStdRow, sd});
  return cells;
}

ReportBundle report(const fs::path& results_dir, const ReportOptions& options) {
  const auto rows = all_rows(results_dir);
  if (rows.empty()) throw Error(ErrorCode::kNoResults, "no results under " + results_dir.string());

  // (protocol label, model) -> domain -> responses
  std::map<std::pair<std::string, std::string>,
           std::map<std::string, std::vector<metrics::ScoredResponse>>>
      groups;
  for (const auto& row : rows) {
    const std::string label =
        row.at("protocol").get<std::string>() + "/" + row.at("retrieval_mode").get<std::string>();
    auto s = to_scored(row);
    const std::string domain = s.domain;
    groups[{label, row.at("model_name").get<std::string>()}][domain].push_back(std::move(s));
  }

  ReportBundle bundle;
  for (const auto& [group, domains] : groups) {
    std::map<std::string, std::map<std::string, std::optional<double>>> columns;
    for (const auto& [domain, responses] : domains) {
      const auto rep =
          metrics::domain_report(domain, responses, options.pass_handling, options.std_convention);
      columns["HR"][domain] = rep.hr ? std::optional<double>(*rep.hr * 100.0) : std::nullopt;
      columns["PP"][domain] = rep.pp * 100.0;
      columns["F1"][domain] = rep.f1_mean;
      columns["BLEU"][domain] = rep.bleu_mean;
      columns["Unparseable"][domain] = static_cast<double>(rep.unparseable_count);
      columns["Noncompliant"][domain] = static_cast<double>(rep.format_noncompliant_count);
    }
    for (const auto& metric : metric_order()) {
      auto cells = column_cells(group.first, metric, group.second, columns[metric],
                                options.std_convention);
      bundle.cells.insert(bundle.cells.end(), cells.begin(), cells.end());
    }
  }
  // Protocol, then metric, then model; row order within a column is kept.
  std::stable_sort(bundle.cells.begin(), bundle.cells.end(),
                   [](const ReportCell& a, const ReportCell& b) {
                     if (a.protocol != b.protocol) return a.protocol < b.protocol;
                     if (a.metric != b.metric) return metric_rank(a.metric) < metric_rank(b.metric);
                     return a.model < b.model;
                   });
  return bundle;
}

std::string report_to_csv(const ReportBundle& bundle) {
  std::string out = "protocol,metric,model,row,value\n";
  for (const auto& c : bundle.cells) {
    out += csv_field(c.protocol) + "," + csv_field(c.metric) + "," + csv_field(c.model) + "," +
           csv_field(c.row) + "," + (c.value ? text::format_double(*c.value) : std::string()) +
           "\n";
  }
  return out;
}

ReportBundle report_from_csv(const std::string& csv) {
  auto rows = parse_csv_rows(csv);
  if (rows.empty() || rows[0] != std::vector<std::string>{"protocol", "metric", "model", "row",
                                                           "value"})
    throw Error(ErrorCode::kMalformedDocument, "report CSV header is missing");
  ReportBundle b;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5)
      throw Error(ErrorCode::kMalformedDocument,
                  "report CSV line " + std::to_string(i + 1) + " has " + std::to_string(r.size()) +
                      " fields");
    ReportCell c{r[0], r[1], r[2], r[3], std::nullopt};
    if (!r[4].empty()) {
      char* end = nullptr;
      c.value = std::strtod(r[4].c_str(), &end);
      if (end != r[4].c_str() + r[4].size())
        throw Error(ErrorCode::kMalformedDocument, "bad number in report CSV: " + r[4]);
    }
    b.cells.push_back(std::move(c));
  }
  return b;
}

std::string report_to_text(const ReportBundle& bundle) {
  std::ostringstream out;
  out << "HR and PP are percentages; F1 and BLEU are in [0, 1].\n";

  // One table per (protocol, metric): domains down, models across.
  std::vector<std::pair<std::string, std::string>> tables;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> models, row_names;
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::optional<double>>
      value;
  for (const auto& c : bundle.cells) {
    const auto t = std::pair{c.protocol, c.metric};
    if (std::find(tables.begin(), tables.end(), t) == tables.end()) tables.push_back(t);
    auto& ms = models[t];
    if (std::find(ms.begin(), ms.end(), c.model) == ms.end()) ms.push_back(c.model);
    auto& rs = row_names[t];
    if (std::find(rs.begin(), rs.end(), c.row) == rs.end()) rs.push_back(c.row);
    value[{c.protocol, c.metric, c.model, c.row}] = c.value;
  }

  for (const auto& t : tables) {
    const auto& ms = models[t];
    const auto& rs = row_names[t];
    std::size_t first = std::string("Domain").size();
    for (const auto& r : rs) first = std::max(first, r.size());
    std::vector<std::size_t> widths;
    for (const auto& m : ms) {
      std::size_t w = m.size();
      for (const auto& r : rs) {
        auto it = value.find({t.first, t.second, m, r});
        w = std::max(w, two_decimals(it == value.end() ? std::nullopt : it->second).size());
      }
      widths.push_back(w);
    }
    auto pad_right = [](const std::string& s, std::size_t w) {
      return s + std::string(w - s.size(), ' ');
    };
    auto pad_left = [](const std::string& s, std::size_t w) {
      return std::string(w - s.size(), ' ') + s;
    };

    out << "\n" << t.first << " " << t.second << "\n";
    out << pad_right("Domain", first);
    for (std::size_t i = 0; i < ms.size(); ++i) out << "  " << pad_left(ms[i], widths[i]);
    out << "\n";
    for (const auto& r : rs) {
      out << pad_right(r, first);
      for (std::size_t i = 0; i < ms.size(); ++i) {
        auto it = value.find({t.first, t.second, ms[i], r});
        out << "  " << pad_left(two_decimals(it == value.end() ? std::nullopt : it->second),
                                widths[i]);
      }
      out << "\n";
    }
  }
  return out.str();
}

std::map<std::string, double> parse_price_table(const std::string& text) {
  std::map<std::string, double> prices;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string t = text::trim(line);
    if (t.empty()) continue;
    const auto eq = t.rfind('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kConfigInvalid,
                  "price table line " + std::to_string(lineno) + ": expected model = price");
    const std::string model = text::trim(t.substr(0, eq));
    const std::string value = text::trim(t.substr(eq + 1));
    char* end = nullptr;
    const double p = std::strtod(value.c_str(), &end);
    if (model.empty() || value.empty() || end != value.c_str() + value.size() || !(p >= 0.0))
      throw Error(ErrorCode::kConfigInvalid,
                  "price table line " + std::to_string(lineno) + ": bad price '" + value + "'");
    prices[model] = p;
  }
  return prices;
}

std::vector<ModelCost> cost_summary(const fs::path& results_dir,
                                    const std::map<std::string, double>& prices) {
  std::map<std::string, ModelCost> by_model;
  for (const auto& row : all_rows(results_dir)) {
    const std::string model = row.at("model_name").get<std::string>();
    auto& c = by_model[model];
    c.model = model;
    c.prompt_tokens += row.value("prompt_tokens", std::uint64_t{0});
    c.completion_tokens += row.value("completion_tokens", std::uint64_t{0});
    c.estimated = c.estimated || row.value("usage_estimated", false);
    ++c.rows;
  }
  std::vector<ModelCost> out;
  for (auto& [model, c] : by_model) {
    if (auto it = prices.find(model); it != prices.end())
      c.cost = static_cast<double>(c.total_tokens()) / 1000.0 * it->second;
    out.push_back(std::move(c));
  }
  return out;
}

std::string cost_summary_to_text(const std::vector<ModelCost>& costs) {
  std::ostringstream out;
  std::uint64_t prompt = 0, completion = 0;
  double cost = 0.0;
  bool estimated = false;
  out << "model\trows\tprompt_tokens\tcompletion_tokens\ttotal_tokens\tcost\n";
  for (const auto& c : costs) {
    out << c.model << "\t" << c.rows << "\t" << c.prompt_tokens << "\t" << c.completion_tokens
        << "\t" << c.total_tokens() << "\t" << (c.cost ? text::format_double(*c.cost) : "n/a")
        << (c.estimated ? "\t(usage estimated)" : "") << "\n";
    prompt += c.prompt_tokens;
    completion += c.completion_tokens;
    cost += c.cost.value_or(0.0);
    estimated = estimated || c.estimated;
  }
  out << "total\t-\t" << prompt << "\t" << completion << "\t" << prompt + completion << "\t"
      << text::format_double(cost) << (estimated ? "\t(usage estimated)" : "") << "\n";
  return out.str();
}

}  // namespace citeval
