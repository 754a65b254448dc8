#include "citeval/prompting.hpp"

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "citeval/error.hpp"
#include "citeval/text.hpp"
#include "json.hpp"

namespace citeval {

namespace {

struct BuiltinTemplate {
  TemplateId id;
  const char* text;
};

// Generated from templates/*.txt at configure time.
constexpr BuiltinTemplate kBuiltin[] = {
#include "citeval_templates.inc"
};

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string escape_quotes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '"') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string drop_lines_containing(std::string_view tmpl, std::string_view needle) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= tmpl.size()) {
    auto nl = tmpl.find('\n', pos);
    auto end = nl == std::string_view::npos ? tmpl.size() : nl;
    auto line = tmpl.substr(pos, end - pos);
    if (line.find(needle) == std::string_view::npos) {
      out.append(line);
      if (nl != std::string_view::npos) out.push_back('\n');
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return strip_trailing_newlines(std::move(out));
}

void require_nonblank(const std::string& v, const char* what) {
  if (text::is_blank(v))
    throw Error(ErrorCode::kInvalidArgument, std::string("empty ") + what);
}

AttributionTask make_task(TaskKind kind, TemplateId id, const PromptTemplates& t,
                          const std::map<std::string, std::string>& values,
                          std::string_view tmpl_override = {}) {
  AttributionTask task;
  task.kind = kind;
  task.rendered_prompt =
      render_template(tmpl_override.empty() ? std::string_view(t.text(id)) : tmpl_override,
                      values);
  task.template_hash = t.hash(id);
  return task;
}

std::string normalize_quotes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (s.substr(i, 3) == "\xE2\x80\x9C" || s.substr(i, 3) == "\xE2\x80\x9D") {
      out.push_back('"');
      i += 3;
    } else {
      out.push_back(s[i]);
      ++i;
    }
  }
  return out;
}

// Returns the end (one past ']') of the bracket group starting at `open`,
// honouring double-quoted strings; npos if unterminated.
std::size_t match_bracket(const std::string& s, std::size_t open) {
  int depth = 0;
  bool in_str = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    else if (c == '[') ++depth;
    else if (c == ']' && --depth == 0) return i + 1;
  }
  return std::string::npos;
}

bool is_pass_token(std::string_view s) {
  auto toks = text::tokenize(s);
  return toks.size() == 1 && toks[0] == "pass";
}

// First well-formed JSON array of non-blank strings in `raw`.
std::optional<std::pair<std::vector<std::string>, std::string>> find_string_array(
    const std::string& raw) {
  const std::string s = normalize_quotes(raw);
  for (std::size_t open = s.find('['); open != std::string::npos;
       open = s.find('[', open + 1)) {
    auto end = match_bracket(s, open);
    if (end == std::string::npos) continue;
    auto candidate = s.substr(open, end - open);
    auto parsed = nlohmann::json::parse(candidate, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_array() || parsed.empty()) continue;
    std::vector<std::string> names;
    bool ok = true;
    for (const auto& e : parsed) {
      if (!e.is_string() || text::is_blank(e.get<std::string>())) {
        ok = false;
        break;
      }
      names.push_back(text::trim(e.get<std::string>()));
    }
    if (ok) return std::pair{std::move(names), candidate};
  }
  return std::nullopt;
}

const std::regex& authors_tag() {
  static const std::regex re(R"(<authors>([\s\S]*?)</authors>)", std::regex::icase);
  return re;
}

}  // namespace

std::string_view task_kind_name(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::kDirectAuthor: return "DirectAuthor";
    case TaskKind::kDirectAuthorMeta: return "DirectAuthorMeta";
    case TaskKind::kIndirectTitle: return "IndirectTitle";
    case TaskKind::kSidStage1: return "SidStage1";
    case TaskKind::kSidStage2: return "SidStage2";
  }
  return "?";
}

std::optional<TaskKind> parse_task_kind(std::string_view name) noexcept {
  for (auto k : {TaskKind::kDirectAuthor, TaskKind::kDirectAuthorMeta,
                 TaskKind::kIndirectTitle, TaskKind::kSidStage1, TaskKind::kSidStage2})
    if (task_kind_name(k) == name) return k;
  return std::nullopt;
}

bool is_author_task(TaskKind kind) noexcept {
  return kind == TaskKind::kDirectAuthor || kind == TaskKind::kDirectAuthorMeta;
}

std::string_view verdict_kind_name(VerdictKind kind) noexcept {
  switch (kind) {
    case VerdictKind::kPass: return "Pass";
    case VerdictKind::kAuthorList: return "AuthorList";
    case VerdictKind::kTitle: return "Title";
    case VerdictKind::kUnparseable: return "Unparseable";
  }
  return "?";
}

// -- Templates ---------------------------------------------------------------

PromptTemplates::PromptTemplates() {
  for (const auto& b : kBuiltin) texts_[b.id] = strip_trailing_newlines(b.text);
}

const PromptTemplates& PromptTemplates::builtin() {
  static const PromptTemplates kTemplates;
  return kTemplates;
}

std::string_view PromptTemplates::file_name(TemplateId id) {
  switch (id) {
    case TemplateId::kDirectAuthor: return "direct_author.txt";
    case TemplateId::kDirectAuthorMeta: return "direct_author_meta.txt";
    case TemplateId::kIndirect: return "indirect.txt";
    case TemplateId::kSidStage2: return "sid_stage2.txt";
    case TemplateId::kRagContext: return "rag_context.txt";
  }
  return "";
}

PromptTemplates PromptTemplates::from_directory(const std::string& dir) {
  PromptTemplates t;
  for (auto id : {TemplateId::kDirectAuthor, TemplateId::kDirectAuthorMeta,
                  TemplateId::kIndirect, TemplateId::kSidStage2, TemplateId::kRagContext}) {
    auto path = std::filesystem::path(dir) / file_name(id);
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    t.set(id, buf.str());
  }
  return t;
}

const std::string& PromptTemplates::text(TemplateId id) const { return texts_.at(id); }

std::string PromptTemplates::hash(TemplateId id) const {
  return text::sha256_hex(text(id));
}

void PromptTemplates::set(TemplateId id, std::string text) {
  texts_[id] = strip_trailing_newlines(std::move(text));
}

std::string PromptTemplates::set_hash() const {
  std::string all;
  for (const auto& [id, txt] : texts_) {
    all.append(file_name(id));
    all.push_back('\0');
    all.append(txt);
    all.push_back('\0');
  }
  return text::sha256_hex(all);
}

std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size() + 64);
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    char c = tmpl[i];
    if (c == '{') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
        out.push_back('{');
        ++i;
        continue;
      }
      auto close = tmpl.find('}', i + 1);
      if (close == std::string_view::npos)
        throw Error(ErrorCode::kInvalidArgument, "unterminated placeholder in template");
      std::string name(tmpl.substr(i + 1, close - i - 1));
      auto it = values.find(name);
      if (it == values.end())
        throw Error(ErrorCode::kInvalidArgument, "unknown placeholder {" + name + "}");
      out.append(it->second);
      i = close;
    } else if (c == '}') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '}') ++i;
      out.push_back('}');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

// -- Builders ------------------------------------------------------------------

AttributionTask build_direct_author(const std::string& cited_title,
                                    const PromptTemplates& t) {
  require_nonblank(cited_title, "title");
  return make_task(TaskKind::kDirectAuthor, TemplateId::kDirectAuthor, t,
                   {{"title", escape_quotes(cited_title)}});
}

AttributionTask build_direct_author_meta(const std::string& cited_title,
                                         const std::string& cited_abstract,
                                         const PromptTemplates& t) {
  require_nonblank(cited_title, "title");
  auto task = make_task(TaskKind::kDirectAuthorMeta, TemplateId::kDirectAuthorMeta, t,
                        {{"title", escape_quotes(cited_title)},
                         {"abstract", escape_quotes(cited_abstract)}});
  task.degenerate = text::is_blank(cited_abstract);
  return task;
}

AttributionTask build_indirect(const std::string& source_title,
                               const std::string& sentence,
                               const PromptTemplates& t) {
  require_nonblank(source_title, "title");
  require_nonblank(sentence, "sentence");
  return make_task(TaskKind::kIndirectTitle, TemplateId::kIndirect, t,
                   {{"title", escape_quotes(source_title)},
                    {"sentence", escape_quotes(sentence)}});
}

AttributionTask build_sid_stage1(const std::string& source_title,
                                 const std::string& sentence,
                                 const PromptTemplates& t) {
  auto task = build_indirect(source_title, sentence, t);
  task.kind = TaskKind::kSidStage1;
  return task;
}

AttributionTask build_sid_stage2(const std::string& source_title,
                                 const std::string& sentence,
                                 const std::string& cited_abstract,
                                 std::span<const std::string> cited_authors,
                                 const PromptTemplates& t) {
  require_nonblank(source_title, "title");
  require_nonblank(sentence, "sentence");
  std::string tmpl;
  if (cited_authors.empty()) tmpl = drop_lines_containing(t.text(TemplateId::kSidStage2), "{authors}");
  auto task = make_task(TaskKind::kSidStage2, TemplateId::kSidStage2, t,
                        {{"title", escape_quotes(source_title)},
                         {"sentence", escape_quotes(sentence)},
                         {"abstract", escape_quotes(cited_abstract)},
                         {"authors", escape_quotes(text::join(cited_authors, ", "))}},
                        tmpl);
  task.degenerate = cited_authors.empty() || text::is_blank(cited_abstract);
  return task;
}

AttributionTask build_task(TaskKind kind, const CitationRecord& r,
                           const PromptTemplates& t) {
  AttributionTask task;
  switch (kind) {
    case TaskKind::kDirectAuthor: task = build_direct_author(r.cited_title, t); break;
    case TaskKind::kDirectAuthorMeta:
      task = build_direct_author_meta(r.cited_title, r.cited_abstract, t);
      break;
    case TaskKind::kIndirectTitle: task = build_indirect(r.source_title, r.sentence, t); break;
    case TaskKind::kSidStage1: task = build_sid_stage1(r.source_title, r.sentence, t); break;
    case TaskKind::kSidStage2:
      task = build_sid_stage2(r.source_title, r.sentence, r.cited_abstract,
                              r.cited_authors, t);
      break;
  }
  task.record_key = r.key();
  return task;
}

std::string wrap_with_context(const std::string& context, const std::string& prompt,
                              const PromptTemplates& t) {
  return render_template(t.text(TemplateId::kRagContext),
                         {{"context", context}, {"prompt", prompt}});
}

// -- Parsers -----------------------------------------------------------------

ModelVerdict parse_author_reply(const std::string& raw, TaskKind protocol) {
  ModelVerdict v;
  v.raw_text = raw;
  const std::string trimmed = text::trim(raw);

  if (protocol == TaskKind::kDirectAuthor) {
    auto found = find_string_array(raw);
    if (!found) return v;
    auto& [names, matched] = *found;
    v.format_noncompliant = trimmed != text::trim(normalize_quotes(matched)) &&
                            normalize_quotes(trimmed) != matched;
    if (names.size() == 1 && text::to_lower_ascii(names[0]) == "pass") {
      v.kind = VerdictKind::kPass;
    } else {
      v.kind = VerdictKind::kAuthorList;
      v.authors = std::move(names);
    }
    return v;
  }

  if (protocol == TaskKind::kDirectAuthorMeta) {
    std::smatch m;
    if (!std::regex_search(raw, m, authors_tag())) return v;
    v.format_noncompliant = trimmed != text::trim(m.str(0));
    std::string body = text::trim(m.str(1));
    if (text::to_lower_ascii(body) == "pass") {
      v.kind = VerdictKind::kPass;
      return v;
    }
    std::vector<std::string> names;
    std::stringstream ss(body);
    for (std::string part; std::getline(ss, part, ',');) {
      auto name = text::trim(part);
      if (!name.empty()) names.push_back(std::move(name));
    }
    if (names.empty()) return v;
    v.kind = VerdictKind::kAuthorList;
    v.authors = std::move(names);
    return v;
  }

  throw Error(ErrorCode::kInvalidArgument,
              "parse_author_reply called for non-author protocol " +
                  std::string(task_kind_name(protocol)));
}

ModelVerdict parse_title_reply(const std::string& raw) {
  ModelVerdict v;
  v.raw_text = raw;
  std::string trimmed = text::trim(raw);
  if (trimmed.empty()) return v;
  // Author-protocol grammars are rejected for title tasks.
  if (std::regex_search(trimmed, authors_tag())) return v;
  if (trimmed.front() != '[' && is_pass_token(trimmed)) {
    v.kind = VerdictKind::kPass;
    return v;
  }
  if (trimmed.front() == '[') {
    auto parsed = nlohmann::json::parse(normalize_quotes(trimmed), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_array()) return v;
  }
  v.kind = VerdictKind::kTitle;
  v.title = trimmed;
  return v;
}

ModelVerdict parse_reply(const std::string& raw, TaskKind protocol) {
  if (is_author_task(protocol)) return parse_author_reply(raw, protocol);
  return parse_title_reply(raw);
}

}  // namespace citeval
