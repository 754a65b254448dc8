#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citeval/corpus.hpp"

namespace citeval {

enum class TaskKind {
  kDirectAuthor,
  kDirectAuthorMeta,
  kIndirectTitle,
  kSidStage1,
  kSidStage2,
};

std::string_view task_kind_name(TaskKind kind) noexcept;
std::optional<TaskKind> parse_task_kind(std::string_view name) noexcept;
bool is_author_task(TaskKind kind) noexcept;

/// A single rendered prompt job.
struct AttributionTask {
  TaskKind kind = TaskKind::kIndirectTitle;
  RecordKey record_key;
  std::string rendered_prompt;
  std::string template_hash;
  // Set when a builder accepted degenerate input (empty abstract, no authors).
  bool degenerate = false;
};

enum class VerdictKind { kPass, kAuthorList, kTitle, kUnparseable };

std::string_view verdict_kind_name(VerdictKind kind) noexcept;

struct ModelVerdict {
  std::string raw_text;
  VerdictKind kind = VerdictKind::kUnparseable;
  std::vector<std::string> authors;  // kAuthorList
  std::string title;                 // kTitle
  // The grammar was found, but wrapped in extra prose.
  bool format_noncompliant = false;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
  bool usage_estimated = false;
  double latency_ms = 0.0;
};

// -- Templates --------------------------------------------------------------

enum class TemplateId { kDirectAuthor, kDirectAuthorMeta, kIndirect, kSidStage2, kRagContext };

/// Template set; defaults are the shipped texts, individual entries can be
/// replaced from files.
class PromptTemplates {
 public:
  PromptTemplates();

  static const PromptTemplates& builtin();
  /// Replaces every template for which `<dir>/<name>.txt` exists.
  static PromptTemplates from_directory(const std::string& dir);

  const std::string& text(TemplateId id) const;
  std::string hash(TemplateId id) const;
  void set(TemplateId id, std::string text);

  /// Hash over all templates, recorded in run manifests.
  std::string set_hash() const;

  static std::string_view file_name(TemplateId id);

 private:
  std::map<TemplateId, std::string> texts_;
};

/// Substitutes `{name}` placeholders. `{{` and `}}` produce literal braces.
/// Unknown or unterminated placeholders are an error.
std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& values);

// -- Builders -----------------------------------------------------------------

AttributionTask build_direct_author(const std::string& cited_title,
                                    const PromptTemplates& t = PromptTemplates::builtin());
AttributionTask build_direct_author_meta(const std::string& cited_title,
                                         const std::string& cited_abstract,
                                         const PromptTemplates& t = PromptTemplates::builtin());
AttributionTask build_indirect(const std::string& source_title,
                               const std::string& sentence,
                               const PromptTemplates& t = PromptTemplates::builtin());
/// Same prompt as build_indirect, tagged as the first SID stage.
AttributionTask build_sid_stage1(const std::string& source_title,
                                 const std::string& sentence,
                                 const PromptTemplates& t = PromptTemplates::builtin());
AttributionTask build_sid_stage2(const std::string& source_title,
                                 const std::string& sentence,
                                 const std::string& cited_abstract,
                                 std::span<const std::string> cited_authors,
                                 const PromptTemplates& t = PromptTemplates::builtin());

/// Builds the task of `kind` for a record, filling in record_key.
AttributionTask build_task(TaskKind kind, const CitationRecord& record,
                           const PromptTemplates& t = PromptTemplates::builtin());

/// Wraps a protocol prompt with a retrieved-context block.
std::string wrap_with_context(const std::string& context, const std::string& prompt,
                              const PromptTemplates& t = PromptTemplates::builtin());

// -- Parsers ------------------------------------------------------------------

/// kDirectAuthor expects a bracketed array of quoted names, kDirectAuthorMeta
/// an <authors> element. The first well-formed match wins.
ModelVerdict parse_author_reply(const std::string& raw, TaskKind protocol);

/// Pass iff the trimmed, lowercased, punctuation-free text is "pass".
ModelVerdict parse_title_reply(const std::string& raw);

/// Dispatches on the protocol.
ModelVerdict parse_reply(const std::string& raw, TaskKind protocol);

}  // namespace citeval
