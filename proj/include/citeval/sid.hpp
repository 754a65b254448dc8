#pragma once

#include <functional>
#include <string>

#include "citeval/corpus.hpp"
#include "citeval/gateway.hpp"
#include "citeval/prompting.hpp"

namespace citeval {

/// Accepts a generated title against the ground-truth title.
using TitleJudge = std::function<bool(const std::string& generated, const std::string& truth)>;

struct SidOutcome {
  ModelVerdict final_verdict;
  ModelVerdict stage1_verdict;
  bool escalated = false;
  int calls = 0;
  // Template hash of the prompt that produced final_verdict.
  std::string template_hash;
};

/// Sequential indirect-then-direct prompting. Stage 1 is the indirect query;
/// a Pass, an unparseable reply, or a judge-rejected title escalates to the
/// metadata-enriched stage 2. Never more than two model calls.
SidOutcome run_sid(const CitationRecord& record, const Gateway& gateway,
                   const GenerationConfig& config, const TitleJudge& judge,
                   const PromptTemplates& templates = PromptTemplates::builtin(),
                   const std::function<std::string(const std::string&)>& decorate = nullptr);

}  // namespace citeval
