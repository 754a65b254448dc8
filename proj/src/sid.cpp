#include "citeval/sid.hpp"

namespace citeval {

namespace {

ModelVerdict call(const AttributionTask& task, const Gateway& gateway,
                  const GenerationConfig& config, const char* stage,
                  const std::function<std::string(const std::string&)>& decorate) {
  GatewayResult r;
  try {
    r = gateway.complete(decorate ? decorate(task.rendered_prompt) : task.rendered_prompt,
                         config);
  } catch (const Error& e) {
    throw Error(e.code(), std::string("SID ") + stage + ": " + e.what());
  }
  ModelVerdict v = parse_title_reply(r.completion_text);
  v.prompt_tokens = r.prompt_tokens;
  v.completion_tokens = r.completion_tokens;
  v.usage_estimated = r.usage_estimated;
  v.latency_ms = r.latency_ms;
  return v;
}

}  // namespace

SidOutcome run_sid(const CitationRecord& record, const Gateway& gateway,
                   const GenerationConfig& config, const TitleJudge& judge,
                   const PromptTemplates& templates,
                   const std::function<std::string(const std::string&)>& decorate) {
  SidOutcome out;
  auto stage1 = build_task(TaskKind::kSidStage1, record, templates);
  out.stage1_verdict = call(stage1, gateway, config, "stage 1", decorate);
  out.calls = 1;

  const bool accepted = out.stage1_verdict.kind == VerdictKind::kTitle &&
                        judge(out.stage1_verdict.title, record.cited_title);
  if (accepted) {
    out.final_verdict = out.stage1_verdict;
    out.template_hash = stage1.template_hash;
    return out;
  }

  auto stage2 = build_task(TaskKind::kSidStage2, record, templates);
  out.final_verdict = call(stage2, gateway, config, "stage 2", decorate);
  out.final_verdict.prompt_tokens += out.stage1_verdict.prompt_tokens;
  out.final_verdict.completion_tokens += out.stage1_verdict.completion_tokens;
  out.final_verdict.usage_estimated |= out.stage1_verdict.usage_estimated;
  out.escalated = true;
  out.calls = 2;
  out.template_hash = stage2.template_hash;
  return out;
}

}  // namespace citeval
