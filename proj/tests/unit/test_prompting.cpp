#include "doctest.h"

#include <fstream>

#include "citeval/error.hpp"
#include "citeval/prompting.hpp"
#include "support.hpp"

using namespace citeval;

namespace {

const std::string kTitle =
    "Photo-Realistic Single Image Super-Resolution Using a Generative Adversarial Network";

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// Removes the first occurrence of `needle`, to compare prompts around it.
std::string without(std::string s, const std::string& needle) {
  auto pos = s.find(needle);
  if (pos != std::string::npos) s.erase(pos, needle.size());
  return s;
}

}  // namespace

TEST_CASE("direct author prompt carries the box rules") {
  auto t = build_direct_author("X");
  CHECK(t.kind == TaskKind::kDirectAuthor);
  CHECK(contains(t.rendered_prompt, "Paper title: \"X\""));
  CHECK(contains(t.rendered_prompt, "Format each name as \"FirstName LastName\""));
  CHECK(contains(t.rendered_prompt, "Return [\"pass\"] if authors cannot be determined"));
  CHECK(t.template_hash == PromptTemplates::builtin().hash(TemplateId::kDirectAuthor));
  CHECK_FALSE(t.degenerate);
  CHECK_THROWS_AS(build_direct_author("  "), Error);
}

TEST_CASE("embedded quotes are escaped") {
  auto t = build_direct_author("The \"Best\" Title");
  CHECK(contains(t.rendered_prompt, "Paper title: \"The \\\"Best\\\" Title\""));
  // Still one instruction block: a single title line, one Rules header.
  std::size_t count = 0;
  for (auto p = t.rendered_prompt.find("Rules:"); p != std::string::npos;
       p = t.rendered_prompt.find("Rules:", p + 1))
    ++count;
  CHECK(count == 1);
  // Braces in inputs are data, not placeholders.
  CHECK(contains(build_direct_author("{title}").rendered_prompt, "\"{title}\""));
}

TEST_CASE("prompts for two titles differ only in the title") {
  auto a = build_direct_author("First Title").rendered_prompt;
  auto b = build_direct_author("Another").rendered_prompt;
  CHECK(a != b);
  CHECK(without(a, "First Title") == without(b, "Another"));
  CHECK(build_direct_author("First Title").rendered_prompt == a);
}

TEST_CASE("direct author with metadata") {
  auto t = build_direct_author_meta(kTitle, "An abstract.");
  CHECK(contains(t.rendered_prompt, "<authors>Name1, Name2, Name3</authors>"));
  CHECK(contains(t.rendered_prompt, "Use <authors>pass</authors> if authors cannot be determined"));
  CHECK(contains(t.rendered_prompt, "Abstract: \"An abstract.\""));
  CHECK_FALSE(t.degenerate);
  CHECK(build_direct_author_meta(kTitle, "An abstract.").rendered_prompt == t.rendered_prompt);

  auto d = build_direct_author_meta(kTitle, "");
  CHECK(d.degenerate);
  CHECK_THROWS_AS(build_direct_author_meta("", "x"), Error);
}

TEST_CASE("indirect prompt structure") {
  const std::string sentence =
      "non-integer ratios between the spatial dimension sizes of the input and output";
  auto t = build_indirect("A Source Paper", sentence);
  CHECK(t.kind == TaskKind::kIndirectTitle);
  CHECK(t.rendered_prompt ==
        "I have taken a sentence from the research paper titled \"A Source Paper\", give me the "
        "research paper that this sentence is citing. If you cannot come up with the research "
        "paper, write 'pass.' Don't write anything else.\nSentence: " +
            sentence);
  CHECK(build_indirect("A Source Paper", sentence).rendered_prompt == t.rendered_prompt);
  CHECK_NOTHROW(build_indirect("T", "word"));
  CHECK_THROWS_AS(build_indirect("T", ""), Error);
  CHECK_THROWS_AS(build_indirect("", "s"), Error);

  auto s1 = build_sid_stage1("A Source Paper", sentence);
  CHECK(s1.kind == TaskKind::kSidStage1);
  CHECK(s1.rendered_prompt == t.rendered_prompt);
}

TEST_CASE("SID stage 2 prompt") {
  std::vector<std::string> authors{"Christian Ledig", "Lucas Theis"};
  auto t = build_sid_stage2("Source", "A sentence.", "Abstract text", authors);
  CHECK(contains(t.rendered_prompt, "Must verify if the sentence cites the paper"));
  CHECK(contains(t.rendered_prompt, "- Authors: \"Christian Ledig, Lucas Theis\""));
  CHECK(contains(t.rendered_prompt, "- Abstract: \"Abstract text\""));
  CHECK_FALSE(t.degenerate);
  CHECK(build_sid_stage2("Source", "A sentence.", "Abstract text", authors).rendered_prompt ==
        t.rendered_prompt);

  auto d = build_sid_stage2("Source", "A sentence.", "Abstract text", {});
  CHECK(d.degenerate);
  CHECK_FALSE(contains(d.rendered_prompt, "Authors:"));
  CHECK(contains(d.rendered_prompt, "- Abstract: \"Abstract text\""));
  CHECK_THROWS_AS(build_sid_stage2("", "s", "a", authors), Error);
}

TEST_CASE("build_task dispatches on the kind and keys the task") {
  auto r = testsupport::make_record("Robotics", "http://x/1", 5, "Cited");
  for (auto k : {TaskKind::kDirectAuthor, TaskKind::kDirectAuthorMeta, TaskKind::kIndirectTitle,
                 TaskKind::kSidStage1, TaskKind::kSidStage2}) {
    auto t = build_task(k, r);
    CHECK(t.kind == k);
    CHECK(t.record_key == r.key());
    CHECK(parse_task_kind(task_kind_name(k)) == k);
  }
  CHECK(build_task(TaskKind::kDirectAuthor, r).rendered_prompt ==
        build_direct_author("Cited").rendered_prompt);
}

TEST_CASE("template rendering") {
  CHECK(render_template("a {x} b", {{"x", "1"}}) == "a 1 b");
  CHECK(render_template("{{literal}} {x}", {{"x", "2"}}) == "{literal} 2");
  CHECK_THROWS_AS(render_template("{missing}", {}), Error);
  CHECK_THROWS_AS(render_template("{open", {{"open", ""}}), Error);

  auto ctx = wrap_with_context("[1] Title: T", "PROMPT");
  CHECK(ctx == "Context:\n[1] Title: T\n\nPROMPT");
}

TEST_CASE("templates load from a directory and change the hash") {
  testsupport::TempDir dir("templates");
  const auto before = PromptTemplates::builtin().set_hash();
  CHECK(PromptTemplates::from_directory(dir.str()).set_hash() == before);
  {
    std::ofstream(dir.path() / "indirect.txt") << "Title {title}; sentence {sentence}\n";
  }
  auto t = PromptTemplates::from_directory(dir.str());
  CHECK(t.text(TemplateId::kIndirect) == "Title {title}; sentence {sentence}");
  CHECK(t.set_hash() != before);
  CHECK(build_indirect("A", "b", t).rendered_prompt == "Title A; sentence b");
  CHECK(build_indirect("A", "b", t).template_hash != build_indirect("A", "b").template_hash);
}

TEST_CASE("author reply grammar, plain array") {
  auto v = parse_author_reply(R"(["John Smith", "Maria Garcia", "Wei Zhang"])",
                              TaskKind::kDirectAuthor);
  CHECK(v.kind == VerdictKind::kAuthorList);
  CHECK(v.authors == std::vector<std::string>{"John Smith", "Maria Garcia", "Wei Zhang"});
  CHECK_FALSE(v.format_noncompliant);

  CHECK(parse_author_reply(R"(["pass"])", TaskKind::kDirectAuthor).kind == VerdictKind::kPass);
  CHECK(parse_author_reply(R"(["Pass"])", TaskKind::kDirectAuthor).kind == VerdictKind::kPass);

  auto prose = parse_author_reply("Sure! The authors are [\"A B\", \"C D\"] as far as I know.",
                                  TaskKind::kDirectAuthor);
  CHECK(prose.kind == VerdictKind::kAuthorList);
  CHECK(prose.authors.size() == 2);
  CHECK(prose.format_noncompliant);

  // Curly quotes from chatty models are accepted.
  auto curly = parse_author_reply("[\xE2\x80\x9C" "A B\xE2\x80\x9D]", TaskKind::kDirectAuthor);
  CHECK(curly.kind == VerdictKind::kAuthorList);

  CHECK(parse_author_reply("The authors are unknown.", TaskKind::kDirectAuthor).kind ==
        VerdictKind::kUnparseable);
  CHECK(parse_author_reply("[]", TaskKind::kDirectAuthor).kind == VerdictKind::kUnparseable);
  CHECK(parse_author_reply("[1, 2]", TaskKind::kDirectAuthor).kind == VerdictKind::kUnparseable);
  // The other author grammar is not accepted.
  CHECK(parse_author_reply("<authors>A B</authors>", TaskKind::kDirectAuthor).kind ==
        VerdictKind::kUnparseable);
}

TEST_CASE("author reply grammar, XML element") {
  CHECK(parse_author_reply("<authors>pass</authors>", TaskKind::kDirectAuthorMeta).kind ==
        VerdictKind::kPass);
  auto v = parse_author_reply("<authors>John Smith, Maria Garcia</authors>",
                              TaskKind::kDirectAuthorMeta);
  CHECK(v.kind == VerdictKind::kAuthorList);
  CHECK(v.authors == std::vector<std::string>{"John Smith", "Maria Garcia"});
  CHECK_FALSE(v.format_noncompliant);

  auto wrapped = parse_author_reply("Here you go:\n<authors>A B</authors>\nThanks",
                                    TaskKind::kDirectAuthorMeta);
  CHECK(wrapped.kind == VerdictKind::kAuthorList);
  CHECK(wrapped.format_noncompliant);

  CHECK(parse_author_reply("The authors are unknown.", TaskKind::kDirectAuthorMeta).kind ==
        VerdictKind::kUnparseable);
  CHECK(parse_author_reply("<authors> , </authors>", TaskKind::kDirectAuthorMeta).kind ==
        VerdictKind::kUnparseable);
  CHECK(parse_author_reply(R"(["A B"])", TaskKind::kDirectAuthorMeta).kind ==
        VerdictKind::kUnparseable);
  CHECK_THROWS_AS(parse_author_reply("x", TaskKind::kIndirectTitle), Error);
}

TEST_CASE("title reply grammar") {
  CHECK(parse_title_reply("pass.").kind == VerdictKind::kPass);
  CHECK(parse_title_reply("  Pass ").kind == VerdictKind::kPass);
  CHECK(parse_title_reply("PASS!").kind == VerdictKind::kPass);

  auto v = parse_title_reply(kTitle);
  CHECK(v.kind == VerdictKind::kTitle);
  CHECK(v.title == kTitle);
  CHECK(parse_title_reply("  " + kTitle + "\n").title == kTitle);

  CHECK(parse_title_reply("pass on this one").kind == VerdictKind::kTitle);
  CHECK(parse_title_reply("").kind == VerdictKind::kUnparseable);
  CHECK(parse_title_reply("   ").kind == VerdictKind::kUnparseable);
  // Author grammars are not titles.
  CHECK(parse_title_reply(R"(["John Smith"])").kind == VerdictKind::kUnparseable);
  CHECK(parse_title_reply("<authors>John Smith</authors>").kind == VerdictKind::kUnparseable);
  // A bracketed title that is not a JSON array stays a title.
  CHECK(parse_title_reply("[Re] Deep Nets").kind == VerdictKind::kTitle);
}

TEST_CASE("parse_reply dispatches on the protocol") {
  CHECK(parse_reply("pass", TaskKind::kIndirectTitle).kind == VerdictKind::kPass);
  CHECK(parse_reply("pass", TaskKind::kSidStage2).kind == VerdictKind::kPass);
  CHECK(parse_reply("pass", TaskKind::kDirectAuthor).kind == VerdictKind::kUnparseable);
  CHECK(parse_reply("<authors>pass</authors>", TaskKind::kDirectAuthorMeta).kind ==
        VerdictKind::kPass);
  CHECK(parse_reply("x", TaskKind::kIndirectTitle).raw_text == "x");
}
