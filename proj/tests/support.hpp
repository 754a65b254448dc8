// Helpers shared by the unit and acceptance tests.
#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "citeval/corpus.hpp"
#include "citeval/gateway.hpp"
#include "json.hpp"

namespace testsupport {

inline std::string fixture(const std::string& name) {
  return std::string(CITEVAL_FIXTURES) + "/" + name;
}

inline citeval::CitationRecord make_record(std::string category, std::string link,
                                           std::uint64_t id, std::string title,
                                           std::vector<std::string> authors = {"Ada Lovelace"},
                                           std::string abstract = "An abstract.") {
  citeval::CitationRecord r;
  r.category = std::move(category);
  r.source_link = std::move(link);
  r.source_title = "Source paper";
  r.sentence_id = id;
  r.sentence = "A sentence citing prior work.";
  r.citation_text = "Some citation";
  r.cited_paper_id = "id:" + std::to_string(id);
  r.cited_title = std::move(title);
  r.cited_abstract = std::move(abstract);
  r.cited_authors = std::move(authors);
  return r;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("citeval_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

// Chat completion reply in the wire format the gateway parses.
inline citeval::HttpReply chat_reply(const std::string& content, int prompt_tokens = -1,
                                     int completion_tokens = -1) {
  nlohmann::json j = {
      {"choices", nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
  if (prompt_tokens >= 0)
    j["usage"] = {{"prompt_tokens", prompt_tokens}, {"completion_tokens", completion_tokens}};
  return {200, j.dump(), citeval::TransportFailure::kNone, ""};
}

// The user message of a chat request body.
inline std::string prompt_of(const citeval::HttpRequest& req) {
  auto j = nlohmann::json::parse(req.body);
  return j["messages"][0]["content"].get<std::string>();
}

// Transport answering every prompt through `answer`.
inline std::shared_ptr<citeval::Transport> answering(
    std::function<std::string(const std::string& prompt)> answer) {
  return std::make_shared<citeval::FunctionTransport>(
      [answer = std::move(answer)](const citeval::HttpRequest& req) {
        return chat_reply(answer(prompt_of(req)), 10, 5);
      });
}

inline citeval::RetryPolicy no_sleep(int attempts = 5) {
  citeval::RetryPolicy p;
  p.max_attempts = attempts;
  p.sleep = [](std::chrono::milliseconds) {};
  return p;
}

inline citeval::GenerationConfig generation() {
  citeval::GenerationConfig g;
  g.model_name = "stub-model";
  g.endpoint_url = "http://stub.invalid/v1/chat/completions";
  return g;
}

// Random lowercase string of length in [0, max_len] over the first `alphabet` letters.
inline std::string random_string(std::mt19937_64& rng, std::size_t max_len, int alphabet) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> ch(0, alphabet - 1);
  std::string s(len(rng), 'a');
  for (auto& c : s) c = static_cast<char>('a' + ch(rng));
  return s;
}

// Answers every protocol with the ground truth of the record the prompt was
// built from. Records are recognised by their sentence or cited title.
inline std::function<std::string(const std::string&)> oracle(const citeval::Corpus& corpus) {
  return [&corpus](const std::string& prompt) -> std::string {
    const bool stage2 = prompt.find("Must verify if the sentence") != std::string::npos;
    const bool meta = prompt.find("<authors>Name1") != std::string::npos;
    const bool direct = meta || prompt.find("Format each name") != std::string::npos;
    for (const auto& r : corpus.records()) {
      if (direct) {
        if (prompt.find("Paper title: \"" + r.cited_title + "\"") == std::string::npos) continue;
        if (meta) return "<authors>" + citeval::text::join(r.cited_authors, ", ") + "</authors>";
        return nlohmann::json(r.cited_authors).dump();
      }
      if (prompt.find(r.sentence) != std::string::npos &&
          prompt.find(r.source_title) != std::string::npos)
        return r.cited_title;
    }
    (void)stage2;
    return "no idea";
  };
}

}  // namespace testsupport
