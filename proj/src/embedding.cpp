#include <spdlog/spdlog.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "citeval/error.hpp"
#include "citeval/retrieval.hpp"
#include "citeval/text.hpp"
#include "json.hpp"

namespace citeval {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // final avalanche so low bits are usable for bucketing
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

void throw_for_reply(const HttpReply& reply, const std::string& what) {
  if (reply.failure != TransportFailure::kNone)
    throw Error(reply.failure == TransportFailure::kTimeout ? ErrorCode::kTimeout
                                                            : ErrorCode::kUnreachable,
                what + ": " + reply.failure_message);
  if (reply.status == 401 || reply.status == 403)
    throw Error(ErrorCode::kAuthFailure, what + ": HTTP " + std::to_string(reply.status));
  if (reply.status < 200 || reply.status >= 300)
    throw Error(ErrorCode::kUnreachable, what + ": HTTP " + std::to_string(reply.status));
}

}  // namespace

// -- HashEmbedder ---------------------------------------------------------------

std::vector<Embedding> HashEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    Embedding v(dim_, 0.0);
    for (const auto& tok : text::tokenize(t)) {
      const std::uint64_t h = fnv1a(tok, seed_);
      v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::string HashEmbedder::model_id() const {
  return "hash-embedder/d" + std::to_string(dim_) + "/s" + std::to_string(seed_);
}

// -- HttpEmbedder ---------------------------------------------------------------

HttpEmbedder::HttpEmbedder(std::shared_ptr<Transport> transport, std::string url, std::string model,
                           std::string api_key_env)
    : transport_(std::move(transport)),
      url_(std::move(url)),
      model_(std::move(model)),
      api_key_env_(std::move(api_key_env)) {}

std::vector<Embedding> HttpEmbedder::embed(std::span<const std::string> texts) const {
  if (texts.empty()) return {};
  HttpRequest req;
  req.url = url_;
  req.headers.emplace_back("Content-Type", "application/json");
  if (auto key = resolve_api_key(api_key_env_))
    req.headers.emplace_back("Authorization", "Bearer " + *key);
  req.body = json{{"input", std::vector<std::string>(texts.begin(), texts.end())},
                  {"model", model_}}
                 .dump();
  auto reply = transport_->post(req);
  throw_for_reply(reply, "embedding service");

  auto doc = json::parse(reply.body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("data") || !doc["data"].is_array())
    throw Error(ErrorCode::kMalformedResponse, "embedding response without data array");
  std::vector<Embedding> out;
  for (const auto& item : doc["data"]) {
    if (!item.contains("embedding") || !item["embedding"].is_array())
      throw Error(ErrorCode::kMalformedResponse, "embedding item without vector");
    Embedding v;
    for (const auto& x : item["embedding"]) {
      if (!x.is_number()) throw Error(ErrorCode::kMalformedResponse, "non-numeric embedding");
      v.push_back(x.get<double>());
    }
    out.push_back(std::move(v));
  }
  if (out.size() != texts.size())
    throw Error(ErrorCode::kMalformedResponse, "embedding count differs from input count");
  return out;
}

// -- CachingEmbedder ------------------------------------------------------------

CachingEmbedder::CachingEmbedder(std::shared_ptr<const Embedder> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string CachingEmbedder::key_for(const std::string& t) const {
  return text::sha256_hex(inner_->model_id() + '\n' + t);
}

std::vector<Embedding> CachingEmbedder::embed(std::span<const std::string> texts) const {
  static_assert(std::endian::native == std::endian::little, "cache format is little-endian");
  std::vector<Embedding> out(texts.size());
  std::vector<std::size_t> missing;
  std::vector<std::string> keys(texts.size());

  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys[i] = key_for(texts[i]);
    std::ifstream in(dir_ / (keys[i] + ".bin"), std::ios::binary);
    std::uint32_t dim = 0;
    if (in && in.read(reinterpret_cast<char*>(&dim), sizeof dim) && dim > 0) {
      Embedding v(dim);
      if (in.read(reinterpret_cast<char*>(v.data()),
                  static_cast<std::streamsize>(dim * sizeof(double)))) {
        out[i] = std::move(v);
        continue;
      }
    }
    missing.push_back(i);
  }

  std::lock_guard lock(mutex_);
  hits_ += texts.size() - missing.size();
  misses_ += missing.size();
  if (missing.empty()) return out;

  std::vector<std::string> todo;
  for (auto i : missing) todo.push_back(texts[i]);
  auto fresh = inner_->embed(todo);
  if (fresh.size() != todo.size())
    throw Error(ErrorCode::kEmbedderFailure, "inner embedder returned wrong count");

  std::ofstream manifest(dir_ / "manifest.tsv", std::ios::app);
  for (std::size_t j = 0; j < missing.size(); ++j) {
    const auto i = missing[j];
    const auto& v = fresh[j];
    std::ofstream bin(dir_ / (keys[i] + ".bin"), std::ios::binary | std::ios::trunc);
    const auto dim = static_cast<std::uint32_t>(v.size());
    bin.write(reinterpret_cast<const char*>(&dim), sizeof dim);
    bin.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!bin) throw Error(ErrorCode::kIo, "cannot write embedding cache entry");
    manifest << keys[i] << '\t' << dim << '\t' << inner_->model_id() << '\n';
    out[i] = v;
  }
  return out;
}

// -- HttpReranker ---------------------------------------------------------------

HttpReranker::HttpReranker(std::shared_ptr<Transport> transport, std::string base_url)
    : transport_(std::move(transport)), base_url_(std::move(base_url)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::vector<double> HttpReranker::score(const std::string& sentence,
                                        std::span<const std::string> candidates) const {
  HttpRequest req;
  req.url = base_url_ + "/score";
  req.headers.emplace_back("Content-Type", "application/json");
  req.body = json{{"sentence", sentence},
                  {"candidates", std::vector<std::string>(candidates.begin(), candidates.end())}}
                 .dump();
  auto reply = transport_->post(req);
  throw_for_reply(reply, "reranker");
  auto doc = json::parse(reply.body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("scores") || !doc["scores"].is_array())
    throw Error(ErrorCode::kMalformedResponse, "reranker response without scores");
  std::vector<double> scores;
  for (const auto& s : doc["scores"]) {
    if (!s.is_number()) throw Error(ErrorCode::kMalformedResponse, "non-numeric reranker score");
    scores.push_back(s.get<double>());
  }
  return scores;
}

std::string HttpReranker::checkpoint_hash() const {
  HttpRequest req;
  req.url = base_url_ + "/health";
  auto reply = transport_->get(req);
  throw_for_reply(reply, "reranker health");
  auto doc = json::parse(reply.body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("checkpoint_hash") || !doc["checkpoint_hash"].is_string())
    throw Error(ErrorCode::kMalformedResponse, "reranker health without checkpoint_hash");
  return doc["checkpoint_hash"].get<std::string>();
}

}  // namespace citeval
