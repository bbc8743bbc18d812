#include "bfad/embedding.hpp"

#include <cctype>
#include <algorithm>
#include <cmath>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "bfad/common.hpp"
#include "http_util.hpp"

namespace bfad {

std::vector<Embedding> EmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

HashedTokenProvider::HashedTokenProvider(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

std::string HashedTokenProvider::id() const { return "hashed-token-" + std::to_string(dimension_); }

Embedding HashedTokenProvider::embed(std::string_view text) const {
  Embedding v(dimension_, 0.0);
  std::string token;
  bool any = false;
  auto flush = [&] {
    if (token.empty()) return;
    v[fnv1a64(token) % dimension_] += 1.0;
    token.clear();
    any = true;
  };
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::isalnum(u)) {
      token.push_back(static_cast<char>(std::tolower(u)));
    } else {
      flush();
    }
  }
  flush();
  if (!any && !text.empty()) v[fnv1a64(text) % dimension_] = 1.0;

  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingConfig config) : config_(std::move(config)) {
  if (config_.endpoint_url.empty()) throw std::invalid_argument("embedding endpoint URL is empty");
  if (config_.dimension == 0) throw std::invalid_argument("embedding dimension must be positive");
}

std::string HttpEmbeddingProvider::id() const { return "http:" + config_.model_id; }

Embedding HttpEmbeddingProvider::embed(std::string_view text) const {
  std::vector<std::string> one{std::string(text)};
  return std::move(embed_batch(one).front());
}

std::vector<Embedding> HttpEmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
  if (texts.empty()) return {};
  auto parts = detail::split_endpoint(config_.endpoint_url);
  httplib::Client client(parts.scheme_host_port);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (auto key = detail::env_or_empty(config_.api_key_env_var); !key.empty()) {
    headers.emplace("Authorization", "Bearer " + key);
  }
  nlohmann::json body = {{"input", texts}, {"model", config_.model_id}};
  auto res = client.Post(parts.path_prefix + "/embeddings", headers, body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace), "application/json");
  if (!res) throw EmbeddingError("embedding request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw EmbeddingError("embedding endpoint returned HTTP " + std::to_string(res->status));

  std::vector<Embedding> out;
  try {
    auto j = nlohmann::json::parse(res->body);
    const auto& data = j.at("data");
    if (data.size() != texts.size()) throw EmbeddingError("embedding response has wrong number of vectors");
    out.resize(texts.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::size_t slot = data[i].value("index", i);
      if (slot >= out.size()) throw EmbeddingError("embedding response index out of range");
      out[slot] = data[i].at("embedding").get<Embedding>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw EmbeddingError(std::string("malformed embedding response: ") + e.what());
  }
  for (const auto& v : out) {
    if (v.size() != config_.dimension) {
      throw EmbeddingError("embedding dimension " + std::to_string(v.size()) + " != configured " +
                           std::to_string(config_.dimension));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw EmbeddingError("embedding contains a non-finite value");
    }
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || a.size() != b.size()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  double cos = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(cos, -1.0, 1.0);
}

}  // namespace bfad
