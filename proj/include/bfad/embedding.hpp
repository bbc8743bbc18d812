#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bfad {

using Embedding = std::vector<double>;

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maps text to a fixed-dimension vector. Implementations must be
/// deterministic and safe to call from several threads at once.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual Embedding embed(std::string_view text) const = 0;

  /// Default implementation embeds one text at a time.
  virtual std::vector<Embedding> embed_batch(std::span<const std::string> texts) const;
};

/// Offline provider: bag of lowercased alphanumeric tokens hashed into
/// `dimension` buckets, L2-normalized. Text with no alphanumeric run is
/// hashed as a single token so non-empty input never maps to zero.
class HashedTokenProvider final : public EmbeddingProvider {
 public:
  explicit HashedTokenProvider(std::size_t dimension = 256);

  std::string id() const override;
  std::size_t dimension() const override { return dimension_; }
  Embedding embed(std::string_view text) const override;

 private:
  std::size_t dimension_;
};

inline constexpr std::string_view kDefaultEmbeddingModel = "st-codesearch-distilroberta-base";

struct HttpEmbeddingConfig {
  std::string endpoint_url;  // POSTs to {endpoint_url}/embeddings
  std::string model_id{kDefaultEmbeddingModel};
  std::string api_key_env_var;  // empty: no Authorization header
  std::size_t dimension = 768;
  std::chrono::milliseconds timeout{30'000};
};

/// Remote provider speaking the common embeddings wire shape:
/// {"input": [...], "model": id} -> {"data": [{"embedding": [...]}, ...]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEmbeddingConfig config);

  std::string id() const override;
  std::size_t dimension() const override { return config_.dimension; }
  Embedding embed(std::string_view text) const override;
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

 private:
  HttpEmbeddingConfig config_;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace bfad
