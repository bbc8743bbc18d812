#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "bfad/embedding.hpp"
#include "bfad/evaluation.hpp"
#include "bfad/extraction.hpp"
#include "bfad/llm_detector.hpp"
#include "bfad/profiling.hpp"
#include "bfad/registry.hpp"
#include "bfad/retrieval.hpp"
#include "bfad/scanner.hpp"

namespace bfad {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EmbeddingKind { Hashed, Http };

/// Settings shared by every subcommand. Built from defaults, then a JSON
/// config file, then command-line flags.
struct RunConfig {
  std::optional<std::filesystem::path> registry_path;
  std::size_t tau = 300;
  std::size_t budget_tokens = 7168;
  ExtractionStrategy strategy = ExtractionStrategy::Hybrid;
  ScoreParams score;
  RatioTransform ratio_transform = RatioTransform::Squash;
  bool uniform_fallback = false;
  ScanOptions scan;

  EmbeddingKind embedding = EmbeddingKind::Hashed;
  std::size_t hashed_dimension = 256;
  HttpEmbeddingConfig http_embedding;

  LlmConfig llm;
  LabelPolicy label_policy = LabelPolicy::Any;
  bool unparseable_as_webshell = false;

  std::uint64_t seed = 42;
  double library_fraction = 0.6;
  std::optional<std::filesystem::path> output;
  std::optional<std::filesystem::path> csv;

  /// Throws ConfigError on out-of-range values.
  void validate() const;

  ExtractionConfig extraction() const;
  PipelineConfig pipeline() const;
  CriticalFunctionRegistry registry() const;
  std::unique_ptr<EmbeddingProvider> make_embedding_provider() const;
};

/// Overlays keys present in `j` onto `config`. Unknown keys and wrongly typed
/// values throw ConfigError.
void apply_config_json(RunConfig& config, const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Effective configuration, suitable for echoing into reports. Never contains
/// the API key itself, only the name of the variable holding it.
nlohmann::json to_json(const RunConfig& config);

}  // namespace bfad
