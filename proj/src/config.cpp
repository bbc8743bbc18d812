#include "bfad/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace bfad {
namespace {

std::string_view to_string(EmbeddingKind kind) { return kind == EmbeddingKind::Hashed ? "hashed" : "http"; }

EmbeddingKind parse_embedding_kind(std::string_view name) {
  if (name == "hashed") return EmbeddingKind::Hashed;
  if (name == "http") return EmbeddingKind::Http;
  throw ConfigError("unknown embedding provider '" + std::string(name) + "'");
}

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_unsigned()) throw ConfigError("config key '" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

template <typename Parse>
auto parse_enum(const nlohmann::json& v, const std::string& key, Parse parse) {
  const auto text = get_as<std::string>(v, key);
  try {
    return parse(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

void apply_llm(LlmConfig& llm, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config key 'llm' must be an object");
  for (const auto& [key, v] : j.items()) {
    const std::string k = "llm." + key;
    if (key == "endpoint") {
      llm.endpoint_url = get_as<std::string>(v, k);
    } else if (key == "model") {
      llm.model_id = get_as<std::string>(v, k);
    } else if (key == "api_key_env") {
      llm.api_key_env_var = get_as<std::string>(v, k);
    } else if (key == "temperature") {
      llm.temperature = get_as<double>(v, k);
    } else if (key == "max_output_tokens") {
      llm.max_output_tokens = get_count(v, k);
    } else if (key == "timeout_s") {
      llm.request_timeout_s = get_as<double>(v, k);
    } else if (key == "max_retries") {
      llm.max_retries = get_count(v, k);
    } else if (key == "max_concurrent") {
      llm.max_concurrent_requests = get_count(v, k);
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
}

void apply_embedding(RunConfig& config, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config key 'embedding' must be an object");
  for (const auto& [key, v] : j.items()) {
    const std::string k = "embedding." + key;
    if (key == "provider") {
      config.embedding = parse_embedding_kind(get_as<std::string>(v, k));
    } else if (key == "hashed_dimension") {
      config.hashed_dimension = get_count(v, k);
    } else if (key == "endpoint") {
      config.http_embedding.endpoint_url = get_as<std::string>(v, k);
    } else if (key == "model") {
      config.http_embedding.model_id = get_as<std::string>(v, k);
    } else if (key == "dimension") {
      config.http_embedding.dimension = get_count(v, k);
    } else if (key == "api_key_env") {
      config.http_embedding.api_key_env_var = get_as<std::string>(v, k);
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  if (tau == 0) throw ConfigError("tau must be positive");
  if (budget_tokens == 0) throw ConfigError("budget_tokens must be positive");
  for (double p : {score.alpha, score.beta, score.gamma}) {
    if (!std::isfinite(p) || p < 0.0) throw ConfigError("score parameters must be finite and non-negative");
  }
  if (!(library_fraction > 0.0 && library_fraction < 1.0)) throw ConfigError("library_fraction must be in (0, 1)");
  if (embedding == EmbeddingKind::Hashed && hashed_dimension == 0) throw ConfigError("hashed_dimension must be positive");
  if (embedding == EmbeddingKind::Http) {
    if (http_embedding.endpoint_url.empty()) throw ConfigError("http embedding provider needs an endpoint");
    if (http_embedding.dimension == 0) throw ConfigError("embedding dimension must be positive");
  }
  try {
    llm.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExtractionConfig RunConfig::extraction() const {
  ExtractionConfig out;
  out.tau = tau;
  out.budget_tokens = budget_tokens;
  out.strategy = strategy;
  return out;
}

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig out;
  out.scan = scan;
  out.extraction = extraction();
  out.label_policy = label_policy;
  out.unparseable_as_webshell = unparseable_as_webshell;
  out.workers = llm.max_concurrent_requests;
  return out;
}

CriticalFunctionRegistry RunConfig::registry() const {
  return registry_path ? load_registry_from_file(*registry_path) : load_default_registry();
}

std::unique_ptr<EmbeddingProvider> RunConfig::make_embedding_provider() const {
  if (embedding == EmbeddingKind::Hashed) return std::make_unique<HashedTokenProvider>(hashed_dimension);
  return std::make_unique<HttpEmbeddingProvider>(http_embedding);
}

void apply_config_json(RunConfig& config, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "registry") {
      if (v.is_null()) {
        config.registry_path.reset();
      } else {
        config.registry_path = get_as<std::string>(v, key);
      }
    } else if (key == "tau") {
      config.tau = get_count(v, key);
    } else if (key == "budget_tokens") {
      config.budget_tokens = get_count(v, key);
    } else if (key == "strategy") {
      config.strategy = parse_enum(v, key, parse_strategy);
    } else if (key == "alpha") {
      config.score.alpha = get_as<double>(v, key);
    } else if (key == "beta") {
      config.score.beta = get_as<double>(v, key);
    } else if (key == "gamma") {
      config.score.gamma = get_as<double>(v, key);
    } else if (key == "ratio_transform") {
      config.ratio_transform = parse_enum(v, key, parse_ratio_transform);
    } else if (key == "uniform_fallback") {
      config.uniform_fallback = get_as<bool>(v, key);
    } else if (key == "count_in_strings") {
      config.scan.count_in_strings = get_as<bool>(v, key);
    } else if (key == "require_preg_e") {
      config.scan.require_preg_e_modifier = get_as<bool>(v, key);
    } else if (key == "embedding") {
      apply_embedding(config, v);
    } else if (key == "llm") {
      apply_llm(config.llm, v);
    } else if (key == "require_label") {
      config.label_policy = parse_enum(v, key, parse_label_policy);
    } else if (key == "unparseable_as_webshell") {
      config.unparseable_as_webshell = get_as<bool>(v, key);
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) throw ConfigError("config key 'seed' must be a non-negative integer");
      config.seed = v.get<std::uint64_t>();
    } else if (key == "library_fraction") {
      config.library_fraction = get_as<double>(v, key);
    } else if (key == "output") {
      config.output = get_as<std::string>(v, key);
    } else if (key == "csv") {
      config.csv = get_as<std::string>(v, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "': " + e.what());
  }
  apply_config_json(base, j);
  return base;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = {
      {"registry", c.registry_path ? nlohmann::json(c.registry_path->string()) : nlohmann::json(nullptr)},
      {"tau", c.tau},
      {"budget_tokens", c.budget_tokens},
      {"strategy", std::string(to_string(c.strategy))},
      {"alpha", c.score.alpha},
      {"beta", c.score.beta},
      {"gamma", c.score.gamma},
      {"ratio_transform", std::string(to_string(c.ratio_transform))},
      {"uniform_fallback", c.uniform_fallback},
      {"count_in_strings", c.scan.count_in_strings},
      {"require_preg_e", c.scan.require_preg_e_modifier},
      {"embedding",
       {{"provider", std::string(to_string(c.embedding))},
        {"hashed_dimension", c.hashed_dimension},
        {"endpoint", c.http_embedding.endpoint_url},
        {"model", c.http_embedding.model_id},
        {"dimension", c.http_embedding.dimension},
        {"api_key_env", c.http_embedding.api_key_env_var}}},
      {"llm",
       {{"endpoint", c.llm.endpoint_url},
        {"model", c.llm.model_id},
        {"api_key_env", c.llm.api_key_env_var},
        {"temperature", c.llm.temperature},
        {"max_output_tokens", c.llm.max_output_tokens},
        {"timeout_s", c.llm.request_timeout_s},
        {"max_retries", c.llm.max_retries},
        {"max_concurrent", c.llm.max_concurrent_requests}}},
      {"require_label", std::string(to_string(c.label_policy))},
      {"unparseable_as_webshell", c.unparseable_as_webshell},
      {"seed", c.seed},
      {"library_fraction", c.library_fraction},
  };
  if (c.output) j["output"] = c.output->string();
  if (c.csv) j["csv"] = c.csv->string();
  return j;
}

}  // namespace bfad
