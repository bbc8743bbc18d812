#include <doctest.h>

#include "bfad/config.hpp"
#include "temp_dir.hpp"

using namespace bfad;
using nlohmann::json;

TEST_CASE("defaults") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.tau == 300);
  CHECK(c.budget_tokens == 7168);
  CHECK(c.strategy == ExtractionStrategy::Hybrid);
  CHECK(c.llm.temperature == 0.0);
  CHECK(c.make_embedding_provider()->id() == "hashed-token-256");
  CHECK(c.pipeline().workers == c.llm.max_concurrent_requests);
  CHECK(c.registry().size() == load_default_registry().size());
}

TEST_CASE("json overlay") {
  RunConfig c;
  apply_config_json(c, json::parse(R"({
    "tau": 100, "budget_tokens": 2000, "strategy": "critical", "alpha": 0.5, "beta": 2, "gamma": 0,
    "ratio_transform": "log1p", "count_in_strings": true, "require_label": "mix", "seed": 9,
    "library_fraction": 0.5,
    "embedding": {"provider": "hashed", "hashed_dimension": 64},
    "llm": {"endpoint": "http://h:1/v1", "model": "m", "temperature": 0.2, "max_concurrent": 8, "timeout_s": 5}
  })"));
  CHECK(c.tau == 100);
  CHECK(c.extraction().tau == 100);
  CHECK(c.extraction().budget_tokens == 2000);
  CHECK(c.strategy == ExtractionStrategy::CriticalOnly);
  CHECK(c.score.alpha == 0.5);
  CHECK(c.score.beta == 2.0);
  CHECK(c.score.gamma == 0.0);
  CHECK(c.ratio_transform == RatioTransform::Log1p);
  CHECK(c.scan.count_in_strings);
  CHECK(c.label_policy == LabelPolicy::Mix);
  CHECK(c.seed == 9);
  CHECK(c.make_embedding_provider()->dimension() == 64);
  CHECK(c.llm.endpoint_url == "http://h:1/v1");
  CHECK(c.llm.model_id == "m");
  CHECK(c.llm.max_concurrent_requests == 8);
  CHECK(c.pipeline().workers == 8);
  CHECK(c.llm.request_timeout_s == 5.0);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("unknown keys and bad types are rejected") {
  RunConfig c;
  CHECK_THROWS_AS(apply_config_json(c, json::parse(R"({"taus": 1})")), ConfigError);
  CHECK_THROWS_AS(apply_config_json(c, json::parse(R"({"llm": {"url": "x"}})")), ConfigError);
  CHECK_THROWS_AS(apply_config_json(c, json::parse(R"({"embedding": {"size": 3}})")), ConfigError);
  CHECK_THROWS_AS(apply_config_json(c, json::parse(R"({"tau": "big"})")), ConfigError);
  CHECK_THROWS_AS(apply_config_json(c, json::parse(R"({"strategy": "everything"})")), ConfigError);
  CHECK_THROWS_AS(apply_config_json(c, json::parse(R"([1, 2])")), ConfigError);
}

TEST_CASE("validation") {
  auto bad = [](auto mutate) {
    RunConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.tau = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.budget_tokens = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.score.beta = -1; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.library_fraction = 1.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.llm.temperature = -1; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.embedding = EmbeddingKind::Http; }).validate(), ConfigError);
}

TEST_CASE("file loading layers over a base") {
  bfad::testing::TempDir dir;
  RunConfig base;
  base.seed = 5;
  base.tau = 50;
  const auto path = dir.write("c.json", R"({"tau": 120})");
  const auto c = load_run_config(path, base);
  CHECK(c.tau == 120);
  CHECK(c.seed == 5);
  CHECK_THROWS_AS(load_run_config(dir.write("bad.json", "{"), base), ConfigError);
  CHECK_THROWS(load_run_config(dir / "missing.json"));
}

TEST_CASE("effective config names the key variable, never the key") {
  ::setenv("BFAD_TEST_SECRET", "sk-very-secret", 1);
  RunConfig c;
  c.llm.api_key_env_var = "BFAD_TEST_SECRET";
  const auto dumped = to_json(c).dump();
  CHECK(dumped.find("BFAD_TEST_SECRET") != std::string::npos);
  CHECK(dumped.find("sk-very-secret") == std::string::npos);
  RunConfig round;
  CHECK_NOTHROW(apply_config_json(round, to_json(c)));
  CHECK(round.llm.api_key_env_var == "BFAD_TEST_SECRET");
  CHECK(round.tau == c.tau);
}
