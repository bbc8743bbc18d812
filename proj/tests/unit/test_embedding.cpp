#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "bfad/embedding.hpp"
#include "stub_server.hpp"

using namespace bfad;
using bfad::testing::StubReply;
using bfad::testing::StubServer;

namespace {

double norm(const Embedding& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

HttpEmbeddingConfig http_config(const StubServer& server, std::size_t dim) {
  HttpEmbeddingConfig c;
  c.endpoint_url = server.base_url();
  c.dimension = dim;
  c.timeout = std::chrono::milliseconds(5000);
  return c;
}

}  // namespace

TEST_CASE("hashed provider is deterministic, normalized and sized") {
  HashedTokenProvider p;
  CHECK(p.dimension() == 256);
  CHECK(p.id() == "hashed-token-256");
  const auto a = p.embed("eval(base64_decode($_POST['x']));");
  CHECK(a.size() == 256);
  CHECK(a == p.embed("eval(base64_decode($_POST['x']));"));
  CHECK(norm(a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(norm(p.embed("+-*/ ;;")) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(norm(p.embed("")) == 0.0);
  CHECK_THROWS_AS(HashedTokenProvider(0), std::invalid_argument);
}

TEST_CASE("hashed provider tokenizes lowercase alphanumeric runs") {
  HashedTokenProvider p(64);
  CHECK(p.embed("System(ID)") == p.embed("system id"));
  CHECK(p.embed("a b a") == p.embed("a a b"));
  CHECK(p.embed("ab") != p.embed("a b"));

  // Bag-of-words counts: "x x y" has bucket weights 2 and 1.
  const auto v = p.embed("x x y");
  std::vector<double> nonzero;
  for (double x : v) {
    if (x != 0.0) nonzero.push_back(x);
  }
  std::sort(nonzero.begin(), nonzero.end());
  REQUIRE(nonzero.size() == 2);
  CHECK(nonzero[1] / nonzero[0] == doctest::Approx(2.0));
}

TEST_CASE("cosine similarity") {
  const std::vector<double> a{1, 0, 0}, b{0, 1, 0}, c{2, 0, 0}, d{-1, 0, 0};
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(a, c) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, d) == doctest::Approx(-1.0));
  CHECK(cosine_similarity(a, std::vector<double>{0, 0, 0}) == 0.0);
  CHECK(cosine_similarity(a, std::vector<double>{1, 0}) == 0.0);
  CHECK(cosine_similarity({}, {}) == 0.0);
}

TEST_CASE("http provider speaks the embeddings wire shape") {
  StubServer server;
  server.on_embeddings([](const httplib::Request& req) {
    auto j = nlohmann::json::parse(req.body);
    nlohmann::json data = nlohmann::json::array();
    const auto& input = j.at("input");
    // Reply in reverse order with explicit indices.
    for (std::size_t i = input.size(); i-- > 0;) {
      const double len = static_cast<double>(input[i].get<std::string>().size());
      data.push_back({{"index", i}, {"embedding", {len, 1.0, 0.0}}});
    }
    return StubReply{200, nlohmann::json{{"data", data}, {"model", j.at("model")}}.dump(), {}};
  });
  HttpEmbeddingProvider p(http_config(server, 3));
  CHECK(p.id() == "http:st-codesearch-distilroberta-base");
  const std::vector<std::string> texts{"a", "bbb"};
  const auto out = p.embed_batch(texts);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == Embedding{1.0, 1.0, 0.0});
  CHECK(out[1] == Embedding{3.0, 1.0, 0.0});
  CHECK(p.embed("zz") == Embedding{2.0, 1.0, 0.0});
  CHECK(p.embed_batch({}).empty());
}

TEST_CASE("http provider sends the bearer token when configured") {
  StubServer server;
  server.on_embeddings([](const httplib::Request&) {
    return StubReply{200, R"({"data":[{"embedding":[1.0]}]})", {}};
  });
  ::setenv("BFAD_TEST_EMBED_KEY", "k-123", 1);
  auto cfg = http_config(server, 1);
  cfg.api_key_env_var = "BFAD_TEST_EMBED_KEY";
  HttpEmbeddingProvider(cfg).embed("x");
  const auto seen = server.seen_headers();
  REQUIRE(seen.size() == 1);
  auto it = seen[0].find("Authorization");
  REQUIRE(it != seen[0].end());
  CHECK(it->second == "Bearer k-123");
}

TEST_CASE("http provider failures") {
  StubServer server;
  SUBCASE("wrong dimension") {
    server.on_embeddings([](const httplib::Request&) { return StubReply{200, R"({"data":[{"embedding":[1,2]}]})", {}}; });
    CHECK_THROWS_AS(HttpEmbeddingProvider(http_config(server, 3)).embed("x"), EmbeddingError);
  }
  SUBCASE("wrong count") {
    server.on_embeddings([](const httplib::Request&) { return StubReply{200, R"({"data":[]})", {}}; });
    CHECK_THROWS_AS(HttpEmbeddingProvider(http_config(server, 3)).embed("x"), EmbeddingError);
  }
  SUBCASE("malformed body") {
    server.on_embeddings([](const httplib::Request&) { return StubReply{200, "not json", {}}; });
    CHECK_THROWS_AS(HttpEmbeddingProvider(http_config(server, 3)).embed("x"), EmbeddingError);
  }
  SUBCASE("server error") {
    server.on_embeddings([](const httplib::Request&) { return StubReply{500, "{}", {}}; });
    CHECK_THROWS_AS(HttpEmbeddingProvider(http_config(server, 3)).embed("x"), EmbeddingError);
  }
  SUBCASE("non-finite value") {
    server.on_embeddings([](const httplib::Request&) { return StubReply{200, R"({"data":[{"embedding":[1e999]}]})", {}}; });
    CHECK_THROWS_AS(HttpEmbeddingProvider(http_config(server, 1)).embed("x"), EmbeddingError);
  }
  SUBCASE("unreachable") {
    HttpEmbeddingConfig c;
    c.endpoint_url = "http://127.0.0.1:1/v1";
    c.dimension = 3;
    CHECK_THROWS_AS(HttpEmbeddingProvider(c).embed("x"), EmbeddingError);
  }
}

TEST_CASE("http provider config validation") {
  CHECK_THROWS_AS(HttpEmbeddingProvider(HttpEmbeddingConfig{}), std::invalid_argument);
  HttpEmbeddingConfig c;
  c.endpoint_url = "http://127.0.0.1:9/v1";
  c.dimension = 0;
  CHECK_THROWS_AS(HttpEmbeddingProvider{c}, std::invalid_argument);
}
