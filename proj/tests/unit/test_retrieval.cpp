#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "bfad/retrieval.hpp"
#include "synth.hpp"
#include "temp_dir.hpp"

using namespace bfad;

namespace {

constexpr auto PE = BehaviorCategory::ProgramExecution;
constexpr auto CE = BehaviorCategory::CodeExecution;
constexpr auto OB = BehaviorCategory::ObfuscationAndEncryption;

const CriticalFunctionRegistry& registry() {
  static const auto r = load_default_registry();
  return r;
}

BehavioralProfile profile_of(const std::string& id, const std::string& content, const EmbeddingProvider& provider,
                             std::optional<Label> label = std::nullopt, std::size_t tau = 100) {
  SourceFile f{id, content};
  auto occ = scan(f, registry());
  ExtractionConfig cfg;
  cfg.tau = tau;
  auto view = extract_view(f, occ, cfg);
  return build_profile(id, f, view, occ, provider, label);
}

// Returns fixed vectors for known texts; everything else maps to e0.
class TableProvider final : public EmbeddingProvider {
 public:
  explicit TableProvider(std::map<std::string, Embedding> table) : table_(std::move(table)) {}
  std::string id() const override { return "table"; }
  std::size_t dimension() const override { return 3; }
  Embedding embed(std::string_view text) const override {
    auto it = table_.find(std::string(text));
    return it == table_.end() ? Embedding{1, 0, 0} : it->second;
  }

 private:
  std::map<std::string, Embedding> table_;
};

class FailingProvider final : public EmbeddingProvider {
 public:
  std::string id() const override { return "failing"; }
  std::size_t dimension() const override { return 3; }
  Embedding embed(std::string_view) const override { throw EmbeddingError("offline"); }
};

// Random unit vectors per text, stable within one provider instance.
class RandomProvider final : public EmbeddingProvider {
 public:
  explicit RandomProvider(std::uint64_t seed) : seed_(seed) {}
  std::string id() const override { return "random"; }
  std::size_t dimension() const override { return 8; }
  Embedding embed(std::string_view text) const override {
    std::mt19937_64 rng(seed_ ^ fnv1a64(text));
    std::normal_distribution<double> n;
    Embedding v(8);
    for (double& x : v) x = n(rng);
    return v;
  }

 private:
  std::uint64_t seed_;
};

WeightVector random_weights(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CategoryMap<double> s;
  for (auto c : kAllCategories) s[c] = u(rng);
  return normalize_weights(s);
}

double oracle_cos(const Embedding& a, const Embedding& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double oracle_sim(const BehavioralProfile& x, const BehavioralProfile& y, const WeightVector& w) {
  double s = 0.0;
  for (auto c : kAllCategories) {
    if (x.per_category_text[c].empty() || y.per_category_text[c].empty()) continue;
    s += w[c] * oracle_cos(x.per_category_embedding[c], y.per_category_embedding[c]);
  }
  return s;
}

std::string padded(std::size_t at, const std::string& code, std::size_t total) {
  std::string s = "<?php";
  s.append(at - s.size(), ' ');
  s += code;
  s += "\n/*";
  s.append(total - s.size() - 2, '.');
  s += "*/";
  return s;
}

}  // namespace

TEST_CASE("profile with only eval windows populates one category") {
  HashedTokenProvider p;
  auto prof = profile_of("a", "<?php eval($x); echo 1;", p);
  CHECK(prof.has(CE));
  int populated = 0;
  for (auto c : kAllCategories) populated += prof.has(c) ? 1 : 0;
  CHECK(populated == 1);
  CHECK(prof.per_category_text[CE] == "<?php eval($x); echo 1;");
  CHECK(prof.per_category_embedding[CE].size() == 256);
}

TEST_CASE("file without occurrences has an empty profile") {
  HashedTokenProvider p;
  auto prof = profile_of("a", "<?php echo strlen('x');", p);
  CHECK_FALSE(prof.has_any());
  for (auto c : kAllCategories) {
    CHECK(prof.per_category_text[c].empty());
    CHECK(prof.per_category_embedding[c].empty());
  }
}

TEST_CASE("merged window is shared by the categories it anchors") {
  // eval at 100, base64_encode at 110, tau 100: windows [0,200) and [10,210) merge.
  const std::string content = padded(100, "eval($x,  base64_encode($y));", 400);
  REQUIRE(content.substr(100, 4) == "eval");
  REQUIRE(content.substr(110, 13) == "base64_encode");
  HashedTokenProvider p;
  SourceFile f{"m", content};
  auto occ = scan(f, registry());
  ExtractionConfig cfg;
  cfg.tau = 100;
  cfg.strategy = ExtractionStrategy::CriticalOnly;
  auto view = extract_view(f, occ, cfg);
  REQUIRE(view.regions.size() == 1);
  CHECK(view.regions[0].start == 0);
  CHECK(view.regions[0].end == 210);
  auto prof = build_profile("m", f, view, occ, p);
  CHECK(prof.per_category_text[CE] == content.substr(0, 210));
  CHECK(prof.per_category_text[OB] == content.substr(0, 210));
  CHECK_FALSE(prof.has(PE));
}

TEST_CASE("separate windows of one category are joined in document order") {
  const std::string content = padded(50, "system($a);", 300) + padded(50, "exec($b);", 300);
  HashedTokenProvider p;
  auto prof = profile_of("s", content, p, std::nullopt, 20);
  const auto& t = prof.per_category_text[PE];
  REQUIRE(t.find('\n') != std::string::npos);
  CHECK(t.find("system") < t.find("exec"));
}

TEST_CASE("provider failure names the file and category") {
  FailingProvider p;
  try {
    profile_of("bad.php", "<?php exec(1);", p);
    FAIL("expected ProfileError");
  } catch (const ProfileError& e) {
    CHECK(e.file_id == "bad.php");
    CHECK(e.category == PE);
    CHECK(std::string(e.what()).find("offline") != std::string::npos);
  }
}

TEST_CASE("category similarity rules") {
  HashedTokenProvider p;
  auto x = profile_of("x", "<?php eval($a);", p);
  auto y = profile_of("y", "<?php eval($a);", p);
  auto z = profile_of("z", "<?php system($a);", p);
  CHECK(category_similarity(x, y, CE) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(category_similarity(x, z, CE) == 0.0);
  CHECK(category_similarity(x, z, PE) == 0.0);

  TableProvider table({{"<?php eval($a);", {1, 0, 0}}, {"<?php eval($b);", {0, 1, 0}}});
  auto o1 = profile_of("o1", "<?php eval($a);", table);
  auto o2 = profile_of("o2", "<?php eval($b);", table);
  CHECK(category_similarity(o1, o2, CE) == 0.0);
}

TEST_CASE("self similarity equals the populated weight mass") {
  HashedTokenProvider p;
  std::mt19937_64 rng(1);
  const auto w = random_weights(rng);
  const std::string all_six =
      "<?php system($a); eval($b); array_map($f, $c); curl_init($u); phpinfo(); base64_encode($d);";
  auto full = profile_of("full", all_six, p);
  CHECK(weighted_similarity(full, full, w) == doctest::Approx(1.0).epsilon(1e-9));

  auto two = profile_of("two", "<?php system($a); eval($b);", p);
  CHECK(std::abs(weighted_similarity(two, two, w) - (w[CE] + w[PE])) <= 1e-9);
}

TEST_CASE("pairwise Sim matches a brute-force recomputation") {
  std::mt19937_64 rng(10);
  RandomProvider provider(10);
  bfad::testing::SynthGenerator gen(10, registry());
  std::vector<BehavioralProfile> profiles;
  for (int i = 0; i < 10; ++i) {
    profiles.push_back(profile_of("p" + std::to_string(i), gen.make_labeled(Label::Webshell).content, provider));
  }
  const auto w = random_weights(rng);
  for (const auto& x : profiles) {
    for (const auto& y : profiles) {
      const double s = weighted_similarity(x, y, w);
      CHECK(std::abs(s - oracle_sim(x, y, w)) <= 1e-12);
      CHECK(s == doctest::Approx(weighted_similarity(y, x, w)).epsilon(1e-15));
      CHECK(std::abs(s) <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("zero-weight categories do not affect similarity") {
  HashedTokenProvider p;
  CategoryMap<double> s;
  s[CE] = 1.0;
  const auto w = normalize_weights(s);
  auto target = profile_of("t", "<?php eval($a);", p);
  auto a = profile_of("a", "<?php eval($a);", p);
  auto b = profile_of("b", "<?php eval($a);\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n\n system($z);", p, {}, 10);
  // Force identical CodeExecution text so only ProgramExecution differs.
  b.per_category_text[CE] = a.per_category_text[CE];
  b.per_category_embedding[CE] = a.per_category_embedding[CE];
  REQUIRE(b.has(PE));
  CHECK(weighted_similarity(target, a, w) == weighted_similarity(target, b, w));
}

TEST_CASE("select_demonstration ranking") {
  HashedTokenProvider p;
  DemonstrationLibrary lib;
  lib.weights = WeightVector::uniform();
  lib.provider_id = p.id();
  lib.dimension = p.dimension();
  const std::string all_six =
      "<?php system($a); eval($b); array_map($f, $c); curl_init($u); phpinfo(); base64_encode($d);";
  lib.profiles.push_back(profile_of("c-other", "<?php system($q); echo 1;", p, Label::Benign));
  lib.profiles.push_back(profile_of("b-dup", all_six, p, Label::Webshell));
  lib.profiles.push_back(profile_of("target", all_six, p, Label::Webshell));
  lib.profiles.push_back(profile_of("a-none", "<?php echo 2;", p, Label::Benign));
  lib.validate();
  auto target = profile_of("target", all_six, p);

  SUBCASE("exact duplicate ranks first, self excluded") {
    auto top = select_demonstration(target, lib, 3);
    REQUIRE(top.size() == 3);
    CHECK(lib.profiles[top[0].index].file_id == "b-dup");
    CHECK(top[0].score == doctest::Approx(1.0).epsilon(1e-9));
    for (const auto& t : top) CHECK(lib.profiles[t.index].file_id != "target");
    CHECK(top[0].score >= top[1].score);
    CHECK(top[1].score >= top[2].score);
  }
  SUBCASE("no behavioral signal falls back to id order with a warning") {
    auto empty = profile_of("q", "<?php echo 3;", p);
    std::vector<std::string> warnings;
    auto top = select_demonstration(empty, lib, 4, LabelPolicy::Any, &warnings);
    REQUIRE(top.size() == 4);
    CHECK(lib.profiles[top[0].index].file_id == "a-none");
    CHECK(lib.profiles[top[1].index].file_id == "b-dup");
    CHECK(lib.profiles[top[2].index].file_id == "c-other");
    CHECK(lib.profiles[top[3].index].file_id == "target");
    for (const auto& t : top) CHECK(t.score == 0.0);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("no behavioral signal") != std::string::npos);
  }
  SUBCASE("label policies") {
    auto benign = select_demonstration(target, lib, 1, LabelPolicy::Benign);
    REQUIRE(benign.size() == 1);
    CHECK(lib.profiles[benign[0].index].file_id == "c-other");
    auto ws = select_demonstration(target, lib, 5, LabelPolicy::Webshell);
    REQUIRE(ws.size() == 1);
    CHECK(lib.profiles[ws[0].index].file_id == "b-dup");
    auto mix = select_demonstration(target, lib, 3, LabelPolicy::Mix);
    REQUIRE(mix.size() == 3);
    CHECK(lib.profiles[mix[0].index].label == Label::Webshell);
    CHECK(lib.profiles[mix[1].index].label == Label::Benign);
    CHECK(lib.profiles[mix[2].index].file_id == "a-none");
  }
  SUBCASE("policy names") {
    CHECK(parse_label_policy("MIX") == LabelPolicy::Mix);
    CHECK(parse_label_policy("none") == LabelPolicy::Any);
    CHECK(to_string(LabelPolicy::Benign) == "benign");
    CHECK_THROWS_AS(parse_label_policy("both"), std::invalid_argument);
  }
}

TEST_CASE("top-1 matches an exhaustive argmax and is order-independent") {
  HashedTokenProvider p;
  bfad::testing::SynthGenerator gen(50, registry());
  std::mt19937_64 rng(50);
  DemonstrationLibrary lib;
  lib.weights = random_weights(rng);
  lib.provider_id = p.id();
  lib.dimension = p.dimension();
  for (int i = 0; i < 50; ++i) {
    const Label l = i % 2 ? Label::Webshell : Label::Benign;
    lib.profiles.push_back(profile_of("lib" + std::to_string(i), gen.make_labeled(l).content, p, l));
  }
  auto shuffled = lib;
  std::shuffle(shuffled.profiles.begin(), shuffled.profiles.end(), rng);
  for (int q = 0; q < 50; ++q) {
    auto target = profile_of("q" + std::to_string(q), gen.make_labeled(q % 2 ? Label::Webshell : Label::Benign).content, p);
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t i = 0; i < lib.profiles.size(); ++i) {
      const double s = oracle_sim(target, lib.profiles[i], lib.weights);
      if (s > best_score || (s == best_score && lib.profiles[i].file_id < lib.profiles[best].file_id)) {
        best = i;
        best_score = s;
      }
    }
    auto top = select_demonstration(target, lib, 1);
    REQUIRE(top.size() == 1);
    CHECK(top[0].index == best);
    auto top_shuffled = select_demonstration(target, shuffled, 1);
    CHECK(shuffled.profiles[top_shuffled[0].index].file_id == lib.profiles[best].file_id);
  }
}

TEST_CASE("library validation") {
  HashedTokenProvider p;
  DemonstrationLibrary lib;
  lib.weights = WeightVector::uniform();
  lib.provider_id = p.id();
  lib.dimension = p.dimension();
  CHECK_THROWS_AS(lib.validate(), std::invalid_argument);
  CHECK_THROWS_AS(select_demonstration(BehavioralProfile{}, lib), std::invalid_argument);

  lib.profiles.push_back(profile_of("a", "<?php eval(1);", p, Label::Webshell));
  CHECK_NOTHROW(lib.validate());
  lib.profiles.push_back(profile_of("a", "<?php eval(2);", p, Label::Benign));
  CHECK_THROWS_AS(lib.validate(), std::invalid_argument);
  lib.profiles.back().file_id = "b";
  lib.profiles.back().label.reset();
  CHECK_THROWS_AS(lib.validate(), std::invalid_argument);
  lib.profiles.back().label = Label::Benign;
  lib.dimension = 3;
  CHECK_THROWS_AS(lib.validate(), std::invalid_argument);
  lib.dimension = 256;
  lib.weights.weights[CE] = 0.9;
  CHECK_THROWS_AS(lib.validate(), std::invalid_argument);
}

TEST_CASE("library directory round trip") {
  HashedTokenProvider p;
  bfad::testing::SynthGenerator gen(3, registry());
  DemonstrationLibrary lib;
  std::mt19937_64 rng(3);
  lib.weights = random_weights(rng);
  lib.provider_id = p.id();
  lib.dimension = p.dimension();
  for (int i = 0; i < 8; ++i) {
    const Label l = i % 2 ? Label::Webshell : Label::Benign;
    lib.profiles.push_back(profile_of("f" + std::to_string(i), gen.make_labeled(l).content, p, l));
  }
  lib.profiles.push_back(profile_of("bytes", std::string("<?php eval($x); // \xff\xfe"), p, Label::Webshell));

  bfad::testing::TempDir dir;
  save_library(dir.path(), lib);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const auto back = load_library(dir.path());
  REQUIRE(back.profiles.size() == lib.profiles.size());
  CHECK(back.provider_id == lib.provider_id);
  CHECK(back.dimension == lib.dimension);
  for (auto c : kAllCategories) CHECK(back.weights[c] == lib.weights[c]);
  for (std::size_t i = 0; i + 1 < lib.profiles.size(); ++i) {
    const auto& a = lib.profiles[i];
    const auto& b = back.profiles[i];
    CHECK(a.file_id == b.file_id);
    CHECK(a.label == b.label);
    CHECK(a.view_text == b.view_text);
    for (auto c : kAllCategories) {
      CHECK(a.per_category_text[c] == b.per_category_text[c]);
      CHECK(a.per_category_embedding[c] == b.per_category_embedding[c]);
    }
  }
  // Raw bytes survive in view.txt even when they are not valid UTF-8.
  CHECK(back.profiles.back().view_text == lib.profiles.back().view_text);

  CHECK_THROWS(load_library(dir / "missing"));
}
