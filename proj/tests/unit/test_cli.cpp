#include <doctest.h>

#include <sstream>
#include <sys/wait.h>

#include "bfad/evaluation.hpp"
#include "cli.hpp"
#include "fixtures.hpp"
#include "stub_server.hpp"
#include "synth.hpp"
#include "temp_dir.hpp"

using namespace bfad;
using bfad::testing::TempDir;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run bfad_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bfad");
  std::ostringstream out, err;
  const int code = bfad::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string fixture(const std::string& name) {
  return (std::filesystem::path(BFAD_FIXTURES) / "scanner" / name).string();
}

const CriticalFunctionRegistry& registry() {
  static const auto r = load_default_registry();
  return r;
}

// Writes n webshell-like and n benign-like files plus a manifest.
std::filesystem::path write_corpus(const TempDir& dir, std::uint64_t seed, std::size_t n) {
  bfad::testing::SynthGenerator gen(seed, registry());
  DatasetManifest m;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const Label label = i < n ? Label::Webshell : Label::Benign;
    m.entries.push_back({dir.write("corpus/f" + std::to_string(i) + ".php", gen.make_labeled(label).content), label});
  }
  return dir.write("manifest.jsonl", to_jsonl(m));
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(BFAD_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("help lists every documented flag") {
  const auto r = bfad_cli({"--help-all"});
  CHECK(r.code == 0);
  for (const char* flag : {"--tau", "--budget-tokens", "--strategy", "--count-in-strings", "--ratio-transform",
                           "--require-label", "--seed", "--stub", "--help", "--config", "--endpoint", "--model",
                           "--embedding", "--library", "--manifest", "--output", "--csv", "--alpha", "--beta",
                           "--gamma", "--max-concurrent", "--max-retries", "--timeout", "--uniform-fallback"}) {
    INFO(flag);
    CHECK(r.out.find(flag) != std::string::npos);
  }
  for (const char* sub : {"scan", "extract", "profile", "split", "build-library", "detect", "evaluate"}) {
    CHECK(r.out.find(sub) != std::string::npos);
  }
  CHECK(bfad_cli({"detect", "--help"}).out.find("--stub") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  CHECK(bfad_cli({}).code == 1);
  CHECK(bfad_cli({"frobnicate"}).code != 0);
  CHECK(bfad_cli({"scan"}).code != 0);
  CHECK(bfad_cli({"--tau", "0", "config"}).code == 1);
  CHECK(bfad_cli({"--strategy", "all", "config"}).code == 1);
}

TEST_CASE("scan output matches the library scanner") {
  const auto path = fixture("01_basic_eval.php");
  const auto r = bfad_cli({"scan", path});
  REQUIRE(r.code == 0);
  const auto rows = json::parse(r.out);
  const auto expected = scan(read_source_file(path), registry());
  REQUIRE(rows.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(rows[i]["function"] == expected[i].function_name);
    CHECK(rows[i]["offset"] == expected[i].byte_offset);
    CHECK(rows[i]["line"] == expected[i].line);
    CHECK(rows[i]["category"] == std::string(to_string(expected[i].category)));
  }
}

TEST_CASE("scan discovers php files recursively in sorted order") {
  TempDir dir;
  dir.write("b/z.php", "<?php exec(1);");
  dir.write("a.php", "<?php eval(1);");
  dir.write("b/a.PHP", "<?php system(1);");
  dir.write("b/notes.txt", "<?php system(1);");
  const auto r = bfad_cli({"scan", dir.path().string()});
  REQUIRE(r.code == 0);
  const auto rows = json::parse(r.out);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["function"] == "eval");
  CHECK(rows[1]["function"] == "system");
  CHECK(rows[2]["function"] == "exec");
}

TEST_CASE("missing input exits 2") {
  const auto r = bfad_cli({"scan", "/nonexistent/x.php"});
  CHECK(r.code == 2);
  CHECK(r.err.find("/nonexistent/x.php") != std::string::npos);
  CHECK(bfad_cli({"extract", "/nonexistent/x.php"}).code == 2);
  CHECK(bfad_cli({"profile", "/nonexistent/m.jsonl"}).code == 2);
}

TEST_CASE("extract prints the rendered view") {
  TempDir dir;
  const std::string content = "<?php\n" + std::string(400, ' ') + "eval($x);\n" + std::string(400, ' ') + "?>";
  const auto path = dir.write("x.php", content);
  const auto r = bfad_cli({"extract", path.string(), "--tau", "20", "--strategy", "critical"});
  REQUIRE(r.code == 0);
  const auto at = content.find("eval");
  CHECK(r.out == content.substr(at - 20, 40));
}

TEST_CASE("profile of a single-label corpus exits 3") {
  TempDir dir;
  DatasetManifest m{{{dir.write("a.php", "<?php eval(1);"), Label::Webshell}}};
  const auto manifest = dir.write("m.jsonl", to_jsonl(m));
  CHECK(bfad_cli({"profile", manifest.string()}).code == 3);
}

TEST_CASE("uninformative corpus exits 3 unless uniform fallback is chosen") {
  TempDir dir;
  DatasetManifest m{{{dir.write("a.php", "<?php echo 1;"), Label::Webshell},
                     {dir.write("b.php", "<?php echo 2;"), Label::Benign}}};
  const auto manifest = dir.write("m.jsonl", to_jsonl(m));
  CHECK(bfad_cli({"profile", manifest.string()}).code == 3);
  const auto r = bfad_cli({"profile", manifest.string(), "--uniform-fallback"});
  REQUIRE(r.code == 0);
  const auto doc = json::parse(r.out);
  CHECK(doc.contains("weights"));
  CHECK(r.err.find("warning") != std::string::npos);
}

TEST_CASE("detect against an unreachable endpoint exits 4") {
  TempDir dir;
  const auto path = dir.write("a.php", "<?php eval(1);");
  const auto r = bfad_cli({"detect", path.string(), "--endpoint", "http://127.0.0.1:1/v1", "--max-retries", "0"});
  CHECK(r.code == 4);
  const auto rows = json::parse(r.out);
  CHECK(rows[0]["verdict"] == "unparseable");
  CHECK_FALSE(rows[0]["error"].get<std::string>().empty());
}

TEST_CASE("detect with a live stub endpoint") {
  bfad::testing::StubServer server;
  server.on_chat([](const httplib::Request&) {
    return bfad::testing::StubReply{200, bfad::testing::chat_body("This is a WebShell."), {}};
  });
  TempDir dir;
  const auto path = dir.write("a.php", "<?php eval(1);");
  const auto r = bfad_cli({"detect", path.string(), "--endpoint", server.base_url(), "--no-icl"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)[0]["verdict"] == "webshell");
}

TEST_CASE("evaluate with the stub is deterministic and honours the seed") {
  TempDir dir;
  const auto manifest = write_corpus(dir, 12, 15);
  auto report = [&](const std::string& seed) {
    const auto r = bfad_cli({"evaluate", manifest.string(), "--stub", "--seed", seed});
    REQUIRE(r.code == 0);
    auto j = json::parse(r.out);
    for (auto& row : j["per_file"]) row.erase("latency_ms");
    return j;
  };
  const auto a = report("3");
  const auto b = report("3");
  CHECK(a == b);
  CHECK(a["config"]["seed"] == 3);
  CHECK(a["config"].contains("manifest_fingerprint"));
  CHECK(a["per_file"].size() == 12);
  const auto c = report("4");
  CHECK(c["per_file"] != a["per_file"]);
}

TEST_CASE("split, profile, build-library and detect compose") {
  TempDir dir;
  const auto manifest = write_corpus(dir, 13, 10);
  const auto lib_m = dir / "lib.jsonl";
  const auto eval_m = dir / "eval.jsonl";
  auto r = bfad_cli({"split", manifest.string(), "--library-out", lib_m.string(), "--eval-out", eval_m.string()});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["library"] == 12);

  const auto weights = dir / "weights.json";
  r = bfad_cli({"profile", lib_m.string(), "--output", weights.string()});
  REQUIRE(r.code == 0);
  const auto library = dir / "library";
  r = bfad_cli({"build-library", lib_m.string(), "--weights", weights.string(), "--library", library.string()});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["profiles"] == 12);

  const auto out = dir / "out/report.json";
  const auto csv = dir / "out/report.csv";
  r = bfad_cli({"detect", "--manifest", eval_m.string(), "--library", library.string(), "--stub", "--output",
           out.string(), "--csv", csv.string()});
  REQUIRE(r.code == 0);
  const auto report = json::parse(bfad::testing::slurp(out));
  CHECK(report["per_file"].size() == 8);
  for (const auto& row : report["per_file"]) CHECK_FALSE(row["demonstration_id"].get<std::string>().empty());
  CHECK(std::filesystem::exists(csv));

  r = bfad_cli({"detect", "--manifest", eval_m.string(), "--library", library.string(), "--stub", "--embedding-dimension",
           "64"});
  CHECK(r.code == 1);
}

TEST_CASE("config precedence: flag over file over default") {
  TempDir dir;
  const auto cfg = dir.write("c.json", R"({"tau": 111, "seed": 5})");
  auto j = json::parse(bfad_cli({"config", "--config", cfg.string()}).out);
  CHECK(j["tau"] == 111);
  CHECK(j["seed"] == 5);
  CHECK(j["budget_tokens"] == 7168);
  j = json::parse(bfad_cli({"config", "--config", cfg.string(), "--tau", "222"}).out);
  CHECK(j["tau"] == 222);
  CHECK(j["seed"] == 5);
  CHECK(bfad_cli({"config", "--config", dir.write("bad.json", R"({"taux": 1})").string()}).code == 1);
}

TEST_CASE("the installed binary reports exit codes") {
  TempDir dir;
  CHECK(run_binary("--help") == 0);
  CHECK(run_binary("scan " + fixture("01_basic_eval.php")) == 0);
  CHECK(run_binary("scan /nonexistent/x.php") == 2);
  DatasetManifest m{{{dir.write("a.php", "<?php eval(1);"), Label::Webshell}}};
  CHECK(run_binary("profile " + dir.write("m.jsonl", to_jsonl(m)).string()) == 3);
  CHECK(run_binary("detect " + (dir / "a.php").string() + " --endpoint http://127.0.0.1:1/v1 --max-retries 0") == 4);
}
