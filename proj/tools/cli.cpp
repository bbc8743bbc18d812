#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bfad/config.hpp"
#include "bfad/evaluation.hpp"

namespace bfad::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr auto kReplace = json::error_handler_t::replace;

// Command-line overrides. Only options the user actually passed are applied
// on top of the config file.
struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::string> registry;
  std::optional<std::size_t> tau;
  std::optional<std::size_t> budget_tokens;
  std::optional<std::string> strategy;
  std::optional<double> alpha, beta, gamma;
  std::optional<std::string> ratio_transform;
  bool count_in_strings = false;
  bool require_preg_e = false;
  bool uniform_fallback = false;
  bool unparseable_as_webshell = false;
  std::optional<std::string> require_label;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> endpoint, model, api_key_env;
  std::optional<double> temperature;
  std::optional<std::size_t> max_output_tokens;
  std::optional<double> timeout;
  std::optional<std::size_t> max_retries, max_concurrent;
  std::optional<std::string> embedding, embedding_endpoint, embedding_model;
  std::optional<std::size_t> embedding_dimension;
  std::optional<double> library_fraction;
  std::optional<std::string> output, csv;
};

void add_shared_options(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_path, "JSON config file (flags override it)");
  app.add_option("--registry", o.registry, "Registry file in `name = Category` format (default: built-in)");
  app.add_option("--tau", o.tau, "Context radius around each critical call, in bytes [300]");
  app.add_option("--budget-tokens", o.budget_tokens, "Token budget for the extracted view [7168]");
  app.add_option("--strategy", o.strategy, "Extraction strategy: critical|hybrid [hybrid]");
  app.add_option("--alpha", o.alpha, "Weight of the coverage difference [1]");
  app.add_option("--beta", o.beta, "Weight of the frequency ratio [1]");
  app.add_option("--gamma", o.gamma, "Weight of the usage ratio [1]");
  app.add_option("--ratio-transform", o.ratio_transform, "Ratio transform: raw|squash|log1p [squash]");
  app.add_flag("--count-in-strings", o.count_in_strings, "Also count call-shaped names inside string literals");
  app.add_flag("--require-preg-e", o.require_preg_e, "Count preg_replace only with a literal /e pattern");
  app.add_flag("--uniform-fallback", o.uniform_fallback, "Use uniform weights when no category discriminates");
  app.add_option("--require-label", o.require_label, "Demonstration label policy: any|webshell|benign|mix [any]");
  app.add_flag("--unparseable-as-webshell", o.unparseable_as_webshell,
               "Count unparseable verdicts as WebShell instead of benign");
  app.add_option("--seed", o.seed, "Seed for splits and synthetic data [42]");
  app.add_option("--endpoint", o.endpoint, "Chat-completions base URL");
  app.add_option("--model", o.model, "Model id sent to the endpoint");
  app.add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key [OPENAI_API_KEY]");
  app.add_option("--temperature", o.temperature, "Sampling temperature [0]");
  app.add_option("--max-output-tokens", o.max_output_tokens, "Completion token limit [256]");
  app.add_option("--timeout", o.timeout, "Per-request timeout in seconds [60]");
  app.add_option("--max-retries", o.max_retries, "Retries on transport errors, 429 and 5xx [3]");
  app.add_option("--max-concurrent", o.max_concurrent, "Maximum requests in flight and worker count [4]");
  app.add_option("--embedding", o.embedding, "Embedding provider: hashed|http [hashed]");
  app.add_option("--embedding-endpoint", o.embedding_endpoint, "Embeddings base URL for --embedding http");
  app.add_option("--embedding-model", o.embedding_model, "Embedding model id for --embedding http");
  app.add_option("--embedding-dimension", o.embedding_dimension, "Expected embedding dimension");
  app.add_option("--library-fraction", o.library_fraction, "Share of each label used as library [0.6]");
  app.add_option("--output", o.output, "Write the result here instead of stdout");
  app.add_option("--csv", o.csv, "Also write per-file rows as CSV");
}

template <typename T, typename F>
void set_if(const std::optional<T>& v, F&& f) {
  if (v) f(*v);
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig c;
  if (o.config_path) c = load_run_config(*o.config_path);
  set_if(o.registry, [&](const std::string& v) { c.registry_path = v; });
  set_if(o.tau, [&](std::size_t v) { c.tau = v; });
  set_if(o.budget_tokens, [&](std::size_t v) { c.budget_tokens = v; });
  try {
    set_if(o.strategy, [&](const std::string& v) { c.strategy = parse_strategy(v); });
    set_if(o.ratio_transform, [&](const std::string& v) { c.ratio_transform = parse_ratio_transform(v); });
    set_if(o.require_label, [&](const std::string& v) { c.label_policy = parse_label_policy(v); });
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  set_if(o.alpha, [&](double v) { c.score.alpha = v; });
  set_if(o.beta, [&](double v) { c.score.beta = v; });
  set_if(o.gamma, [&](double v) { c.score.gamma = v; });
  if (o.count_in_strings) c.scan.count_in_strings = true;
  if (o.require_preg_e) c.scan.require_preg_e_modifier = true;
  if (o.uniform_fallback) c.uniform_fallback = true;
  if (o.unparseable_as_webshell) c.unparseable_as_webshell = true;
  set_if(o.seed, [&](std::uint64_t v) { c.seed = v; });
  set_if(o.endpoint, [&](const std::string& v) { c.llm.endpoint_url = v; });
  set_if(o.model, [&](const std::string& v) { c.llm.model_id = v; });
  set_if(o.api_key_env, [&](const std::string& v) { c.llm.api_key_env_var = v; });
  set_if(o.temperature, [&](double v) { c.llm.temperature = v; });
  set_if(o.max_output_tokens, [&](std::size_t v) { c.llm.max_output_tokens = v; });
  set_if(o.timeout, [&](double v) { c.llm.request_timeout_s = v; });
  set_if(o.max_retries, [&](std::size_t v) { c.llm.max_retries = v; });
  set_if(o.max_concurrent, [&](std::size_t v) { c.llm.max_concurrent_requests = v; });
  set_if(o.embedding, [&](const std::string& v) {
    if (v == "hashed") {
      c.embedding = EmbeddingKind::Hashed;
    } else if (v == "http") {
      c.embedding = EmbeddingKind::Http;
    } else {
      throw ConfigError("unknown embedding provider '" + v + "'");
    }
  });
  set_if(o.embedding_endpoint, [&](const std::string& v) { c.http_embedding.endpoint_url = v; });
  set_if(o.embedding_model, [&](const std::string& v) { c.http_embedding.model_id = v; });
  set_if(o.embedding_dimension, [&](std::size_t v) {
    c.http_embedding.dimension = v;
    c.hashed_dimension = v;
  });
  set_if(o.library_fraction, [&](double v) { c.library_fraction = v; });
  set_if(o.output, [&](const std::string& v) { c.output = v; });
  set_if(o.csv, [&](const std::string& v) { c.csv = v; });
  c.validate();
  return c;
}

void emit(const RunConfig& c, std::ostream& out, const std::string& text) {
  if (c.output) {
    write_file_atomic(*c.output, text);
  } else {
    out << text;
  }
}

void print_warnings(std::ostream& err, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

bool has_php_extension(const fs::path& p) { return to_lower_ascii(p.extension().string()) == ".php"; }

// Expands directories to their *.php files. Missing paths are reported and
// collected in `missing`.
std::vector<fs::path> discover(const std::vector<std::string>& inputs, std::vector<std::string>& missing) {
  std::vector<fs::path> files;
  for (const auto& input : inputs) {
    fs::path p(input);
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<fs::path> found;
      for (auto it = fs::recursive_directory_iterator(p, ec); !ec && it != fs::recursive_directory_iterator();
           it.increment(ec)) {
        if (it->is_regular_file(ec) && has_php_extension(it->path())) found.push_back(it->path().lexically_normal());
      }
      if (ec) missing.push_back(input + ": " + ec.message());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p, ec)) {
      files.push_back(p.lexically_normal());
    } else {
      missing.push_back(input + ": no such file or directory");
    }
  }
  return files;
}

int cmd_scan(const RunConfig& c, const std::vector<std::string>& inputs, std::ostream& out, std::ostream& err) {
  const auto registry = c.registry();
  std::vector<std::string> problems;
  const auto files = discover(inputs, problems);
  json rows = json::array();
  std::vector<std::string> warnings;
  for (const auto& path : files) {
    SourceFile file;
    try {
      file = read_source_file(path);
    } catch (const IoError& e) {
      problems.push_back(e.what());
      continue;
    }
    for (const auto& occ : scan(file, registry, c.scan, &warnings)) {
      rows.push_back({{"path", path.generic_string()},
                      {"function", occ.function_name},
                      {"category", std::string(to_string(occ.category))},
                      {"offset", occ.byte_offset},
                      {"line", occ.line}});
    }
  }
  print_warnings(err, warnings);
  emit(c, out, rows.dump(2, ' ', false, kReplace) + "\n");
  for (const auto& p : problems) err << "error: " << p << '\n';
  return problems.empty() ? kOk : kIo;
}

int cmd_extract(const RunConfig& c, const std::string& input, std::ostream& out, std::ostream& err) {
  const auto registry = c.registry();
  const SourceFile file = read_source_file(input);
  std::vector<std::string> warnings;
  const auto occurrences = scan(file, registry, c.scan, &warnings);
  const auto view = extract_view(file, occurrences, c.extraction(), &warnings);
  print_warnings(err, warnings);
  emit(c, out, view.rendered_text);
  return kOk;
}

WeightsDocument profile_manifest(const RunConfig& c, const DatasetManifest& manifest,
                                 const CriticalFunctionRegistry& registry, std::vector<std::string>& warnings) {
  WeightsDocument doc;
  doc.params = c.score;
  doc.transform = c.ratio_transform;
  doc.corpus_fingerprint = manifest_fingerprint(manifest);
  doc.stats = compute_manifest_stats(manifest, registry, c.scan, &warnings);
  const auto scores = discrimination_scores(doc.stats, c.score, c.ratio_transform);
  try {
    doc.weights = normalize_weights(scores);
  } catch (const UninformativeCorpusError& e) {
    if (!c.uniform_fallback) throw;
    warnings.push_back(std::string(e.what()) + "; using uniform weights");
    doc.weights = WeightVector::uniform();
  }
  return doc;
}

int cmd_profile(const RunConfig& c, const std::string& manifest_path, std::ostream& out, std::ostream& err) {
  const auto registry = c.registry();
  const auto manifest = load_manifest_jsonl(manifest_path);
  std::vector<std::string> warnings;
  const auto doc = profile_manifest(c, manifest, registry, warnings);
  print_warnings(err, warnings);
  emit(c, out, to_json(doc).dump(2, ' ', false, kReplace) + "\n");
  return kOk;
}

int cmd_split(const RunConfig& c, const std::string& manifest_path, const std::string& library_out,
              const std::string& eval_out, std::ostream& out) {
  const auto manifest = load_manifest_jsonl(manifest_path);
  const auto [library, eval] = split_manifest(manifest, c.library_fraction, c.seed);
  write_file_atomic(library_out, to_jsonl(library));
  write_file_atomic(eval_out, to_jsonl(eval));
  out << json{{"library", library.entries.size()}, {"eval", eval.entries.size()}}.dump() << '\n';
  return kOk;
}

int cmd_build_library(const RunConfig& c, const std::string& manifest_path, const std::string& weights_path,
                      const std::string& library_dir, std::ostream& out, std::ostream& err) {
  const auto registry = c.registry();
  const auto manifest = load_manifest_jsonl(manifest_path);
  std::vector<std::string> warnings;
  WeightVector weights;
  if (!weights_path.empty()) {
    weights = load_weights(weights_path).weights;
  } else {
    weights = profile_manifest(c, manifest, registry, warnings).weights;
  }
  const auto provider = c.make_embedding_provider();
  const auto library = build_library(manifest, registry, weights, *provider, c.pipeline(), &warnings);
  save_library(library_dir, library);
  print_warnings(err, warnings);
  out << json{{"profiles", library.profiles.size()}, {"provider", library.provider_id}}.dump() << '\n';
  return kOk;
}

struct DetectOptions {
  std::vector<std::string> inputs;
  std::string manifest;
  std::string library;
  bool stub = false;
  std::size_t stub_threshold = 3;
  bool no_icl = false;
  bool full_file_prompt = false;
};

std::unique_ptr<Classifier> make_classifier(const RunConfig& c, const DetectOptions& d,
                                            const CriticalFunctionRegistry& registry) {
  if (d.stub) return std::make_unique<CriticalCallCountStub>(registry, d.stub_threshold);
  return std::make_unique<ChatCompletionsClient>(c.llm);
}

json effective_config(const RunConfig& c, const DetectOptions& d, const Classifier& classifier) {
  json j = to_json(c);
  j["classifier"] = classifier.model_id();
  j["stub"] = d.stub;
  j["use_demonstrations"] = !d.no_icl && !d.full_file_prompt;
  j["full_file_prompt"] = d.full_file_prompt;
  if (!d.library.empty()) j["library"] = d.library;
  return j;
}

PipelineConfig detect_pipeline(const RunConfig& c, const DetectOptions& d) {
  auto p = c.pipeline();
  p.use_demonstrations = !d.no_icl;
  p.full_file_prompt = d.full_file_prompt;
  return p;
}

int write_eval_report(const RunConfig& c, const EvalReport& report, std::ostream& out, std::ostream& err) {
  print_warnings(err, report.warnings);
  if (c.output) {
    write_report(*c.output, report, c.csv ? std::optional<fs::path>(*c.csv) : std::nullopt);
  } else {
    out << to_json(report).dump(2, ' ', false, kReplace) << '\n';
    if (c.csv) write_file_atomic(*c.csv, to_csv(report));
  }
  return kOk;
}

int cmd_detect(const RunConfig& c, const DetectOptions& d, std::ostream& out, std::ostream& err) {
  if (d.inputs.empty() == d.manifest.empty()) throw ConfigError("detect needs either file paths or --manifest");
  const auto registry = c.registry();
  const auto provider = c.make_embedding_provider();
  std::optional<DemonstrationLibrary> library;
  if (!d.library.empty()) {
    library = load_library(d.library);
    if (library->provider_id != provider->id()) {
      throw ConfigError("library was built with embedding provider '" + library->provider_id + "', not '" +
                        provider->id() + "'");
    }
  } else if (!d.no_icl && !d.full_file_prompt) {
    err << "warning: no --library given; prompting without demonstrations\n";
  }
  auto classifier = make_classifier(c, d, registry);
  const auto pipeline = detect_pipeline(c, d);
  const DemonstrationLibrary* lib = library ? &*library : nullptr;

  if (!d.manifest.empty()) {
    const auto manifest = load_manifest_jsonl(d.manifest);
    const auto report =
        run_evaluation(manifest, registry, lib, *provider, *classifier, pipeline, effective_config(c, d, *classifier));
    return write_eval_report(c, report, out, err);
  }

  std::vector<std::string> problems;
  const auto files = discover(d.inputs, problems);
  for (const auto& p : problems) err << "error: " << p << '\n';
  if (files.empty()) return kIo;
  std::vector<std::string> warnings;
  json rows = json::array();
  std::size_t failures = 0;
  for (const auto& path : files) {
    const auto v = detect_file(path, registry, lib, *provider, *classifier, pipeline, &warnings);
    if (!v.verdict.error.empty()) ++failures;
    rows.push_back({{"path", v.path},
                    {"verdict", std::string(to_string(v.verdict.label))},
                    {"raw_response", v.verdict.raw_response},
                    {"model", v.verdict.model_id},
                    {"demonstration_id", v.demonstration_id},
                    {"similarity", v.similarity},
                    {"prompt_tokens", v.prompt_tokens},
                    {"latency_ms", v.verdict.latency_ms},
                    {"error", v.verdict.error}});
  }
  print_warnings(err, warnings);
  emit(c, out, rows.dump(2, ' ', false, kReplace) + "\n");
  if (failures == files.size()) {
    err << "error: every request failed\n";
    return kAllRequestsFailed;
  }
  return problems.empty() ? kOk : kIo;
}

int cmd_evaluate(const RunConfig& c, const DetectOptions& d, std::ostream& out, std::ostream& err) {
  const auto registry = c.registry();
  const auto manifest = load_manifest_jsonl(d.manifest);
  const auto [library_part, eval_part] = split_manifest(manifest, c.library_fraction, c.seed);
  std::vector<std::string> warnings;
  const auto provider = c.make_embedding_provider();
  const auto pipeline = detect_pipeline(c, d);

  std::optional<DemonstrationLibrary> library;
  if (pipeline.use_demonstrations && !pipeline.full_file_prompt) {
    const auto weights = profile_manifest(c, library_part, registry, warnings).weights;
    library = build_library(library_part, registry, weights, *provider, pipeline, &warnings);
  }
  auto classifier = make_classifier(c, d, registry);
  json config = effective_config(c, d, *classifier);
  config["manifest_fingerprint"] = manifest_fingerprint(manifest);
  if (library) config["weights"] = to_json(library->weights);
  auto report = run_evaluation(eval_part, registry, library ? &*library : nullptr, *provider, *classifier, pipeline,
                               config);
  report.warnings.insert(report.warnings.begin(), warnings.begin(), warnings.end());
  return write_eval_report(c, report, out, err);
}

int dispatch(CLI::App& app, const Overrides& o, const std::vector<std::string>& scan_inputs,
             const std::string& extract_input, const std::string& manifest, const std::string& library_out,
             const std::string& eval_out, const std::string& weights, const std::string& library_dir,
             const DetectOptions& detect, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(o);
  if (app.got_subcommand("scan")) return cmd_scan(c, scan_inputs, out, err);
  if (app.got_subcommand("extract")) return cmd_extract(c, extract_input, out, err);
  if (app.got_subcommand("profile")) return cmd_profile(c, manifest, out, err);
  if (app.got_subcommand("split")) return cmd_split(c, manifest, library_out, eval_out, out);
  if (app.got_subcommand("build-library")) return cmd_build_library(c, manifest, weights, library_dir, out, err);
  if (app.got_subcommand("detect")) return cmd_detect(c, detect, out, err);
  if (app.got_subcommand("evaluate")) return cmd_evaluate(c, detect, out, err);
  if (app.got_subcommand("registry")) {
    emit(c, out, c.registry().serialize());
    return kOk;
  }
  if (app.got_subcommand("config")) {
    emit(c, out, to_json(c).dump(2) + "\n");
    return kOk;
  }
  err << app.help();
  return kUsage;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Behavior-focused PHP WebShell detection with LLMs", "bfad"};
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.require_subcommand(0, 1);
  app.fallthrough();

  Overrides o;
  add_shared_options(app, o);

  std::vector<std::string> scan_inputs;
  auto* scan = app.add_subcommand("scan", "List critical-function calls as JSON");
  scan->add_option("paths", scan_inputs, "Files or directories (searched recursively for *.php)")->required();

  std::string extract_input;
  auto* extract = app.add_subcommand("extract", "Print the budgeted view of one file");
  extract->add_option("path", extract_input, "PHP file")->required();

  std::string manifest;
  auto* profile = app.add_subcommand("profile", "Compute category weights from a labeled manifest");
  profile->add_option("manifest", manifest, "JSONL manifest")->required();

  std::string library_out, eval_out;
  auto* split = app.add_subcommand("split", "Stratified library/eval split of a manifest");
  split->add_option("manifest", manifest, "JSONL manifest")->required();
  split->add_option("--library-out", library_out, "Where to write the library manifest")->required();
  split->add_option("--eval-out", eval_out, "Where to write the evaluation manifest")->required();

  std::string weights, library_dir;
  auto* build = app.add_subcommand("build-library", "Profile labeled files into a demonstration library");
  build->add_option("manifest", manifest, "JSONL manifest of library files")->required();
  build->add_option("--weights", weights, "Weights from `profile` (default: computed from the manifest)");
  build->add_option("--library", library_dir, "Output directory")->required();

  DetectOptions detect;
  auto add_detect_options = [&](CLI::App* sub) {
    sub->add_flag("--stub", detect.stub, "Use the offline critical-call-count classifier");
    sub->add_option("--stub-threshold", detect.stub_threshold, "Calls needed for a WebShell stub verdict [3]");
    sub->add_flag("--no-icl", detect.no_icl, "Do not add a demonstration to the prompt");
    sub->add_flag("--full-file-prompt", detect.full_file_prompt,
                  "Baseline: send the whole file without extraction or demonstrations");
  };
  auto* det = app.add_subcommand("detect", "Classify files, or evaluate a labeled manifest");
  det->add_option("paths", detect.inputs, "Files or directories");
  det->add_option("--manifest", detect.manifest, "Labeled JSONL manifest; produces a full report");
  det->add_option("--library", detect.library, "Demonstration library directory");
  add_detect_options(det);

  auto* evaluate = app.add_subcommand("evaluate", "Split, profile, build a library and evaluate in one run");
  evaluate->add_option("manifest", detect.manifest, "Labeled JSONL manifest")->required();
  add_detect_options(evaluate);

  app.add_subcommand("registry", "Print the active critical-function registry");
  app.add_subcommand("config", "Print the effective configuration");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    return dispatch(app, o, scan_inputs, extract_input, manifest, library_out, eval_out, weights, library_dir, detect,
                    out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const RegistryError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ManifestError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const DegenerateCorpusError& e) {
    err << "error: " << e.what() << '\n';
    return kDegenerateCorpus;
  } catch (const UninformativeCorpusError& e) {
    err << "error: " << e.what() << " (pass --uniform-fallback to continue)\n";
    return kDegenerateCorpus;
  } catch (const BatchFailedError& e) {
    err << "error: " << e.what() << '\n';
    return kAllRequestsFailed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace bfad::cli
