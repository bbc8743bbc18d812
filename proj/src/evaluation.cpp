#include "bfad/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace bfad {
namespace {

// Uniform integer in [0, bound) by rejection; independent of the standard
// library's distribution implementations.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

Label counted_label(VerdictLabel v, bool unparseable_as_webshell) {
  switch (v) {
    case VerdictLabel::Webshell: return Label::Webshell;
    case VerdictLabel::Benign: return Label::Benign;
    case VerdictLabel::Unparseable: return unparseable_as_webshell ? Label::Webshell : Label::Benign;
  }
  return Label::Benign;
}

constexpr auto kJsonReplace = nlohmann::json::error_handler_t::replace;

}  // namespace

std::size_t DatasetManifest::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.label == label; }));
}

void DatasetManifest::validate() const {
  std::set<std::filesystem::path> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.path).second) throw std::invalid_argument("duplicate manifest path '" + e.path.string() + "'");
  }
}

DatasetManifest parse_manifest_jsonl(std::string_view text, const std::filesystem::path& base_dir) {
  DatasetManifest manifest;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw ManifestError("expected a JSON object");
      for (const auto& [key, value] : j.items()) {
        if (key != "path" && key != "label") throw ManifestError("unknown key '" + key + "'");
      }
      std::filesystem::path p = j.at("path").get<std::string>();
      if (p.empty()) throw ManifestError("empty path");
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      manifest.entries.push_back({p.lexically_normal(), parse_label(j.at("label").get<std::string>())});
    } catch (const ManifestError& e) {
      throw ManifestError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ManifestError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  try {
    manifest.validate();
  } catch (const std::invalid_argument& e) {
    throw ManifestError(e.what());
  }
  return manifest;
}

DatasetManifest load_manifest_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open manifest '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest_jsonl(buf.str(), path.parent_path());
}

std::string to_jsonl(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    nlohmann::json j = {{"path", e.path.string()}, {"label", std::string(to_string(e.label))}};
    out += j.dump(-1, ' ', false, kJsonReplace);
    out += '\n';
  }
  return out;
}

std::string manifest_fingerprint(const DatasetManifest& manifest) {
  std::vector<std::string> rows;
  rows.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) rows.push_back(e.path.string() + '\t' + std::string(to_string(e.label)));
  std::sort(rows.begin(), rows.end());
  std::uint64_t h = fnv1a64("");
  for (const auto& r : rows) h = fnv1a64(r + '\n', h);
  return to_hex(h);
}

std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& manifest, double library_fraction,
                                                           std::uint64_t seed) {
  if (!(library_fraction > 0.0 && library_fraction < 1.0)) {
    throw std::invalid_argument("library fraction must be in (0, 1)");
  }
  manifest.validate();
  std::mt19937_64 rng(seed);
  std::vector<bool> in_library(manifest.entries.size(), false);
  for (Label label : {Label::Webshell, Label::Benign}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      if (manifest.entries[i].label == label) idx.push_back(i);
    }
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[bounded(rng, i)]);
    }
    auto take = static_cast<std::size_t>(std::llround(library_fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < take && i < idx.size(); ++i) in_library[idx[i]] = true;
  }
  std::pair<DatasetManifest, DatasetManifest> parts;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    (in_library[i] ? parts.first : parts.second).entries.push_back(manifest.entries[i]);
  }
  return parts;
}

void ConfusionMatrix::record(Label gold, Label predicted) {
  if (gold == Label::Webshell) {
    (predicted == Label::Webshell ? tp : fn) += 1;
  } else {
    (predicted == Label::Webshell ? fp : tn) += 1;
  }
}

Metrics compute_metrics(const ConfusionMatrix& m, std::vector<std::string>* warnings) {
  if (m.total() == 0) throw std::invalid_argument("empty confusion matrix");
  Metrics out;
  const auto tp = static_cast<double>(m.tp);
  out.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
  if (m.tp + m.fp == 0) {
    if (warnings) warnings->push_back("precision undefined (no positive predictions); reported as 0");
  } else {
    out.precision = tp / static_cast<double>(m.tp + m.fp);
  }
  if (m.tp + m.fn == 0) {
    if (warnings) warnings->push_back("recall undefined (no positive examples); reported as 0");
  } else {
    out.recall = tp / static_cast<double>(m.tp + m.fn);
  }
  if (out.precision + out.recall > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  }
  return out;
}

nlohmann::json to_json(const EvalReport& report, bool include_timing) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.per_file) {
    nlohmann::json row = {
        {"path", r.path},
        {"gold", std::string(to_string(r.gold))},
        {"predicted", std::string(to_string(r.predicted))},
        {"counted_as", std::string(to_string(r.counted_as))},
        {"demonstration_id", r.demonstration_id},
        {"similarity", r.similarity},
        {"prompt_tokens", r.prompt_tokens},
        {"error", r.error},
    };
    if (include_timing) row["latency_ms"] = r.latency_ms;
    rows.push_back(std::move(row));
  }
  nlohmann::json j = {
      {"schema_version", 1},
      {"matrix", {{"tp", report.matrix.tp}, {"fp", report.matrix.fp}, {"tn", report.matrix.tn}, {"fn", report.matrix.fn}}},
      {"accuracy", report.metrics.accuracy},
      {"precision", report.metrics.precision},
      {"recall", report.metrics.recall},
      {"f1", report.metrics.f1},
      {"per_file", rows},
      {"config", report.config},
      {"warnings", report.warnings},
  };
  if (include_timing) j["fingerprint"] = report.fingerprint();
  return j;
}

std::string EvalReport::fingerprint() const {
  return to_hex(fnv1a64(to_json(*this, false).dump(-1, ' ', false, kJsonReplace)));
}

std::string to_csv(const EvalReport& report) {
  std::string out = "path,gold,predicted,counted_as,demonstration_id,similarity,prompt_tokens,latency_ms,error\n";
  for (const auto& r : report.per_file) {
    std::ostringstream sim;
    sim.precision(17);
    sim << r.similarity;
    out += csv_escape(r.path) + ',' + std::string(to_string(r.gold)) + ',' + std::string(to_string(r.predicted)) +
           ',' + std::string(to_string(r.counted_as)) + ',' + csv_escape(r.demonstration_id) + ',' + sim.str() + ',' +
           std::to_string(r.prompt_tokens) + ',' + std::to_string(r.latency_ms) + ',' + csv_escape(r.error) + '\n';
  }
  return out;
}

void write_report(const std::filesystem::path& json_path, const EvalReport& report,
                  const std::optional<std::filesystem::path>& csv_path) {
  write_file_atomic(json_path, to_json(report).dump(2, ' ', false, kJsonReplace) + "\n");
  if (csv_path) write_file_atomic(*csv_path, to_csv(report));
}

FileVerdict detect_file(const std::filesystem::path& path, const CriticalFunctionRegistry& registry,
                        const DemonstrationLibrary* library, const EmbeddingProvider& provider,
                        Classifier& classifier, const PipelineConfig& config, std::vector<std::string>* warnings) {
  FileVerdict out;
  out.path = path.string();
  out.verdict.model_id = classifier.model_id();
  try {
    SourceFile file = read_source_file(path);
    auto occurrences = scan(file, registry, config.scan, warnings);

    PromptBundle bundle;
    std::optional<Demonstration> demo;
    if (config.full_file_prompt) {
      bundle = build_prompt(ExtractedView{}, std::nullopt, file.content, config.extraction.token_estimator);
    } else {
      ExtractedView view = extract_view(file, occurrences, config.extraction, warnings);
      if (library && config.use_demonstrations) {
        auto target = build_profile(out.path, file, view, occurrences, provider);
        auto picks = select_demonstration(target, *library, 1, config.label_policy, warnings);
        if (!picks.empty()) {
          const auto& chosen = library->profiles[picks.front().index];
          out.demonstration_id = chosen.file_id;
          out.similarity = picks.front().score;
          demo = Demonstration{chosen.view_text, *chosen.label};
        }
      }
      std::string snippets;
      if (view.empty()) {
        // No anchors under the critical-only strategy: show the file head.
        ExtractionConfig head = config.extraction;
        head.strategy = ExtractionStrategy::Hybrid;
        snippets = fill_budget(file, {}, head).rendered_text;
      }
      bundle = build_prompt(view, demo, snippets, config.extraction.token_estimator);
    }
    out.prompt_tokens = bundle.estimated_tokens;
    out.verdict = classifier.classify(bundle);
  } catch (const std::exception& e) {
    out.verdict.label = VerdictLabel::Unparseable;
    out.verdict.error = e.what();
  }
  return out;
}

EvalReport run_evaluation(const DatasetManifest& eval_manifest, const CriticalFunctionRegistry& registry,
                          const DemonstrationLibrary* library, const EmbeddingProvider& provider,
                          Classifier& classifier, const PipelineConfig& config,
                          const nlohmann::json& effective_config) {
  if (eval_manifest.entries.empty()) throw std::invalid_argument("evaluation manifest is empty");
  if (library) library->validate();

  const std::size_t n = eval_manifest.entries.size();
  std::vector<FileVerdict> results(n);
  std::vector<std::vector<std::string>> file_warnings(n);
  std::vector<bool> request_failed(n, false);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      const auto& entry = eval_manifest.entries[i];
      results[i] = detect_file(entry.path, registry, library, provider, classifier, config, &file_warnings[i]);
      request_failed[i] = !results[i].verdict.error.empty();
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(config.workers, 1, n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }

  EvalReport report;
  report.config = effective_config;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& entry = eval_manifest.entries[i];
    const auto& r = results[i];
    PerFileResult row;
    row.path = entry.path.string();
    row.gold = entry.label;
    row.predicted = r.verdict.label;
    row.counted_as = counted_label(r.verdict.label, config.unparseable_as_webshell);
    row.demonstration_id = r.demonstration_id;
    row.similarity = r.similarity;
    row.prompt_tokens = r.prompt_tokens;
    row.latency_ms = r.verdict.latency_ms;
    row.error = r.verdict.error;
    report.matrix.record(row.gold, row.counted_as);
    report.per_file.push_back(std::move(row));
    for (auto& w : file_warnings[i]) report.warnings.push_back(std::move(w));
    if (request_failed[i]) ++failures;
  }
  if (failures == n) {
    throw BatchFailedError("every request failed; first error: " + results.front().verdict.error);
  }
  report.metrics = compute_metrics(report.matrix, &report.warnings);
  return report;
}

DemonstrationLibrary build_library(const DatasetManifest& manifest, const CriticalFunctionRegistry& registry,
                                   const WeightVector& weights, const EmbeddingProvider& provider,
                                   const PipelineConfig& config, std::vector<std::string>* warnings) {
  DemonstrationLibrary library;
  library.weights = weights;
  library.provider_id = provider.id();
  library.dimension = provider.dimension();
  for (const auto& entry : manifest.entries) {
    SourceFile file;
    try {
      file = read_source_file(entry.path);
    } catch (const IoError& e) {
      if (warnings) warnings->push_back(std::string("skipping library file: ") + e.what());
      continue;
    }
    auto occurrences = scan(file, registry, config.scan, warnings);
    auto view = extract_view(file, occurrences, config.extraction, warnings);
    library.profiles.push_back(build_profile(entry.path.string(), file, view, occurrences, provider, entry.label));
  }
  library.validate();
  return library;
}

CorpusStats compute_manifest_stats(const DatasetManifest& manifest, const CriticalFunctionRegistry& registry,
                                   const ScanOptions& options, std::vector<std::string>* warnings) {
  CorpusStatsAccumulator acc;
  for (const auto& entry : manifest.entries) {
    try {
      SourceFile file = read_source_file(entry.path);
      acc.add(count_by_category(scan(file, registry, options, warnings)), entry.label);
    } catch (const IoError& e) {
      if (warnings) warnings->push_back(std::string("skipping corpus file: ") + e.what());
    }
  }
  return acc.finish();
}

}  // namespace bfad
