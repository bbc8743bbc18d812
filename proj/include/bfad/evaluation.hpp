#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfad/common.hpp"
#include "bfad/embedding.hpp"
#include "bfad/extraction.hpp"
#include "bfad/llm_detector.hpp"
#include "bfad/retrieval.hpp"
#include "bfad/scanner.hpp"

namespace bfad {

struct ManifestEntry {
  std::filesystem::path path;
  Label label;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::size_t count(Label label) const;
  /// Throws std::invalid_argument on duplicate paths.
  void validate() const;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSONL, one {"path": ..., "label": "webshell"|"benign"} per line. Relative
/// paths are resolved against the manifest's directory.
DatasetManifest load_manifest_jsonl(const std::filesystem::path& path);
DatasetManifest parse_manifest_jsonl(std::string_view text, const std::filesystem::path& base_dir = {});
std::string to_jsonl(const DatasetManifest& manifest);

/// Stable identity of a manifest: order-independent hash of (path, label).
std::string manifest_fingerprint(const DatasetManifest& manifest);

/// Stratified split. Each label contributes round(fraction * n_label) files to
/// the library part; entries keep their manifest order within each part.
/// The shuffle uses mt19937_64 with a hand-rolled bounded draw, so results are
/// identical across standard libraries.
std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& manifest, double library_fraction,
                                                           std::uint64_t seed);

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  void record(Label gold, Label predicted);
  bool operator==(const ConfusionMatrix&) const = default;
};

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// WebShell is the positive class. Undefined precision/recall are reported as
/// 0 with a warning. Throws std::invalid_argument on an empty matrix.
Metrics compute_metrics(const ConfusionMatrix& matrix, std::vector<std::string>* warnings = nullptr);

struct PerFileResult {
  std::string path;
  Label gold = Label::Benign;
  VerdictLabel predicted = VerdictLabel::Unparseable;
  Label counted_as = Label::Benign;
  std::string demonstration_id;
  double similarity = 0.0;
  std::size_t prompt_tokens = 0;
  std::int64_t latency_ms = 0;
  std::string error;
};

struct EvalReport {
  ConfusionMatrix matrix;
  Metrics metrics;
  std::vector<PerFileResult> per_file;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> warnings;

  /// Hash of everything except latency and timestamps.
  std::string fingerprint() const;
};

nlohmann::json to_json(const EvalReport& report, bool include_timing = true);
std::string to_csv(const EvalReport& report);
void write_report(const std::filesystem::path& json_path, const EvalReport& report,
                  const std::optional<std::filesystem::path>& csv_path = std::nullopt);

struct PipelineConfig {
  ScanOptions scan;
  ExtractionConfig extraction;
  LabelPolicy label_policy = LabelPolicy::Any;
  bool use_demonstrations = true;
  /// Baseline mode: send the whole file under [Source Code] and leave
  /// [Critical Code] empty.
  bool full_file_prompt = false;
  bool unparseable_as_webshell = false;
  std::size_t workers = 4;
};

class BatchFailedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Verdict for one unlabeled file, as produced inside run_evaluation.
struct FileVerdict {
  std::string path;
  Verdict verdict;
  std::string demonstration_id;
  double similarity = 0.0;
  std::size_t prompt_tokens = 0;
};

/// Runs scan -> extract -> profile -> select -> prompt -> classify for one
/// file. Failures are recorded in verdict.error; never throws for per-file
/// problems.
FileVerdict detect_file(const std::filesystem::path& path, const CriticalFunctionRegistry& registry,
                        const DemonstrationLibrary* library, const EmbeddingProvider& provider,
                        Classifier& classifier, const PipelineConfig& config,
                        std::vector<std::string>* warnings = nullptr);

/// Evaluates every manifest entry. `library` may be null (no demonstrations).
/// Throws std::invalid_argument on an empty manifest and BatchFailedError when
/// every classification request failed.
EvalReport run_evaluation(const DatasetManifest& eval_manifest, const CriticalFunctionRegistry& registry,
                          const DemonstrationLibrary* library, const EmbeddingProvider& provider,
                          Classifier& classifier, const PipelineConfig& config,
                          const nlohmann::json& effective_config = nlohmann::json::object());

/// Builds a demonstration library from labeled files with the given weights.
/// Unreadable files are skipped with a warning.
DemonstrationLibrary build_library(const DatasetManifest& manifest, const CriticalFunctionRegistry& registry,
                                   const WeightVector& weights, const EmbeddingProvider& provider,
                                   const PipelineConfig& config, std::vector<std::string>* warnings = nullptr);

/// Reads, scans and accumulates statistics for every manifest entry.
/// Unreadable files are skipped with a warning.
CorpusStats compute_manifest_stats(const DatasetManifest& manifest, const CriticalFunctionRegistry& registry,
                                   const ScanOptions& options, std::vector<std::string>* warnings = nullptr);

}  // namespace bfad
