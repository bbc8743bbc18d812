#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfad/common.hpp"
#include "bfad/registry.hpp"
#include "bfad/scanner.hpp"
#include "bfad/source_file.hpp"

namespace bfad {

struct CategoryStats {
  double webshell_file_fraction = 0.0;
  double benign_file_fraction = 0.0;
  double webshell_avg_per_file = 0.0;
  double benign_avg_per_file = 0.0;
  std::size_t webshell_total = 0;
  std::size_t benign_total = 0;
};

struct CorpusStats {
  CategoryMap<CategoryStats> per_category;
  std::size_t n_webshell = 0;
  std::size_t n_benign = 0;
};

class DegenerateCorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UninformativeCorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reduces per-file category counts into corpus statistics. Accumulators
/// over disjoint shards can be merged in any order.
class CorpusStatsAccumulator {
 public:
  void add(const CategoryMap<std::size_t>& counts, Label label);
  void merge(const CorpusStatsAccumulator& other);

  /// Throws DegenerateCorpusError unless both labels have at least one file.
  CorpusStats finish() const;

 private:
  struct Side {
    std::size_t files = 0;
    CategoryMap<std::size_t> files_with;
    CategoryMap<std::size_t> totals;
  };
  Side webshell_;
  Side benign_;
};

struct LabeledFile {
  SourceFile file;
  Label label;
};

CorpusStats compute_corpus_stats(std::span<const LabeledFile> corpus, const CriticalFunctionRegistry& registry,
                                 const ScanOptions& scan_options = {});

struct ScoreParams {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
};

/// How the unbounded frequency and usage ratios are mapped before they are
/// combined with the coverage difference.
enum class RatioTransform { Raw, Squash, Log1p };

std::string_view to_string(RatioTransform transform);
RatioTransform parse_ratio_transform(std::string_view name);

inline constexpr double kRatioEpsilon = 1e-6;

double apply_ratio_transform(double ratio, RatioTransform transform);

/// Class-contrast statistics of one category, before any transform.
struct RatioComponents {
  double coverage;   // r_c = webshell_file_fraction - benign_file_fraction
  double frequency;  // r_f = webshell_avg_per_file / max(benign_avg_per_file, eps)
  double usage;      // r_u = webshell_total / max(benign_total, eps)
};

RatioComponents ratio_components(const CategoryStats& stats);

/// Score = alpha * r_c + beta * T(r_f) + gamma * T(r_u), clamped at zero.
CategoryMap<double> discrimination_scores(const CorpusStats& stats, const ScoreParams& params = {},
                                          RatioTransform transform = RatioTransform::Squash);

struct WeightVector {
  CategoryMap<double> weights;

  double operator[](BehaviorCategory c) const { return weights[c]; }
  double sum() const;
  static WeightVector uniform();
};

/// Throws UninformativeCorpusError when no score is positive.
WeightVector normalize_weights(const CategoryMap<double>& scores);

/// {category -> weight, params, transform, corpus fingerprint, stats}.
struct WeightsDocument {
  WeightVector weights;
  ScoreParams params;
  RatioTransform transform = RatioTransform::Squash;
  std::string corpus_fingerprint;
  CorpusStats stats;
};

nlohmann::json to_json(const CorpusStats& stats);
nlohmann::json to_json(const WeightVector& weights);
WeightVector weights_from_json(const nlohmann::json& j);
nlohmann::json to_json(const WeightsDocument& doc);
WeightsDocument weights_document_from_json(const nlohmann::json& j);

void save_weights(const std::filesystem::path& path, const WeightsDocument& doc);
WeightsDocument load_weights(const std::filesystem::path& path);

}  // namespace bfad
