#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfad/common.hpp"
#include "bfad/embedding.hpp"
#include "bfad/extraction.hpp"
#include "bfad/profiling.hpp"
#include "bfad/scanner.hpp"

namespace bfad {

/// Per-category behavior summary of one file.
struct BehavioralProfile {
  std::string file_id;
  CategoryMap<std::string> per_category_text;
  CategoryMap<Embedding> per_category_embedding;  // empty when the category is absent
  std::optional<Label> label;
  std::string view_text;  // rendered extracted view, used when shown as a demonstration

  bool has(BehaviorCategory c) const { return !per_category_embedding[c].empty(); }
  bool has_any() const;
};

class ProfileError : public std::runtime_error {
 public:
  ProfileError(const std::string& file_id, BehaviorCategory category, const std::string& cause);

  std::string file_id;
  BehaviorCategory category;
};

/// Groups the view's critical windows by the categories of the occurrences
/// they contain (a window holding anchors of several categories is copied
/// into each) and embeds every non-empty group.
BehavioralProfile build_profile(std::string file_id, const SourceFile& file, const ExtractedView& view,
                                std::span<const FunctionOccurrence> occurrences, const EmbeddingProvider& provider,
                                std::optional<Label> label = std::nullopt);

/// Cosine of the two category embeddings; 0 when either side lacks it.
double category_similarity(const BehavioralProfile& x, const BehavioralProfile& y, BehaviorCategory category);

/// Sum over categories of weight * category similarity.
double weighted_similarity(const BehavioralProfile& x, const BehavioralProfile& y, const WeightVector& weights);

struct DemonstrationLibrary {
  std::vector<BehavioralProfile> profiles;
  WeightVector weights;
  std::string provider_id;
  std::size_t dimension = 0;

  /// Throws std::invalid_argument when empty, unlabeled, ids repeat, weights
  /// are invalid, or embeddings have the wrong dimension.
  void validate() const;
};

/// Restricts which labels may be returned by select_demonstration.
///   Any      pure similarity ranking
///   Webshell / Benign   only that label
///   Mix      alternate labels, starting with the overall best match
enum class LabelPolicy { Any, Webshell, Benign, Mix };

std::string_view to_string(LabelPolicy policy);
LabelPolicy parse_label_policy(std::string_view name);

struct ScoredDemonstration {
  std::size_t index;  // into library.profiles
  double score;
};

/// Top-k library profiles by weighted similarity, ordered by score
/// descending then file_id ascending. Profiles sharing the target's file_id
/// are skipped.
std::vector<ScoredDemonstration> select_demonstration(const BehavioralProfile& target,
                                                      const DemonstrationLibrary& library, std::size_t k = 1,
                                                      LabelPolicy policy = LabelPolicy::Any,
                                                      std::vector<std::string>* warnings = nullptr);

/// Directory layout (format_version 1):
///   manifest.json                 ids, labels, weights, provider id, dimension
///   profiles/<n>/view.txt         rendered view
///   profiles/<n>/<Category>.json  {"text": ..., "embedding": [...]} per populated category
void save_library(const std::filesystem::path& dir, const DemonstrationLibrary& library);
DemonstrationLibrary load_library(const std::filesystem::path& dir);

}  // namespace bfad
