#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bfad/scanner.hpp"
#include "bfad/source_file.hpp"

namespace bfad {

enum class RegionOrigin { CriticalWindow, GlobalBackfill };

/// Half-open byte range [start, end) of a source file.
struct CodeRegion {
  std::size_t start = 0;
  std::size_t end = 0;
  RegionOrigin origin = RegionOrigin::CriticalWindow;

  std::size_t size() const { return end - start; }
  bool contains(std::size_t offset) const { return offset >= start && offset < end; }
  bool operator==(const CodeRegion&) const = default;
};

enum class ExtractionStrategy { CriticalOnly, Hybrid };

std::string_view to_string(ExtractionStrategy strategy);
ExtractionStrategy parse_strategy(std::string_view name);  // "critical" | "hybrid"

/// Counts tokens in a piece of prompt text. Must be deterministic.
struct TokenEstimator {
  std::string id;
  std::function<std::size_t(std::string_view)> count;

  std::size_t operator()(std::string_view text) const { return count(text); }
};

/// ceil(bytes / 4).
std::size_t estimate_tokens(std::string_view text);
TokenEstimator default_token_estimator();

/// Separator placed between non-contiguous regions in rendered views.
inline constexpr std::string_view kOmissionMarker = "\n/* \xE2\x80\xA6omitted\xE2\x80\xA6 */\n";

struct ExtractionConfig {
  std::size_t tau = 300;  // context radius, bytes
  std::size_t budget_tokens = 7168;
  ExtractionStrategy strategy = ExtractionStrategy::Hybrid;
  TokenEstimator token_estimator = default_token_estimator();
};

struct ExtractedView {
  std::vector<CodeRegion> regions;  // sorted, disjoint
  std::string rendered_text;        // all regions in document order
  std::string critical_text;        // CriticalWindow regions only
  std::string backfill_text;        // GlobalBackfill regions only
  std::size_t estimated_tokens = 0;
  bool truncated = false;  // critical windows were cut to fit the budget

  std::vector<CodeRegion> regions_of(RegionOrigin origin) const;
  bool empty() const { return regions.empty(); }
};

/// One window [p - tau, p + tau) per occurrence, clamped to the file and
/// widened to UTF-8 character boundaries.
std::vector<CodeRegion> extract_windows(const SourceFile& file, std::span<const FunctionOccurrence> occurrences,
                                        std::size_t tau);

/// Interval union. Overlapping or touching regions coalesce; the merged
/// origin is CriticalWindow when any input was.
std::vector<CodeRegion> merge_regions(std::vector<CodeRegion> regions);

/// Renders regions in order, joining non-contiguous neighbours with
/// kOmissionMarker.
std::string render_regions(std::string_view content, std::span<const CodeRegion> regions);

/// Fits the merged critical windows into the token budget and, for the hybrid
/// strategy, backfills uncovered code in document order in chunks of at most
/// 2 * tau bytes until the next chunk would exceed the budget.
///
/// When the critical windows alone do not fit, trailing windows are dropped
/// and the last one that partially fits is cut to its longest fitting prefix;
/// `view.truncated` is set and a warning is emitted.
ExtractedView fill_budget(const SourceFile& file, std::span<const CodeRegion> merged,
                          const ExtractionConfig& config, std::vector<std::string>* warnings = nullptr);

/// extract_windows -> merge_regions -> fill_budget.
ExtractedView extract_view(const SourceFile& file, std::span<const FunctionOccurrence> occurrences,
                           const ExtractionConfig& config, std::vector<std::string>* warnings = nullptr);

}  // namespace bfad
