#include "bfad/extraction.hpp"

#include <algorithm>
#include <stdexcept>

namespace bfad {
namespace {

// Largest len in [0, max_len] with fits(len), assuming fits is monotone.
template <typename Fits>
std::size_t longest_fitting(std::size_t max_len, Fits&& fits) {
  std::size_t lo = 0;
  std::size_t hi = max_len;
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo + 1) / 2;
    if (fits(mid)) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return lo;
}

void insert_sorted(std::vector<CodeRegion>& regions, const CodeRegion& r) {
  auto it = std::upper_bound(regions.begin(), regions.end(), r,
                             [](const CodeRegion& a, const CodeRegion& b) { return a.start < b.start; });
  regions.insert(it, r);
}

}  // namespace

std::string_view to_string(ExtractionStrategy strategy) {
  return strategy == ExtractionStrategy::CriticalOnly ? "critical" : "hybrid";
}

ExtractionStrategy parse_strategy(std::string_view name) {
  if (name == "critical") return ExtractionStrategy::CriticalOnly;
  if (name == "hybrid") return ExtractionStrategy::Hybrid;
  throw std::invalid_argument("unknown extraction strategy '" + std::string(name) + "'");
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

TokenEstimator default_token_estimator() { return {"bytes/4", [](std::string_view t) { return estimate_tokens(t); }}; }

std::vector<CodeRegion> ExtractedView::regions_of(RegionOrigin origin) const {
  std::vector<CodeRegion> out;
  for (const auto& r : regions) {
    if (r.origin == origin) out.push_back(r);
  }
  return out;
}

std::vector<CodeRegion> extract_windows(const SourceFile& file, std::span<const FunctionOccurrence> occurrences,
                                        std::size_t tau) {
  const std::string_view content = file.content;
  const std::size_t len = content.size();
  std::vector<CodeRegion> regions;
  regions.reserve(occurrences.size());
  for (const auto& occ : occurrences) {
    std::size_t p = std::min(occ.byte_offset, len);
    std::size_t start = utf8::snap_back(content, p > tau ? p - tau : 0);
    std::size_t end = utf8::snap_forward(content, std::min(len, p + tau));
    if (end <= start) continue;
    regions.push_back({start, end, RegionOrigin::CriticalWindow});
  }
  return regions;
}

std::vector<CodeRegion> merge_regions(std::vector<CodeRegion> regions) {
  std::erase_if(regions, [](const CodeRegion& r) { return r.end <= r.start; });
  std::sort(regions.begin(), regions.end(), [](const CodeRegion& a, const CodeRegion& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  std::vector<CodeRegion> merged;
  for (const auto& r : regions) {
    if (!merged.empty() && r.start <= merged.back().end) {
      auto& last = merged.back();
      last.end = std::max(last.end, r.end);
      if (r.origin == RegionOrigin::CriticalWindow) last.origin = RegionOrigin::CriticalWindow;
    } else {
      merged.push_back(r);
    }
  }
  return merged;
}

std::string render_regions(std::string_view content, std::span<const CodeRegion> regions) {
  std::string out;
  std::size_t total = 0;
  for (const auto& r : regions) total += r.size() + kOmissionMarker.size();
  out.reserve(total);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (i > 0 && regions[i - 1].end != regions[i].start) out += kOmissionMarker;
    out += content.substr(regions[i].start, regions[i].size());
  }
  return out;
}

ExtractedView fill_budget(const SourceFile& file, std::span<const CodeRegion> merged,
                          const ExtractionConfig& config, std::vector<std::string>* warnings) {
  if (config.tau == 0) throw std::invalid_argument("tau must be positive");
  if (config.budget_tokens == 0) throw std::invalid_argument("budget_tokens must be positive");

  const std::string_view content = file.content;
  const auto& estimate = config.token_estimator;
  auto fits = [&](const std::vector<CodeRegion>& regions) {
    return estimate(render_regions(content, regions)) <= config.budget_tokens;
  };

  ExtractedView view;
  std::vector<CodeRegion>& kept = view.regions;

  // Appends the longest budget-fitting prefix of `r`; returns whether any of
  // it was kept.
  auto keep_prefix = [&](CodeRegion r) {
    std::size_t len = longest_fitting(r.size(), [&](std::size_t n) {
      auto trial = kept;
      insert_sorted(trial, {r.start, r.start + n, r.origin});
      return fits(trial);
    });
    std::size_t end = utf8::snap_back(content, r.start + len);
    if (end <= r.start) return false;
    insert_sorted(kept, {r.start, end, r.origin});
    return true;
  };

  for (const auto& r : merged) {
    auto trial = kept;
    trial.push_back(r);
    if (fits(trial)) {
      kept = std::move(trial);
      continue;
    }
    keep_prefix(r);
    view.truncated = true;
    break;
  }
  if (view.truncated && warnings) {
    warnings->push_back(file.path.string() + ": critical windows exceed the budget of " +
                        std::to_string(config.budget_tokens) + " tokens; view truncated");
  }

  const std::size_t used = estimate(render_regions(content, kept));
  if (config.strategy == ExtractionStrategy::Hybrid && !view.truncated && used < config.budget_tokens) {
    const std::vector<CodeRegion> critical = kept;
    const std::size_t chunk = 2 * config.tau;
    std::size_t cursor = 0;
    bool full = false;
    for (std::size_t i = 0; i <= critical.size() && !full; ++i) {
      const std::size_t gap_end = i < critical.size() ? critical[i].start : content.size();
      while (cursor < gap_end && !full) {
        std::size_t end = std::min(gap_end, cursor + chunk);
        if (end < gap_end) end = utf8::snap_back(content, end);
        if (end <= cursor) end = utf8::snap_forward(content, cursor + 1);
        CodeRegion piece{cursor, std::min(end, gap_end), RegionOrigin::GlobalBackfill};
        auto trial = kept;
        insert_sorted(trial, piece);
        if (fits(trial)) {
          kept = std::move(trial);
          cursor = piece.end;
        } else {
          keep_prefix(piece);
          full = true;
        }
      }
      if (i < critical.size()) cursor = critical[i].end;
    }
  }

  view.rendered_text = render_regions(content, kept);
  view.critical_text = render_regions(content, view.regions_of(RegionOrigin::CriticalWindow));
  view.backfill_text = render_regions(content, view.regions_of(RegionOrigin::GlobalBackfill));
  view.estimated_tokens = estimate(view.rendered_text);
  return view;
}

ExtractedView extract_view(const SourceFile& file, std::span<const FunctionOccurrence> occurrences,
                           const ExtractionConfig& config, std::vector<std::string>* warnings) {
  auto merged = merge_regions(extract_windows(file, occurrences, config.tau));
  return fill_budget(file, merged, config, warnings);
}

}  // namespace bfad
