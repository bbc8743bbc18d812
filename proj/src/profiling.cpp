#include "bfad/profiling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace bfad {

void CorpusStatsAccumulator::add(const CategoryMap<std::size_t>& counts, Label label) {
  Side& side = label == Label::Webshell ? webshell_ : benign_;
  ++side.files;
  for (BehaviorCategory c : kAllCategories) {
    if (counts[c] > 0) ++side.files_with[c];
    side.totals[c] += counts[c];
  }
}

void CorpusStatsAccumulator::merge(const CorpusStatsAccumulator& other) {
  auto fold = [](Side& into, const Side& from) {
    into.files += from.files;
    for (BehaviorCategory c : kAllCategories) {
      into.files_with[c] += from.files_with[c];
      into.totals[c] += from.totals[c];
    }
  };
  fold(webshell_, other.webshell_);
  fold(benign_, other.benign_);
}

CorpusStats CorpusStatsAccumulator::finish() const {
  if (webshell_.files == 0 || benign_.files == 0) {
    throw DegenerateCorpusError("degenerate corpus: need at least one webshell and one benign file (got " +
                                std::to_string(webshell_.files) + " webshell, " + std::to_string(benign_.files) +
                                " benign)");
  }
  CorpusStats stats;
  stats.n_webshell = webshell_.files;
  stats.n_benign = benign_.files;
  const auto nw = static_cast<double>(webshell_.files);
  const auto nb = static_cast<double>(benign_.files);
  for (BehaviorCategory c : kAllCategories) {
    CategoryStats& s = stats.per_category[c];
    s.webshell_file_fraction = static_cast<double>(webshell_.files_with[c]) / nw;
    s.benign_file_fraction = static_cast<double>(benign_.files_with[c]) / nb;
    s.webshell_total = webshell_.totals[c];
    s.benign_total = benign_.totals[c];
    s.webshell_avg_per_file = static_cast<double>(s.webshell_total) / nw;
    s.benign_avg_per_file = static_cast<double>(s.benign_total) / nb;
  }
  return stats;
}

CorpusStats compute_corpus_stats(std::span<const LabeledFile> corpus, const CriticalFunctionRegistry& registry,
                                 const ScanOptions& scan_options) {
  CorpusStatsAccumulator acc;
  for (const auto& item : corpus) {
    auto occurrences = scan(item.file, registry, scan_options);
    acc.add(count_by_category(occurrences), item.label);
  }
  return acc.finish();
}

std::string_view to_string(RatioTransform transform) {
  switch (transform) {
    case RatioTransform::Raw: return "raw";
    case RatioTransform::Squash: return "squash";
    case RatioTransform::Log1p: return "log1p";
  }
  return "squash";
}

RatioTransform parse_ratio_transform(std::string_view name) {
  if (name == "raw") return RatioTransform::Raw;
  if (name == "squash") return RatioTransform::Squash;
  if (name == "log1p") return RatioTransform::Log1p;
  throw std::invalid_argument("unknown ratio transform '" + std::string(name) + "'");
}

double apply_ratio_transform(double ratio, RatioTransform transform) {
  switch (transform) {
    case RatioTransform::Raw: return ratio;
    case RatioTransform::Squash: return ratio / (1.0 + ratio);
    case RatioTransform::Log1p: return std::log1p(ratio);
  }
  return ratio;
}

RatioComponents ratio_components(const CategoryStats& s) {
  return {
      s.webshell_file_fraction - s.benign_file_fraction,
      s.webshell_avg_per_file / std::max(s.benign_avg_per_file, kRatioEpsilon),
      static_cast<double>(s.webshell_total) / std::max(static_cast<double>(s.benign_total), kRatioEpsilon),
  };
}

CategoryMap<double> discrimination_scores(const CorpusStats& stats, const ScoreParams& params,
                                          RatioTransform transform) {
  CategoryMap<double> scores;
  for (BehaviorCategory c : kAllCategories) {
    const auto r = ratio_components(stats.per_category[c]);
    const double score = r.coverage * params.alpha + apply_ratio_transform(r.frequency, transform) * params.beta +
                         apply_ratio_transform(r.usage, transform) * params.gamma;
    scores[c] = std::max(0.0, score);
  }
  return scores;
}

double WeightVector::sum() const {
  double total = 0.0;
  for (double w : weights.values) total += w;
  return total;
}

WeightVector WeightVector::uniform() {
  WeightVector w;
  w.weights.values.fill(1.0 / static_cast<double>(kCategoryCount));
  return w;
}

WeightVector normalize_weights(const CategoryMap<double>& scores) {
  double total = 0.0;
  for (double s : scores.values) {
    if (!std::isfinite(s)) throw std::invalid_argument("non-finite discrimination score");
    if (s > 0.0) total += s;
  }
  if (!(total > 0.0)) throw UninformativeCorpusError("uninformative corpus: every discrimination score is zero");
  WeightVector w;
  for (BehaviorCategory c : kAllCategories) w.weights[c] = std::max(0.0, scores[c]) / total;
  return w;
}

nlohmann::json to_json(const CorpusStats& stats) {
  nlohmann::json per = nlohmann::json::object();
  for (BehaviorCategory c : kAllCategories) {
    const CategoryStats& s = stats.per_category[c];
    per[std::string(to_string(c))] = {
        {"webshell_file_fraction", s.webshell_file_fraction},
        {"benign_file_fraction", s.benign_file_fraction},
        {"webshell_avg_per_file", s.webshell_avg_per_file},
        {"benign_avg_per_file", s.benign_avg_per_file},
        {"webshell_total", s.webshell_total},
        {"benign_total", s.benign_total},
    };
  }
  return {{"n_webshell", stats.n_webshell}, {"n_benign", stats.n_benign}, {"per_category", per}};
}

namespace {

CorpusStats stats_from_json(const nlohmann::json& j) {
  CorpusStats stats;
  stats.n_webshell = j.at("n_webshell").get<std::size_t>();
  stats.n_benign = j.at("n_benign").get<std::size_t>();
  const auto& per = j.at("per_category");
  for (BehaviorCategory c : kAllCategories) {
    const auto& e = per.at(std::string(to_string(c)));
    CategoryStats& s = stats.per_category[c];
    s.webshell_file_fraction = e.at("webshell_file_fraction").get<double>();
    s.benign_file_fraction = e.at("benign_file_fraction").get<double>();
    s.webshell_avg_per_file = e.at("webshell_avg_per_file").get<double>();
    s.benign_avg_per_file = e.at("benign_avg_per_file").get<double>();
    s.webshell_total = e.at("webshell_total").get<std::size_t>();
    s.benign_total = e.at("benign_total").get<std::size_t>();
  }
  return stats;
}

}  // namespace

nlohmann::json to_json(const WeightVector& weights) {
  nlohmann::json j = nlohmann::json::object();
  for (BehaviorCategory c : kAllCategories) j[std::string(to_string(c))] = weights[c];
  return j;
}

WeightVector weights_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("weights must be a JSON object");
  WeightVector w;
  for (const auto& [key, value] : j.items()) {
    auto c = parse_category(key);
    if (!c) throw std::invalid_argument("unknown category '" + key + "' in weights");
    double v = value.get<double>();
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("weight for " + key + " must be finite and >= 0");
    w.weights[*c] = v;
  }
  if (std::abs(w.sum() - 1.0) > 1e-9) throw std::invalid_argument("weights must sum to 1");
  return w;
}

nlohmann::json to_json(const WeightsDocument& doc) {
  return {
      {"format_version", 1},
      {"weights", to_json(doc.weights)},
      {"params", {{"alpha", doc.params.alpha}, {"beta", doc.params.beta}, {"gamma", doc.params.gamma}}},
      {"ratio_transform", std::string(to_string(doc.transform))},
      {"corpus_fingerprint", doc.corpus_fingerprint},
      {"stats", to_json(doc.stats)},
  };
}

WeightsDocument weights_document_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != 1) throw std::invalid_argument("unsupported weights format_version");
  WeightsDocument doc;
  doc.weights = weights_from_json(j.at("weights"));
  const auto& p = j.at("params");
  doc.params = {p.at("alpha").get<double>(), p.at("beta").get<double>(), p.at("gamma").get<double>()};
  doc.transform = parse_ratio_transform(j.at("ratio_transform").get<std::string>());
  doc.corpus_fingerprint = j.value("corpus_fingerprint", "");
  if (j.contains("stats")) doc.stats = stats_from_json(j.at("stats"));
  return doc;
}

void save_weights(const std::filesystem::path& path, const WeightsDocument& doc) {
  write_file_atomic(path, to_json(doc).dump(2) + "\n");
}

WeightsDocument load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open weights file '" + path.string() + "'");
  return weights_document_from_json(nlohmann::json::parse(in));
}

}  // namespace bfad
