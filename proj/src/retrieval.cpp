#include "bfad/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bfad {
namespace {

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

}  // namespace

bool BehavioralProfile::has_any() const {
  return std::any_of(kAllCategories.begin(), kAllCategories.end(), [&](BehaviorCategory c) { return has(c); });
}

ProfileError::ProfileError(const std::string& id, BehaviorCategory c, const std::string& cause)
    : std::runtime_error("embedding failed for " + id + " [" + std::string(to_string(c)) + "]: " + cause),
      file_id(id),
      category(c) {}

BehavioralProfile build_profile(std::string file_id, const SourceFile& file, const ExtractedView& view,
                                std::span<const FunctionOccurrence> occurrences, const EmbeddingProvider& provider,
                                std::optional<Label> label) {
  BehavioralProfile profile;
  profile.file_id = std::move(file_id);
  profile.label = label;
  profile.view_text = view.rendered_text;

  const std::string_view content = file.content;
  for (const CodeRegion& region : view.regions) {
    if (region.origin != RegionOrigin::CriticalWindow) continue;
    CategoryMap<bool> anchored{};
    for (const auto& occ : occurrences) {
      if (region.contains(occ.byte_offset)) anchored[occ.category] = true;
    }
    for (BehaviorCategory c : kAllCategories) {
      if (!anchored[c]) continue;
      std::string& text = profile.per_category_text[c];
      if (!text.empty()) text += '\n';
      text += content.substr(region.start, region.size());
    }
  }

  for (BehaviorCategory c : kAllCategories) {
    const std::string& text = profile.per_category_text[c];
    if (text.empty()) continue;
    Embedding e;
    try {
      e = provider.embed(text);
    } catch (const std::exception& ex) {
      throw ProfileError(profile.file_id, c, ex.what());
    }
    if (e.size() != provider.dimension()) {
      throw ProfileError(profile.file_id, c, "provider returned dimension " + std::to_string(e.size()));
    }
    profile.per_category_embedding[c] = std::move(e);
  }
  return profile;
}

double category_similarity(const BehavioralProfile& x, const BehavioralProfile& y, BehaviorCategory category) {
  if (!x.has(category) || !y.has(category)) return 0.0;
  return cosine_similarity(x.per_category_embedding[category], y.per_category_embedding[category]);
}

double weighted_similarity(const BehavioralProfile& x, const BehavioralProfile& y, const WeightVector& weights) {
  double sim = 0.0;
  for (BehaviorCategory c : kAllCategories) {
    if (weights[c] == 0.0) continue;
    sim += weights[c] * category_similarity(x, y, c);
  }
  return sim;
}

void DemonstrationLibrary::validate() const {
  if (profiles.empty()) throw std::invalid_argument("demonstration library is empty");
  double total = 0.0;
  for (double w : weights.weights.values) {
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("library weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("library weights must sum to 1");
  std::set<std::string_view> ids;
  for (const auto& p : profiles) {
    if (!p.label) throw std::invalid_argument("library profile '" + p.file_id + "' has no label");
    if (!ids.insert(p.file_id).second) throw std::invalid_argument("duplicate library id '" + p.file_id + "'");
    for (BehaviorCategory c : kAllCategories) {
      if (p.has(c) && p.per_category_embedding[c].size() != dimension) {
        throw std::invalid_argument("library profile '" + p.file_id + "' has a wrong-dimension embedding");
      }
    }
  }
}

std::string_view to_string(LabelPolicy policy) {
  switch (policy) {
    case LabelPolicy::Any: return "any";
    case LabelPolicy::Webshell: return "webshell";
    case LabelPolicy::Benign: return "benign";
    case LabelPolicy::Mix: return "mix";
  }
  return "any";
}

LabelPolicy parse_label_policy(std::string_view name) {
  std::string lowered = to_lower_ascii(name);
  if (lowered == "any" || lowered == "none") return LabelPolicy::Any;
  if (lowered == "webshell") return LabelPolicy::Webshell;
  if (lowered == "benign") return LabelPolicy::Benign;
  if (lowered == "mix") return LabelPolicy::Mix;
  throw std::invalid_argument("unknown label policy '" + std::string(name) + "'");
}

std::vector<ScoredDemonstration> select_demonstration(const BehavioralProfile& target,
                                                      const DemonstrationLibrary& library, std::size_t k,
                                                      LabelPolicy policy, std::vector<std::string>* warnings) {
  if (library.profiles.empty()) throw std::invalid_argument("demonstration library is empty");
  if (warnings && !target.has_any()) {
    warnings->push_back(target.file_id + ": no behavioral signal; demonstrations ranked by id only");
  }

  std::vector<ScoredDemonstration> ranked;
  ranked.reserve(library.profiles.size());
  for (std::size_t i = 0; i < library.profiles.size(); ++i) {
    const auto& candidate = library.profiles[i];
    if (candidate.file_id == target.file_id) continue;
    if (policy == LabelPolicy::Webshell && candidate.label != Label::Webshell) continue;
    if (policy == LabelPolicy::Benign && candidate.label != Label::Benign) continue;
    ranked.push_back({i, weighted_similarity(target, candidate, library.weights)});
  }
  std::sort(ranked.begin(), ranked.end(), [&](const ScoredDemonstration& a, const ScoredDemonstration& b) {
    if (a.score != b.score) return a.score > b.score;
    return library.profiles[a.index].file_id < library.profiles[b.index].file_id;
  });

  if (policy != LabelPolicy::Mix) {
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
  }

  std::vector<ScoredDemonstration> picked;
  std::vector<bool> used(ranked.size(), false);
  std::optional<Label> want;
  while (picked.size() < k && picked.size() < ranked.size()) {
    std::size_t choice = ranked.size();
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (used[i]) continue;
      if (choice == ranked.size()) choice = i;  // best remaining of any label
      if (!want || library.profiles[ranked[i].index].label == want) {
        choice = i;
        break;
      }
    }
    used[choice] = true;
    picked.push_back(ranked[choice]);
    Label got = *library.profiles[ranked[choice].index].label;
    want = got == Label::Webshell ? Label::Benign : Label::Webshell;
  }
  return picked;
}

void save_library(const std::filesystem::path& dir, const DemonstrationLibrary& library) {
  library.validate();
  std::filesystem::create_directories(dir / "profiles");
  nlohmann::json profiles = nlohmann::json::array();
  for (std::size_t i = 0; i < library.profiles.size(); ++i) {
    const auto& p = library.profiles[i];
    const std::string rel = "profiles/" + std::to_string(i);
    std::filesystem::create_directories(dir / rel);
    write_file_atomic(dir / rel / "view.txt", p.view_text);
    nlohmann::json categories = nlohmann::json::array();
    for (BehaviorCategory c : kAllCategories) {
      if (!p.has(c)) continue;
      const std::string name(to_string(c));
      nlohmann::json record = {{"text", p.per_category_text[c]}, {"embedding", p.per_category_embedding[c]}};
      write_file_atomic(dir / rel / (name + ".json"), record.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
      categories.push_back(name);
    }
    profiles.push_back(
        {{"file_id", p.file_id}, {"label", std::string(to_string(*p.label))}, {"dir", rel}, {"categories", categories}});
  }
  nlohmann::json manifest = {
      {"format_version", 1},
      {"provider_id", library.provider_id},
      {"dimension", library.dimension},
      {"weights", to_json(library.weights)},
      {"profiles", profiles},
  };
  write_file_atomic(dir / "manifest.json", manifest.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
}

DemonstrationLibrary load_library(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_all(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed library manifest: " + std::string(e.what()));
  }
  if (manifest.value("format_version", 0) != 1) throw std::invalid_argument("unsupported library format_version");

  DemonstrationLibrary library;
  library.provider_id = manifest.at("provider_id").get<std::string>();
  library.dimension = manifest.at("dimension").get<std::size_t>();
  library.weights = weights_from_json(manifest.at("weights"));
  for (const auto& entry : manifest.at("profiles")) {
    BehavioralProfile p;
    p.file_id = entry.at("file_id").get<std::string>();
    p.label = parse_label(entry.at("label").get<std::string>());
    const std::filesystem::path rel = entry.at("dir").get<std::string>();
    p.view_text = read_all(dir / rel / "view.txt");
    for (const auto& name : entry.at("categories")) {
      auto c = parse_category(name.get<std::string>());
      if (!c) throw std::invalid_argument("unknown category in library: " + name.get<std::string>());
      auto record = nlohmann::json::parse(read_all(dir / rel / (name.get<std::string>() + ".json")));
      p.per_category_text[*c] = record.at("text").get<std::string>();
      p.per_category_embedding[*c] = record.at("embedding").get<Embedding>();
    }
    library.profiles.push_back(std::move(p));
  }
  library.validate();
  return library;
}

}  // namespace bfad
