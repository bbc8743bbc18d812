#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bfad {

/// Behavior taxonomy for security-sensitive PHP functions.
enum class BehaviorCategory : std::size_t {
  ProgramExecution = 0,
  CodeExecution,
  CallbackFunctions,
  NetworkCommunication,
  InformationGathering,
  ObfuscationAndEncryption,
};

inline constexpr std::size_t kCategoryCount = 6;

inline constexpr std::array<BehaviorCategory, kCategoryCount> kAllCategories = {
    BehaviorCategory::ProgramExecution,     BehaviorCategory::CodeExecution,
    BehaviorCategory::CallbackFunctions,    BehaviorCategory::NetworkCommunication,
    BehaviorCategory::InformationGathering, BehaviorCategory::ObfuscationAndEncryption,
};

std::string_view to_string(BehaviorCategory category);
std::optional<BehaviorCategory> parse_category(std::string_view name);

/// Fixed-size table indexed by category. Every category always has a slot.
template <typename T>
struct CategoryMap {
  std::array<T, kCategoryCount> values{};

  T& operator[](BehaviorCategory c) { return values[static_cast<std::size_t>(c)]; }
  const T& operator[](BehaviorCategory c) const { return values[static_cast<std::size_t>(c)]; }

  bool operator==(const CategoryMap&) const = default;
};

class RegistryError : public std::runtime_error {
 public:
  RegistryError(const std::string& source, std::size_t line, const std::string& message);

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Maps lowercase PHP function names to their behavior category.
/// Immutable once built; lookups are case-insensitive.
class CriticalFunctionRegistry {
 public:
  using Entries = std::map<std::string, BehaviorCategory, std::less<>>;

  CriticalFunctionRegistry() = default;

  /// Throws std::invalid_argument on an empty/invalid name or a name that is
  /// already registered.
  explicit CriticalFunctionRegistry(Entries entries);

  std::optional<BehaviorCategory> lookup(std::string_view name) const;

  const Entries& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Length of the longest registered name; 0 when empty.
  std::size_t max_name_length() const { return max_name_length_; }

  /// Renders the registry in the `name = Category` text format, grouped by
  /// category. Reloading the output yields an identical mapping.
  std::string serialize() const;

  bool operator==(const CriticalFunctionRegistry& other) const { return entries_ == other.entries_; }

 private:
  Entries entries_;
  std::size_t max_name_length_ = 0;
};

CriticalFunctionRegistry load_default_registry();

/// Parses the text format. `source` names the document in error messages.
CriticalFunctionRegistry parse_registry(std::string_view text, const std::string& source = "<memory>");

CriticalFunctionRegistry load_registry_from_file(const std::filesystem::path& path);

std::string to_lower_ascii(std::string_view s);

}  // namespace bfad
