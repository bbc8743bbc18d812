#include "bfad/registry.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

namespace bfad {
namespace {

constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {
    "ProgramExecution",     "CodeExecution",        "CallbackFunctions",
    "NetworkCommunication", "InformationGathering", "ObfuscationAndEncryption",
};

struct DefaultEntry {
  std::string_view name;
  BehaviorCategory category;
};

// The first two names in each group are the canonical examples for the
// category; the rest extend coverage to common equivalents.
constexpr DefaultEntry kDefaultEntries[] = {
    {"exec", BehaviorCategory::ProgramExecution},
    {"system", BehaviorCategory::ProgramExecution},
    {"shell_exec", BehaviorCategory::ProgramExecution},
    {"passthru", BehaviorCategory::ProgramExecution},
    {"popen", BehaviorCategory::ProgramExecution},
    {"proc_open", BehaviorCategory::ProgramExecution},
    {"pcntl_exec", BehaviorCategory::ProgramExecution},
    {"expect_popen", BehaviorCategory::ProgramExecution},

    {"eval", BehaviorCategory::CodeExecution},
    {"preg_replace", BehaviorCategory::CodeExecution},
    {"assert", BehaviorCategory::CodeExecution},
    {"create_function", BehaviorCategory::CodeExecution},

    {"array_map", BehaviorCategory::CallbackFunctions},
    {"register_shutdown_function", BehaviorCategory::CallbackFunctions},
    {"call_user_func", BehaviorCategory::CallbackFunctions},
    {"call_user_func_array", BehaviorCategory::CallbackFunctions},
    {"array_filter", BehaviorCategory::CallbackFunctions},
    {"array_walk", BehaviorCategory::CallbackFunctions},
    {"array_walk_recursive", BehaviorCategory::CallbackFunctions},
    {"array_reduce", BehaviorCategory::CallbackFunctions},
    {"register_tick_function", BehaviorCategory::CallbackFunctions},
    {"forward_static_call", BehaviorCategory::CallbackFunctions},
    {"forward_static_call_array", BehaviorCategory::CallbackFunctions},
    {"iterator_apply", BehaviorCategory::CallbackFunctions},
    {"preg_replace_callback", BehaviorCategory::CallbackFunctions},
    {"set_error_handler", BehaviorCategory::CallbackFunctions},
    {"set_exception_handler", BehaviorCategory::CallbackFunctions},
    {"usort", BehaviorCategory::CallbackFunctions},
    {"uasort", BehaviorCategory::CallbackFunctions},
    {"uksort", BehaviorCategory::CallbackFunctions},

    {"fsockopen", BehaviorCategory::NetworkCommunication},
    {"curl_init", BehaviorCategory::NetworkCommunication},
    {"pfsockopen", BehaviorCategory::NetworkCommunication},
    {"curl_exec", BehaviorCategory::NetworkCommunication},
    {"curl_multi_exec", BehaviorCategory::NetworkCommunication},
    {"socket_create", BehaviorCategory::NetworkCommunication},
    {"socket_connect", BehaviorCategory::NetworkCommunication},
    {"stream_socket_client", BehaviorCategory::NetworkCommunication},
    {"stream_socket_server", BehaviorCategory::NetworkCommunication},
    {"ftp_connect", BehaviorCategory::NetworkCommunication},

    {"phpinfo", BehaviorCategory::InformationGathering},
    {"getenv", BehaviorCategory::InformationGathering},
    {"php_uname", BehaviorCategory::InformationGathering},
    {"phpversion", BehaviorCategory::InformationGathering},
    {"getmyuid", BehaviorCategory::InformationGathering},
    {"getmypid", BehaviorCategory::InformationGathering},
    {"get_current_user", BehaviorCategory::InformationGathering},
    {"getcwd", BehaviorCategory::InformationGathering},
    {"disk_free_space", BehaviorCategory::InformationGathering},
    {"disk_total_space", BehaviorCategory::InformationGathering},
    {"posix_getpwuid", BehaviorCategory::InformationGathering},
    {"posix_getuid", BehaviorCategory::InformationGathering},
    {"posix_uname", BehaviorCategory::InformationGathering},
    {"ini_get", BehaviorCategory::InformationGathering},
    {"get_cfg_var", BehaviorCategory::InformationGathering},
    {"gethostbyname", BehaviorCategory::InformationGathering},

    {"base64_encode", BehaviorCategory::ObfuscationAndEncryption},
    {"openssl_encrypt", BehaviorCategory::ObfuscationAndEncryption},
    {"base64_decode", BehaviorCategory::ObfuscationAndEncryption},
    {"openssl_decrypt", BehaviorCategory::ObfuscationAndEncryption},
    {"gzinflate", BehaviorCategory::ObfuscationAndEncryption},
    {"gzdeflate", BehaviorCategory::ObfuscationAndEncryption},
    {"gzuncompress", BehaviorCategory::ObfuscationAndEncryption},
    {"gzcompress", BehaviorCategory::ObfuscationAndEncryption},
    {"gzdecode", BehaviorCategory::ObfuscationAndEncryption},
    {"gzencode", BehaviorCategory::ObfuscationAndEncryption},
    {"str_rot13", BehaviorCategory::ObfuscationAndEncryption},
    {"convert_uudecode", BehaviorCategory::ObfuscationAndEncryption},
    {"convert_uuencode", BehaviorCategory::ObfuscationAndEncryption},
    {"hex2bin", BehaviorCategory::ObfuscationAndEncryption},
    {"strrev", BehaviorCategory::ObfuscationAndEncryption},
    {"mcrypt_encrypt", BehaviorCategory::ObfuscationAndEncryption},
    {"mcrypt_decrypt", BehaviorCategory::ObfuscationAndEncryption},
};

bool is_name_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || u >= 0x80;
}

bool is_valid_name(std::string_view name) {
  if (name.empty() || std::isdigit(static_cast<unsigned char>(name.front()))) return false;
  return std::all_of(name.begin(), name.end(), is_name_char);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string format_error(const std::string& source, std::size_t line, const std::string& message) {
  std::ostringstream os;
  os << source;
  if (line > 0) os << ":" << line;
  os << ": " << message;
  return os.str();
}

}  // namespace

std::string_view to_string(BehaviorCategory category) {
  return kCategoryNames[static_cast<std::size_t>(category)];
}

std::optional<BehaviorCategory> parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    if (kCategoryNames[i] == name) return kAllCategories[i];
  }
  return std::nullopt;
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

RegistryError::RegistryError(const std::string& source, std::size_t line, const std::string& message)
    : std::runtime_error(format_error(source, line, message)), line_(line) {}

CriticalFunctionRegistry::CriticalFunctionRegistry(Entries entries) : entries_(std::move(entries)) {
  for (const auto& [name, category] : entries_) {
    if (!is_valid_name(name) || to_lower_ascii(name) != name) {
      throw std::invalid_argument("invalid registry function name: '" + name + "'");
    }
    max_name_length_ = std::max(max_name_length_, name.size());
  }
}

std::optional<BehaviorCategory> CriticalFunctionRegistry::lookup(std::string_view name) const {
  if (name.size() > max_name_length_) return std::nullopt;
  auto it = entries_.find(to_lower_ascii(name));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string CriticalFunctionRegistry::serialize() const {
  std::ostringstream os;
  os << "# function_name = CategoryName\n";
  for (BehaviorCategory category : kAllCategories) {
    bool header = false;
    for (const auto& [name, c] : entries_) {
      if (c != category) continue;
      if (!header) {
        os << "\n# " << to_string(category) << "\n";
        header = true;
      }
      os << name << " = " << to_string(category) << "\n";
    }
  }
  return os.str();
}

CriticalFunctionRegistry load_default_registry() {
  CriticalFunctionRegistry::Entries entries;
  for (const auto& e : kDefaultEntries) entries.emplace(std::string(e.name), e.category);
  return CriticalFunctionRegistry(std::move(entries));
}

CriticalFunctionRegistry parse_registry(std::string_view text, const std::string& source) {
  CriticalFunctionRegistry::Entries entries;
  std::map<std::string, std::size_t, std::less<>> first_seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw RegistryError(source, line_no, "expected 'function_name = CategoryName'");
    }
    std::string name = to_lower_ascii(trim(line.substr(0, eq)));
    std::string_view category_name = trim(line.substr(eq + 1));
    if (!is_valid_name(name)) {
      throw RegistryError(source, line_no, "invalid function name '" + name + "'");
    }
    auto category = parse_category(category_name);
    if (!category) {
      throw RegistryError(source, line_no, "unknown category '" + std::string(category_name) + "'");
    }
    if (auto it = first_seen.find(name); it != first_seen.end()) {
      throw RegistryError(source, line_no,
                          "duplicate function name '" + name + "' (first defined on line " +
                              std::to_string(it->second) + ")");
    }
    first_seen.emplace(name, line_no);
    entries.emplace(std::move(name), *category);
  }
  return CriticalFunctionRegistry(std::move(entries));
}

CriticalFunctionRegistry load_registry_from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RegistryError(path.string(), 0, "cannot open registry file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_registry(buf.str(), path.string());
}

}  // namespace bfad
