#include "http_util.hpp"

#include <cstdlib>
#include <stdexcept>

namespace bfad::detail {

EndpointParts split_endpoint(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw std::invalid_argument("endpoint URL must include a scheme: '" + std::string(url) + "'");
  }
  auto path_start = url.find('/', scheme_end + 3);
  EndpointParts parts;
  if (path_start == std::string_view::npos) {
    parts.scheme_host_port = std::string(url);
  } else {
    parts.scheme_host_port = std::string(url.substr(0, path_start));
    parts.path_prefix = std::string(url.substr(path_start));
    while (!parts.path_prefix.empty() && parts.path_prefix.back() == '/') parts.path_prefix.pop_back();
  }
  return parts;
}

std::string env_or_empty(const std::string& name) {
  if (name.empty()) return {};
  const char* value = std::getenv(name.c_str());
  return value ? std::string(value) : std::string();
}

}  // namespace bfad::detail
