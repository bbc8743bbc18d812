#pragma once

#include <string>
#include <string_view>

namespace bfad::detail {

/// "http://host:port/v1" -> {"http://host:port", "/v1"}.
struct EndpointParts {
  std::string scheme_host_port;
  std::string path_prefix;
};

EndpointParts split_endpoint(std::string_view url);

/// Value of the named environment variable, or empty.
std::string env_or_empty(const std::string& name);

}  // namespace bfad::detail
