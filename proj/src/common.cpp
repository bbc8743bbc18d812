#include "bfad/common.hpp"

#include <cstdio>
#include <stdexcept>

#include "bfad/registry.hpp"

namespace bfad {

std::string_view to_string(Label label) { return label == Label::Webshell ? "webshell" : "benign"; }

Label parse_label(std::string_view text) {
  std::string lowered = to_lower_ascii(text);
  if (lowered == "webshell") return Label::Webshell;
  if (lowered == "benign") return Label::Benign;
  throw std::invalid_argument("unknown label '" + std::string(text) + "'");
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace bfad
