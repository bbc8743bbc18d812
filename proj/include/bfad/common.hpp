#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace bfad {

/// Ground-truth class of a file. WebShell is the positive class.
enum class Label { Webshell, Benign };

std::string_view to_string(Label label);

/// Accepts "webshell" or "benign" in any case; throws std::invalid_argument.
Label parse_label(std::string_view text);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 14695981039346656037ULL);

std::string to_hex(std::uint64_t value);

}  // namespace bfad
