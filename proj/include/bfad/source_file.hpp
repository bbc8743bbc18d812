#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bfad {

/// A PHP source file held as raw bytes. Content is never required to be
/// valid UTF-8.
struct SourceFile {
  std::filesystem::path path;
  std::string content;

  std::size_t byte_length() const { return content.size(); }
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SourceFile read_source_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

namespace utf8 {

inline bool is_continuation(unsigned char b) { return (b & 0xC0) == 0x80; }

/// Moves `pos` backwards onto the lead byte of the character containing it.
/// Gives up after three continuation bytes, which only happens on malformed input.
std::size_t snap_back(std::string_view text, std::size_t pos);

/// Moves `pos` forwards past any continuation bytes.
std::size_t snap_forward(std::string_view text, std::size_t pos);

/// Number of bytes that are not part of a well-formed UTF-8 sequence.
std::size_t count_invalid_bytes(std::string_view text);

}  // namespace utf8

}  // namespace bfad
