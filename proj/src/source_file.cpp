#include "bfad/source_file.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

namespace bfad {

SourceFile read_source_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw IoError("cannot read '" + path.string() + "': not a regular file");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read error on '" + path.string() + "'");
  return SourceFile{path, std::move(buf).str()};
}

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write error on '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into '" + path.string() + "': " + ec.message());
}

namespace utf8 {

std::size_t snap_back(std::string_view text, std::size_t pos) {
  for (int steps = 0; steps < 3 && pos > 0 && pos < text.size() &&
                      is_continuation(static_cast<unsigned char>(text[pos]));
       ++steps) {
    --pos;
  }
  return pos;
}

std::size_t snap_forward(std::string_view text, std::size_t pos) {
  for (int steps = 0; steps < 3 && pos < text.size() &&
                      is_continuation(static_cast<unsigned char>(text[pos]));
       ++steps) {
    ++pos;
  }
  return pos;
}

std::size_t count_invalid_bytes(std::string_view text) {
  std::size_t invalid = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    auto b = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    if (b < 0x80) len = 1;
    else if ((b & 0xE0) == 0xC0 && b >= 0xC2) len = 2;
    else if ((b & 0xF0) == 0xE0) len = 3;
    else if ((b & 0xF8) == 0xF0 && b <= 0xF4) len = 4;

    bool ok = len > 0 && i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      ok = is_continuation(static_cast<unsigned char>(text[i + k]));
    }
    if (ok) {
      i += len;
    } else {
      ++invalid;
      ++i;
    }
  }
  return invalid;
}

}  // namespace utf8

}  // namespace bfad
