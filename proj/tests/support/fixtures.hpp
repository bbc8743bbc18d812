#pragma once

// Loader for hand-labelled scanner fixtures. A `.expected` sidecar holds one
// `name line nth` row per expected call: the nth case-insensitive textual
// occurrence of `name` on that 1-based line.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bfad::testing {

struct ExpectedCall {
  std::string name;
  std::size_t offset;
  std::size_t line;
  bool operator==(const ExpectedCall&) const = default;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<ExpectedCall> load_expected(const std::filesystem::path& sidecar, const std::string& content) {
  std::vector<std::size_t> line_starts{0};
  for (std::size_t i = 0; i < content.size(); ++i) {
    if (content[i] == '\n') line_starts.push_back(i + 1);
  }
  const std::string haystack = lower(content);
  std::vector<ExpectedCall> out;
  std::istringstream rows(slurp(sidecar));
  std::string name;
  std::size_t line = 0, nth = 0;
  while (rows >> name >> line >> nth) {
    if (line == 0 || line > line_starts.size() || nth == 0) throw std::runtime_error("bad row in " + sidecar.string());
    const std::size_t begin = line_starts[line - 1];
    const std::size_t end = line < line_starts.size() ? line_starts[line] : content.size();
    std::size_t at = begin;
    std::size_t found = std::string::npos;
    for (std::size_t k = 0; k < nth; ++k) {
      found = haystack.find(name, at);
      if (found == std::string::npos || found >= end) throw std::runtime_error("row not found in " + sidecar.string());
      at = found + 1;
    }
    out.push_back({name, found, line});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.offset < b.offset; });
  return out;
}

inline std::vector<std::filesystem::path> fixture_files(const std::filesystem::path& dir, const std::string& ext) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ext) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace bfad::testing
