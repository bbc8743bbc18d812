#include "bfad/scanner.hpp"

#include <algorithm>
#include <cctype>

namespace bfad {
namespace {

bool is_name_start(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalpha(u) || c == '_' || u >= 0x80;
}

bool is_name_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || u >= 0x80;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

// Previous significant token, used to reject method calls and declarations.
enum class Prev { None, Arrow, DoubleColon, Function, New, Other };

class Lexer {
 public:
  Lexer(std::string_view text, const CriticalFunctionRegistry& registry, const ScanOptions& options,
        std::vector<std::string>* warnings, std::string_view label)
      : text_(text), registry_(registry), options_(options), warnings_(warnings), label_(label) {}

  std::vector<FunctionOccurrence> run() {
    while (pos_ < text_.size()) {
      if (in_php_) {
        lex_php();
      } else {
        find_open_tag();
      }
    }
    std::stable_sort(out_.begin(), out_.end(),
                     [](const auto& a, const auto& b) { return a.byte_offset < b.byte_offset; });
    return std::move(out_);
  }

 private:
  char at(std::size_t i) const { return i < text_.size() ? text_[i] : '\0'; }

  void warn(const std::string& msg) {
    if (warnings_) warnings_->push_back(std::string(label_) + ": " + msg);
  }

  std::size_t line_of(std::size_t offset) {
    // Offsets are requested in non-decreasing order almost always; fall back
    // to a rescan otherwise.
    if (offset < line_cursor_) {
      line_cursor_ = 0;
      line_at_cursor_ = 1;
    }
    line_at_cursor_ += static_cast<std::size_t>(
        std::count(text_.begin() + static_cast<std::ptrdiff_t>(line_cursor_),
                   text_.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
    line_cursor_ = offset;
    return line_at_cursor_;
  }

  void find_open_tag() {
    std::size_t p = text_.find("<?", pos_);
    if (p == std::string_view::npos) {
      pos_ = text_.size();
      return;
    }
    std::size_t after = p + 2;
    if (iequals(text_.substr(after, 3), "php") && (after + 3 >= text_.size() || is_space(text_[after + 3]))) {
      pos_ = after + 3;
    } else if (at(after) == '=') {
      pos_ = after + 1;
    } else if (iequals(text_.substr(after, 3), "xml")) {
      pos_ = after;
      return;
    } else {
      pos_ = after;  // short open tag
    }
    in_php_ = true;
    prev_ = Prev::None;
  }

  void lex_php() {
    const char c = text_[pos_];
    const char n = at(pos_ + 1);

    if (is_space(c)) {
      ++pos_;
      return;
    }
    if (c == '?' && n == '>') {
      pos_ += 2;
      in_php_ = false;
      return;
    }
    if (c == '?' && n == '-' && at(pos_ + 2) == '>') {
      pos_ += 3;
      prev_ = Prev::Arrow;
      return;
    }
    if (c == '-' && n == '>') {
      pos_ += 2;
      prev_ = Prev::Arrow;
      return;
    }
    if (c == ':' && n == ':') {
      pos_ += 2;
      prev_ = Prev::DoubleColon;
      return;
    }
    if (c == '#' && n == '[') {
      pos_ += 2;
      prev_ = Prev::Other;
      return;
    }
    if (c == '#' || (c == '/' && n == '/')) {
      pos_ = skip_line_comment(pos_);
      return;
    }
    if (c == '/' && n == '*') {
      pos_ = skip_block_comment(pos_);
      return;
    }
    if (c == '\'' || c == '"' || c == '`') {
      std::size_t end = skip_quoted(pos_);
      maybe_scan_embedded(pos_ + 1, end > pos_ + 1 ? end - 1 : end);
      pos_ = end;
      prev_ = Prev::Other;
      return;
    }
    if (c == '<' && n == '<' && at(pos_ + 2) == '<') {
      if (lex_heredoc()) return;
      pos_ += 3;
      prev_ = Prev::Other;
      return;
    }
    if (c == '$') {
      ++pos_;
      while (pos_ < text_.size() && is_name_char(text_[pos_])) ++pos_;
      prev_ = Prev::Other;
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (pos_ < text_.size() && (is_name_char(text_[pos_]) || text_[pos_] == '.')) ++pos_;
      prev_ = Prev::Other;
      return;
    }
    if (c == '&' && prev_ == Prev::Function) {
      ++pos_;  // function &name(
      return;
    }
    if (is_name_start(c) || (c == '\\' && is_name_start(n))) {
      lex_name();
      return;
    }
    ++pos_;
    prev_ = Prev::Other;
  }

  // Reads a possibly qualified name such as `\eval`, `Foo\exec` or `system`.
  void lex_name() {
    const std::size_t start = pos_;
    bool qualified = false;
    std::size_t segment_start = pos_;
    while (pos_ < text_.size()) {
      if (text_[pos_] == '\\' && is_name_start(at(pos_ + 1))) {
        if (pos_ != start) qualified = true;
        ++pos_;
        segment_start = pos_;
        continue;
      }
      if (!is_name_char(text_[pos_])) break;
      ++pos_;
    }
    std::string_view name = text_.substr(segment_start, pos_ - segment_start);

    const Prev before = prev_;
    if (iequals(name, "function") || iequals(name, "fn")) {
      prev_ = Prev::Function;
      return;
    }
    if (iequals(name, "new")) {
      prev_ = Prev::New;
      return;
    }
    prev_ = Prev::Other;

    if (qualified || before == Prev::Arrow || before == Prev::DoubleColon || before == Prev::Function ||
        before == Prev::New) {
      return;
    }
    auto category = registry_.lookup(name);
    if (!category) return;
    std::size_t paren = skip_trivia(pos_);
    if (at(paren) != '(') return;

    std::string lowered = to_lower_ascii(name);
    if (options_.require_preg_e_modifier && lowered == "preg_replace" && !pattern_may_eval(paren + 1)) {
      return;
    }
    out_.push_back({std::move(lowered), *category, segment_start, line_of(segment_start)});
  }

  std::size_t skip_line_comment(std::size_t p) const {
    while (p < text_.size() && text_[p] != '\n') {
      if (text_[p] == '?' && at(p + 1) == '>') return p;
      ++p;
    }
    return p;
  }

  std::size_t skip_block_comment(std::size_t p) {
    std::size_t end = text_.find("*/", p + 2);
    if (end == std::string_view::npos) {
      warn("unterminated block comment at line " + std::to_string(line_of(p)));
      return text_.size();
    }
    return end + 2;
  }

  // Returns the position just past the closing quote.
  std::size_t skip_quoted(std::size_t p) {
    const char quote = text_[p];
    std::size_t i = p + 1;
    while (i < text_.size()) {
      char ch = text_[i];
      if (ch == '\\') {
        i += 2;
        continue;
      }
      if (ch == quote) return i + 1;
      ++i;
    }
    warn("unterminated string literal at line " + std::to_string(line_of(p)));
    return text_.size();
  }

  // Whitespace and comments between a name and its argument list.
  std::size_t skip_trivia(std::size_t p) const {
    while (p < text_.size()) {
      char ch = text_[p];
      if (is_space(ch)) {
        ++p;
      } else if (ch == '/' && at(p + 1) == '*') {
        std::size_t end = text_.find("*/", p + 2);
        if (end == std::string_view::npos) return text_.size();
        p = end + 2;
      } else if ((ch == '/' && at(p + 1) == '/') || (ch == '#' && at(p + 1) != '[')) {
        p = skip_line_comment(p);
      } else {
        break;
      }
    }
    return p;
  }

  bool lex_heredoc() {
    std::size_t p = pos_ + 3;
    while (at(p) == ' ' || at(p) == '\t') ++p;
    char quote = '\0';
    if (at(p) == '\'' || at(p) == '"') quote = text_[p++];
    std::size_t id_start = p;
    if (!is_name_start(at(p))) return false;
    while (p < text_.size() && is_name_char(text_[p])) ++p;
    std::string_view id = text_.substr(id_start, p - id_start);
    if (quote != '\0') {
      if (at(p) != quote) return false;
      ++p;
    }
    if (at(p) == '\r') ++p;
    if (at(p) != '\n') return false;
    const std::size_t body_start = p + 1;

    std::size_t line_start = body_start;
    while (line_start <= text_.size()) {
      std::size_t q = line_start;
      while (at(q) == ' ' || at(q) == '\t') ++q;
      if (text_.substr(q, id.size()) == id && !is_name_char(at(q + id.size()))) {
        maybe_scan_embedded(body_start, line_start);
        pos_ = q + id.size();
        prev_ = Prev::Other;
        return true;
      }
      std::size_t nl = text_.find('\n', line_start);
      if (nl == std::string_view::npos) break;
      line_start = nl + 1;
    }
    warn("unterminated heredoc '" + std::string(id) + "' at line " + std::to_string(line_of(pos_)));
    maybe_scan_embedded(body_start, text_.size());
    pos_ = text_.size();
    return true;
  }

  // Best-effort `name(` detection inside literal text, used only when
  // count_in_strings is enabled.
  void maybe_scan_embedded(std::size_t begin, std::size_t end) {
    if (!options_.count_in_strings) return;
    std::size_t i = begin;
    while (i < end) {
      if (!is_name_start(text_[i]) || (i > begin && (is_name_char(text_[i - 1]) || text_[i - 1] == '$'))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < end && is_name_char(text_[j])) ++j;
      std::string_view name = text_.substr(i, j - i);
      bool member = i >= begin + 2 && ((text_[i - 2] == '-' && text_[i - 1] == '>') ||
                                       (text_[i - 2] == ':' && text_[i - 1] == ':'));
      if (!member) {
        if (auto category = registry_.lookup(name)) {
          std::size_t k = j;
          while (k < end && is_space(text_[k])) ++k;
          if (k < end && text_[k] == '(') {
            out_.push_back({to_lower_ascii(name), *category, i, line_of(i)});
          }
        }
      }
      i = j;
    }
  }

  // Inspects the first preg_replace argument. Returns false only when it is a
  // string literal whose modifiers provably lack `e`.
  bool pattern_may_eval(std::size_t p) const {
    p = skip_trivia(p);
    char quote = at(p);
    if (quote != '\'' && quote != '"') return true;
    std::string pattern;
    std::size_t i = p + 1;
    bool closed = false;
    while (i < text_.size()) {
      char ch = text_[i];
      if (ch == '\\' && i + 1 < text_.size()) {
        char next = text_[i + 1];
        if (next == quote || next == '\\') {
          pattern.push_back(next);
        } else {
          pattern.push_back(ch);
          pattern.push_back(next);
        }
        i += 2;
        continue;
      }
      if (ch == quote) {
        closed = true;
        break;
      }
      pattern.push_back(ch);
      ++i;
    }
    if (!closed) return true;

    std::size_t d = 0;
    while (d < pattern.size() && is_space(pattern[d])) ++d;
    if (d >= pattern.size()) return false;
    char open = pattern[d];
    char close = open;
    switch (open) {
      case '(': close = ')'; break;
      case '[': close = ']'; break;
      case '{': close = '}'; break;
      case '<': close = '>'; break;
      default: break;
    }
    std::size_t last = pattern.rfind(close);
    if (last == std::string::npos || last == d) return false;
    return pattern.find('e', last + 1) != std::string::npos;
  }

  std::string_view text_;
  const CriticalFunctionRegistry& registry_;
  const ScanOptions& options_;
  std::vector<std::string>* warnings_;
  std::string_view label_;

  std::size_t pos_ = 0;
  bool in_php_ = false;
  Prev prev_ = Prev::None;
  std::size_t line_cursor_ = 0;
  std::size_t line_at_cursor_ = 1;
  std::vector<FunctionOccurrence> out_;
};

}  // namespace

std::vector<FunctionOccurrence> scan(const SourceFile& file, const CriticalFunctionRegistry& registry,
                                     const ScanOptions& options, std::vector<std::string>* warnings) {
  const std::string label = file.path.empty() ? std::string("<memory>") : file.path.string();
  if (warnings) {
    if (std::size_t bad = utf8::count_invalid_bytes(file.content); bad > 0) {
      warnings->push_back(label + ": " + std::to_string(bad) +
                          " byte(s) are not valid UTF-8; scanned as opaque bytes");
    }
  }
  return Lexer(file.content, registry, options, warnings, label).run();
}

CategoryMap<std::size_t> count_by_category(std::span<const FunctionOccurrence> occurrences) {
  CategoryMap<std::size_t> counts;
  for (const auto& occ : occurrences) ++counts[occ.category];
  return counts;
}

}  // namespace bfad
