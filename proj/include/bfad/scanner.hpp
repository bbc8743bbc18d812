#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bfad/registry.hpp"
#include "bfad/source_file.hpp"

namespace bfad {

/// A call-position of a registry function inside a source file.
struct FunctionOccurrence {
  std::string function_name;  // lowercase
  BehaviorCategory category;
  std::size_t byte_offset;  // first byte of the name token
  std::size_t line;         // 1-based

  bool operator==(const FunctionOccurrence&) const = default;
};

struct ScanOptions {
  /// Also report call-shaped names found inside string literals and
  /// heredoc/nowdoc bodies.
  bool count_in_strings = false;

  /// Only report preg_replace when its pattern literal carries the `e`
  /// modifier. A non-literal pattern cannot be checked and is still reported.
  bool require_preg_e_modifier = false;
};

/// Lexically scans PHP source for calls to registry functions.
///
/// A name counts when it sits inside a PHP region (`<?php`, `<?=` or a short
/// `<?` tag up to `?>` or end of file), is followed by `(` (whitespace and
/// comments may intervene), is not inside a comment, string, heredoc or
/// nowdoc, and is not a method call (`->`, `?->`, `::`), a declaration
/// (`function name`), an instantiation (`new name`) or a namespaced name
/// (`Foo\name`). A leading `\` (global namespace) is allowed.
///
/// Results are sorted by byte offset. Diagnostics such as malformed UTF-8 or
/// unterminated constructs are appended to `warnings` when it is non-null.
std::vector<FunctionOccurrence> scan(const SourceFile& file, const CriticalFunctionRegistry& registry,
                                     const ScanOptions& options = {},
                                     std::vector<std::string>* warnings = nullptr);

CategoryMap<std::size_t> count_by_category(std::span<const FunctionOccurrence> occurrences);

}  // namespace bfad
