#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ori::text {

/// Unicode canonical composition (NFC) of a UTF-8 string.
std::string nfc(std::string_view utf8);

/// Unicode default case folding of a UTF-8 string.
std::string fold_case(std::string_view utf8);

/// Trims leading/trailing ASCII whitespace and collapses inner runs to one space.
std::string collapse_whitespace(std::string_view s);

/// NFC + whitespace collapse; the canonical form used for corpus text.
std::string normalize_prompt(std::string_view s);

/// NFC + whitespace collapse + case fold; the form used for exact-match grading.
std::string normalize_for_match(std::string_view s);

/// FNV-1a 64-bit hash over raw bytes. Pinned; stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes);

/// Lowercase hex, always 16 digits.
std::string hex64(std::uint64_t v);

/// Number of Unicode code points in a UTF-8 string (lead bytes counted).
std::size_t utf8_length(std::string_view s);

}  // namespace ori::text
