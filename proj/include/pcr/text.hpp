#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pcr::text {

/// Number of UTF-8 code points in `s`. Continuation bytes are not counted.
std::size_t char_count(std::string_view s);

/// Byte offsets of every code point boundary, including s.size() at the end.
std::vector<std::size_t> char_offsets(std::string_view s);

/// First `max_chars` code points of `s`.
std::string truncate_chars(std::string_view s, std::size_t max_chars);

/// ASCII lowercase; bytes >= 0x80 pass through.
std::string ascii_lower(std::string_view s);

/// Collapse runs of whitespace to one space and trim both ends.
std::string normalize_whitespace(std::string_view s);

/// Join with a single space between parts.
std::string join(const std::vector<std::string>& parts, std::string_view sep = " ");

/// 64-bit FNV-1a. Stable across platforms, used for feature hashing.
std::uint64_t fnv1a64(std::string_view s) noexcept;

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace pcr::text
