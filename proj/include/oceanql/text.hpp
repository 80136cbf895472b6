// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace oceanql::text {

/// NFC, lowercase, punctuation stripped (hyphens kept), whitespace collapsed
/// and trimmed. Shared by the KG builder and name resolution so keys built
/// offline match lookups at query time.
std::string normalize(std::string_view in);

std::vector<std::string> split_ws(std::string_view in);

/// Tokens of normalize(in) with stopwords removed.
std::vector<std::string> content_tokens(std::string_view in);

bool is_stopword(std::string_view token);

std::string trim(std::string_view in);

/// Body of a ``` fenced block (language tag dropped), else the trimmed input.
std::string strip_code_fence(std::string_view in);
std::string to_lower_ascii(std::string_view in);
std::string to_upper_ascii(std::string_view in);

/// Whitespace-delimited token count; the mock provider's token measure.
std::size_t count_tokens(std::string_view in);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Truncates to at most max_bytes without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view in, std::size_t max_bytes);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view in);

std::string hex64(std::uint64_t v);

}  // namespace oceanql::text
