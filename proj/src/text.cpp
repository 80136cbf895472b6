// SPDX-License-Identifier: Apache-2.0
#include "oceanql/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>

namespace oceanql::text {

namespace {

constexpr std::array<std::string_view, 58> kStopwords = {
    "a",     "an",    "and",   "any",   "are",   "as",    "at",    "be",
    "by",    "can",   "do",    "does",  "find",  "for",   "from",  "give",
    "have",  "how",   "i",     "in",    "is",    "it",    "its",   "list",
    "me",    "my",    "of",    "on",    "or",    "please", "show", "some",
    "that",  "the",   "their", "them",  "there", "these", "they",  "this",
    "those", "to",    "was",   "were",  "what",  "when",  "where", "which",
    "who",   "whose", "why",   "with",  "you",   "all",   "get",   "name",
    "names", "images"};

}  // namespace

std::string normalize(std::string_view in) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(in.data(), static_cast<int32_t>(in.size())));
  icu::UnicodeString composed;
  if (U_SUCCESS(status)) {
    composed = nfc->normalize(src, status);
  }
  if (U_FAILURE(status)) {
    composed = src;
  }
  composed.toLower();

  icu::UnicodeString cleaned;
  bool pending_space = false;
  for (int32_t i = 0; i < composed.length();) {
    UChar32 c = composed.char32At(i);
    i += U16_LENGTH(c);
    const bool space = u_isUWhiteSpace(c);
    const bool punct = u_ispunct(c) && c != '-';
    if (space || punct) {
      // Punctuation acts as a separator so "jelly,fish" does not fuse.
      pending_space = !cleaned.isEmpty();
      continue;
    }
    if (pending_space) {
      cleaned.append(static_cast<UChar>(' '));
      pending_space = false;
    }
    cleaned.append(c);
  }
  std::string out;
  cleaned.toUTF8String(out);
  return out;
}

std::vector<std::string> split_ws(std::string_view in) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < in.size()) {
    while (i < in.size() && std::isspace(static_cast<unsigned char>(in[i]))) ++i;
    std::size_t j = i;
    while (j < in.size() && !std::isspace(static_cast<unsigned char>(in[j]))) ++j;
    if (j > i) out.emplace_back(in.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_stopword(std::string_view token) {
  return std::find(kStopwords.begin(), kStopwords.end(), token) != kStopwords.end();
}

std::vector<std::string> content_tokens(std::string_view in) {
  auto tokens = split_ws(normalize(in));
  std::erase_if(tokens, [](const std::string& t) { return is_stopword(t); });
  return tokens;
}

std::string trim(std::string_view in) {
  std::size_t b = 0;
  std::size_t e = in.size();
  while (b < e && std::isspace(static_cast<unsigned char>(in[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(in[e - 1]))) --e;
  return std::string(in.substr(b, e - b));
}

std::string to_lower_ascii(std::string_view in) {
  std::string out(in);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string to_upper_ascii(std::string_view in) {
  std::string out(in);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::size_t count_tokens(std::string_view in) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : in) {
    const bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!ws && !in_token) ++n;
    in_token = !ws;
  }
  return n;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string truncate_utf8(std::string_view in, std::size_t max_bytes) {
  if (in.size() <= max_bytes) return std::string(in);
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(in[cut]) & 0xC0) == 0x80) --cut;
  return std::string(in.substr(0, cut));
}

std::uint64_t fnv1a64(std::string_view in) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : in) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string strip_code_fence(std::string_view in) {
  auto t = trim(in);
  if (t.rfind("```", 0) == 0) {
    auto nl = t.find('\n');
    auto end = t.rfind("```");
    if (nl != std::string::npos && end > nl) return trim(std::string_view(t).substr(nl + 1, end - nl - 1));
  }
  return t;
}

}  // namespace oceanql::text
