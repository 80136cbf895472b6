// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oceanql::sql {

enum class TokenKind { Word, QuotedIdent, Number, String, Punct, Param };

struct Token {
  TokenKind kind;
  std::string text;   // source slice; for QuotedIdent the unquoted name
  std::string upper;  // uppercase of text for Word, else text
  std::size_t offset;
  std::size_t length;

  [[nodiscard]] bool is_word(std::string_view w) const { return kind == TokenKind::Word && upper == w; }
  [[nodiscard]] bool is_punct(std::string_view p) const { return kind == TokenKind::Punct && text == p; }
  [[nodiscard]] bool is_identifier() const { return kind == TokenKind::Word || kind == TokenKind::QuotedIdent; }
  [[nodiscard]] std::size_t end() const { return offset + length; }
};

class LexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Comments and whitespace are dropped. Accepts "..", [..] and `..` quoted
/// identifiers. Throws LexError on unterminated strings or comments.
std::vector<Token> tokenize(std::string_view sql);

/// Rewrites SQL Server spellings the model tends to produce into SQLite:
/// SELECT TOP n becomes a LIMIT at the end of that SELECT's scope, and a
/// dbo. schema prefix is dropped. Bracketed identifiers become "quoted".
std::string to_sqlite_dialect(std::string_view sql);

}  // namespace oceanql::sql
