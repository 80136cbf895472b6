// SPDX-License-Identifier: Apache-2.0
#include "oceanql/sql/lexer.hpp"

#include "oceanql/text.hpp"

#include <algorithm>
#include <cctype>

namespace oceanql::sql {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || (c & 0x80); }
bool ident_char(char c) { return ident_start(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '$'; }

}  // namespace

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  auto push = [&](TokenKind k, std::size_t start, std::size_t len, std::string txt) {
    std::string up = k == TokenKind::Word ? text::to_upper_ascii(txt) : txt;
    out.push_back({k, std::move(txt), std::move(up), start, len});
  };
  while (i < n) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '-' && i + 1 < n && s[i + 1] == '-') {
      while (i < n && s[i] != '\n') ++i;
    } else if (c == '/' && i + 1 < n && s[i + 1] == '*') {
      const auto e = s.find("*/", i + 2);
      if (e == std::string_view::npos) throw LexError("unterminated comment");
      i = e + 2;
    } else if (c == '\'') {
      std::size_t j = i + 1;
      std::string val;
      for (;;) {
        if (j >= n) throw LexError("unterminated string literal");
        if (s[j] == '\'') {
          if (j + 1 < n && s[j + 1] == '\'') {
            val += '\'';
            j += 2;
            continue;
          }
          break;
        }
        val += s[j++];
      }
      push(TokenKind::String, i, j + 1 - i, val);
      i = j + 1;
    } else if (c == '"' || c == '[' || c == '`') {
      const char close = c == '[' ? ']' : c;
      const auto e = s.find(close, i + 1);
      if (e == std::string_view::npos) throw LexError("unterminated quoted identifier");
      push(TokenKind::QuotedIdent, i, e + 1 - i, std::string(s.substr(i + 1, e - i - 1)));
      i = e + 1;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t j = i;
      while (j < n && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '.' ||
                       ((s[j] == '+' || s[j] == '-') && (s[j - 1] == 'e' || s[j - 1] == 'E')))) {
        ++j;
      }
      push(TokenKind::Number, i, j - i, std::string(s.substr(i, j - i)));
      i = j;
    } else if (ident_start(c)) {
      std::size_t j = i;
      while (j < n && ident_char(s[j])) ++j;
      push(TokenKind::Word, i, j - i, std::string(s.substr(i, j - i)));
      i = j;
    } else if (c == '?' || c == ':' || c == '@' || c == '$') {
      std::size_t j = i + 1;
      while (j < n && ident_char(s[j])) ++j;
      push(TokenKind::Param, i, j - i, std::string(s.substr(i, j - i)));
      i = j;
    } else {
      static const std::string_view two[] = {"<>", "<=", ">=", "!=", "==", "||", "<<", ">>"};
      std::size_t len = 1;
      for (auto t : two) {
        if (s.substr(i, 2) == t) len = 2;
      }
      push(TokenKind::Punct, i, len, std::string(s.substr(i, len)));
      i += len;
    }
  }
  return out;
}

std::string to_sqlite_dialect(std::string_view sql) {
  const auto toks = tokenize(sql);
  struct Edit {
    std::size_t begin, end;
    std::string replacement;
  };
  std::vector<Edit> edits;

  // End offset of the scope that token i belongs to: the first unmatched ')'
  // or the first ';' at depth 0, else end of input.
  auto scope_end = [&](std::size_t i) {
    int depth = 0;
    for (std::size_t j = i; j < toks.size(); ++j) {
      if (toks[j].is_punct("(")) ++depth;
      if (toks[j].is_punct(")")) {
        if (depth == 0) return toks[j].offset;
        --depth;
      }
      if (toks[j].is_punct(";") && depth == 0) return toks[j].offset;
    }
    // Trailing whitespace stays after the inserted LIMIT.
    return toks.empty() ? sql.size() : toks.back().end();
  };

  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (t.is_word("SELECT")) {
      std::size_t j = i + 1;
      if (j < toks.size() && (toks[j].is_word("DISTINCT") || toks[j].is_word("ALL"))) ++j;
      if (j + 1 < toks.size() && toks[j].is_word("TOP")) {
        std::size_t k = j + 1;
        bool paren = toks[k].is_punct("(");
        if (paren) ++k;
        if (k < toks.size() && toks[k].kind == TokenKind::Number) {
          std::size_t last = paren && k + 1 < toks.size() && toks[k + 1].is_punct(")") ? k + 1 : k;
          edits.push_back({toks[j].offset, toks[last].end(), ""});
          edits.push_back({scope_end(last + 1), scope_end(last + 1), " LIMIT " + toks[k].text});
        }
      }
    } else if (t.kind == TokenKind::QuotedIdent && sql[t.offset] == '[') {
      edits.push_back({t.offset, t.end(), "\"" + t.text + "\""});
    }
    if (t.is_identifier() && text::to_lower_ascii(t.text) == "dbo" && i + 2 < toks.size() && toks[i + 1].is_punct(".") &&
        toks[i + 2].is_identifier()) {
      // Replace rather than append so the bracket edit above is not duplicated.
      if (!edits.empty() && edits.back().begin == t.offset) edits.pop_back();
      edits.push_back({t.offset, toks[i + 1].end(), ""});
    }
  }
  std::stable_sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) { return a.begin > b.begin; });
  std::string out(sql);
  for (const auto& e : edits) out.replace(e.begin, e.end - e.begin, e.replacement);
  return out;
}

}  // namespace oceanql::sql
