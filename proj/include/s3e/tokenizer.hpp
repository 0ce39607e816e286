#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace s3e {

struct TokenizerOptions {
  bool lowercase = true;
};

namespace detail {
inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
inline bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) || (u >= 123 && u <= 126);
}
}  // namespace detail

// Splits on ASCII whitespace, strips leading/trailing ASCII punctuation from
// each piece and drops pieces that become empty. Lowercasing touches ASCII
// letters only; multi-byte UTF-8 sequences pass through unchanged.
inline std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& opts = {}) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_ascii_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !detail::is_ascii_space(text[j])) ++j;
    std::size_t b = i, e = j;
    while (b < e && detail::is_ascii_punct(text[b])) ++b;
    while (e > b && detail::is_ascii_punct(text[e - 1])) --e;
    if (e > b) {
      std::string tok(text.substr(b, e - b));
      if (opts.lowercase) {
        for (char& c : tok) {
          if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        }
      }
      tokens.push_back(std::move(tok));
    }
    i = j;
  }
  return tokens;
}

}  // namespace s3e
