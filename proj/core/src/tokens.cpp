#include "streamtts/tokens.hpp"

#include <charconv>
#include <sstream>

#include "streamtts/error.hpp"

namespace streamtts {

TextSequence::TextSequence(std::vector<TokenId> tokens, std::size_t vocab_size)
    : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_.front() != kBos || tokens_.back() != kEos) {
    throw FormatError("text must start with <bos> and end with <eos>");
  }
  for (std::size_t i = 1; i + 1 < tokens_.size(); ++i) {
    const TokenId t = tokens_[i];
    if (t < kFirstTextToken || (vocab_size && static_cast<std::size_t>(t) >= vocab_size)) {
      throw FormatError("text position " + std::to_string(i) + " holds invalid token " +
                        std::to_string(t));
    }
  }
}

TextSequence TextSequence::from_interior(std::span<const TokenId> interior,
                                         std::size_t vocab_size) {
  std::vector<TokenId> t;
  t.reserve(interior.size() + 2);
  t.push_back(kBos);
  t.insert(t.end(), interior.begin(), interior.end());
  t.push_back(kEos);
  return TextSequence(std::move(t), vocab_size);
}

std::vector<TokenId> parse_token_list(const std::string& text) {
  std::istringstream in(text);
  std::vector<TokenId> out;
  std::string word;
  while (in >> word) {
    if (word == "<bos>") {
      out.push_back(kBos);
    } else if (word == "<eos>") {
      out.push_back(kEos);
    } else {
      TokenId v = 0;
      auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), v);
      if (ec != std::errc() || ptr != word.data() + word.size() || v < 0) {
        throw FormatError("not a token id: '" + word + "'");
      }
      out.push_back(v);
    }
  }
  return out;
}

std::string format_token_list(std::span<const TokenId> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(tokens[i]);
  }
  return out;
}

}  // namespace streamtts
