#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace streamtts {

using TokenId = int;

/// Text vocabulary layout: two framing tokens followed by regular tokens.
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kFirstTextToken = 2;

/// Framed text X = <bos> x_1 .. x_T <eos>.
class TextSequence {
 public:
  TextSequence() = default;
  /// Validates framing; throws FormatError on violation.
  explicit TextSequence(std::vector<TokenId> tokens, std::size_t vocab_size = 0);
  static TextSequence from_interior(std::span<const TokenId> interior, std::size_t vocab_size = 0);

  const std::vector<TokenId>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  /// Number of interior tokens T.
  std::size_t interior_length() const { return tokens_.size() - 2; }
  TokenId operator[](std::size_t i) const { return tokens_[i]; }

 private:
  std::vector<TokenId> tokens_{kBos, kEos};
};

/// Semantic tokens y_1 .. y_S. The shared initial state y_0 is never stored.
struct SemanticTokenSequence {
  std::vector<TokenId> tokens;
  std::size_t size() const { return tokens.size(); }
};

/// Text replicated once per semantic token emitted at its position (X').
struct DurationAlignedText {
  std::vector<TokenId> tokens;
  std::size_t size() const { return tokens.size(); }
};

/// Parses whitespace-separated ids; "<bos>" and "<eos>" are accepted.
std::vector<TokenId> parse_token_list(const std::string& text);
std::string format_token_list(std::span<const TokenId> tokens);

}  // namespace streamtts
