#pragma once

#include <cstddef>
#include <vector>

#include "streamtts/tokens.hpp"

namespace streamtts::transducer {

/// Incrementally arriving framed text. Position 0 (<bos>) is available from
/// the start; every later token must arrive() before it can be read.
class TextSource {
 public:
  virtual ~TextSource() = default;

  /// Tokens readable so far.
  virtual std::size_t available() const = 0;
  /// Reads an arrived token.
  virtual TokenId token(std::size_t position) = 0;
  /// Makes the next token readable; false when the text is exhausted.
  virtual bool arrive() = 0;
};

/// Text source that faults with StreamingViolation on any read past the
/// arrived prefix, and records how far reads reached.
class InstrumentedText final : public TextSource {
 public:
  explicit InstrumentedText(const TextSequence& text) : tokens_(text.tokens()) {}

  std::size_t available() const override { return arrived_; }
  TokenId token(std::size_t position) override;
  bool arrive() override;

  /// Number of arrivals after <bos>; each is one unit of text wait.
  std::size_t arrivals() const { return arrived_ - 1; }
  std::size_t reads() const { return reads_; }
  std::size_t max_position_read() const { return max_read_; }
  std::size_t total_length() const { return tokens_.size(); }

 private:
  std::vector<TokenId> tokens_;
  std::size_t arrived_ = 1;
  std::size_t reads_ = 0;
  std::size_t max_read_ = 0;
};

}  // namespace streamtts::transducer
