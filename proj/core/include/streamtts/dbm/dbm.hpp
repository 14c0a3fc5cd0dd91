#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "streamtts/tokens.hpp"

namespace streamtts::dbm {

/// Duration-aligned text with its leading <bos> run removed and the same
/// number of <eos> appended. Length always equals the source length.
struct DbmText {
  std::vector<TokenId> tokens;
  std::size_t bos_count = 0;
};

/// Offline transform. Throws AlignmentError when a <bos> follows any other
/// token. Prompt text is never passed through here by the pipeline unless
/// the prompt-DBM ablation is switched on.
DbmText apply_dbm(const DurationAlignedText& x_prime);

/// Streaming form of apply_dbm, one token at a time. Holds while the leading
/// <bos> run arrives, then passes tokens through; finish() yields the padding.
class OnlineDbm {
 public:
  /// Returns the emitted token, or nullopt for Hold.
  std::optional<TokenId> push(TokenId token);
  /// Trailing <eos> tokens owed after upstream is done.
  std::vector<TokenId> finish();

  std::size_t bos_count() const { return bos_count_; }
  std::size_t holds() const { return holds_; }
  bool passing_through() const { return passing_; }

 private:
  std::size_t bos_count_ = 0;
  std::size_t holds_ = 0;
  bool passing_ = false;
  bool finished_ = false;
};

}  // namespace streamtts::dbm
