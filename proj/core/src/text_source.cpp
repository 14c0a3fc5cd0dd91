#include "streamtts/transducer/text_source.hpp"

#include <algorithm>
#include <string>

#include "streamtts/error.hpp"

namespace streamtts::transducer {

TokenId InstrumentedText::token(std::size_t position) {
  if (position >= arrived_) {
    throw StreamingViolation("read of text position " + std::to_string(position) +
                             " before it arrived (" + std::to_string(arrived_) +
                             " tokens released)");
  }
  ++reads_;
  max_read_ = std::max(max_read_, position);
  return tokens_[position];
}

bool InstrumentedText::arrive() {
  if (arrived_ >= tokens_.size()) return false;
  ++arrived_;
  return true;
}

}  // namespace streamtts::transducer
