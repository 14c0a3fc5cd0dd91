#include "streamtts/dbm/dbm.hpp"

#include <string>

#include "streamtts/error.hpp"

namespace streamtts::dbm {

DbmText apply_dbm(const DurationAlignedText& x_prime) {
  const auto& in = x_prime.tokens;
  std::size_t lead = 0;
  while (lead < in.size() && in[lead] == kBos) ++lead;
  for (std::size_t i = lead; i < in.size(); ++i) {
    if (in[i] == kBos) {
      throw AlignmentError("malformed alignment: <bos> at position " + std::to_string(i) +
                           " follows non-<bos> text");
    }
  }
  DbmText out;
  out.bos_count = lead;
  out.tokens.assign(in.begin() + static_cast<long>(lead), in.end());
  out.tokens.insert(out.tokens.end(), lead, kEos);
  return out;
}

std::optional<TokenId> OnlineDbm::push(TokenId token) {
  if (finished_) throw StateError("OnlineDbm::push after finish()");
  if (!passing_) {
    if (token == kBos) {
      ++bos_count_;
      ++holds_;
      return std::nullopt;
    }
    passing_ = true;
    return token;
  }
  if (token == kBos) {
    throw AlignmentError("malformed alignment: <bos> follows non-<bos> text");
  }
  return token;
}

std::vector<TokenId> OnlineDbm::finish() {
  if (finished_) throw StateError("OnlineDbm::finish called twice");
  finished_ = true;
  return std::vector<TokenId>(bos_count_, kEos);
}

}  // namespace streamtts::dbm
