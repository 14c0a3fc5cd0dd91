#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamtts/lattice/lattice.hpp"
#include "streamtts/numerics/rng.hpp"
#include "streamtts/transducer/model.hpp"
#include "streamtts/transducer/text_source.hpp"

namespace streamtts::transducer {

enum class EventKind { kEmit, kAdvance, kDone };

struct DecodeEvent {
  EventKind kind = EventKind::kDone;
  TokenId y = -1;  ///< emitted semantic token
  TokenId x = -1;  ///< duration-aligned text token under the cursor
  std::size_t cursor = 0;
  /// The per-position emission cap forced this advance.
  bool forced = false;
  /// Text positions consumed beyond <bos> when the event was produced.
  std::size_t text_consumed = 0;
  /// Joint evaluations so far, inclusive.
  std::size_t model_calls = 0;
  /// Joint evaluations since the most recent text token was consumed.
  std::size_t calls_since_text = 0;
  /// Log-probability of the sampled action (0 for forced moves).
  double log_prob = 0.0;

  friend bool operator==(const DecodeEvent&, const DecodeEvent&) = default;
};

/// `EMIT <y> <x>`, `ADV` or `DONE`.
std::string format_event(const DecodeEvent& event);
std::string format_events(std::span<const DecodeEvent> events);
std::vector<DecodeEvent> parse_events(const std::string& text);

lattice::AlignmentPath events_to_path(std::span<const DecodeEvent> events);
std::vector<TokenId> emitted_tokens(std::span<const DecodeEvent> events);
DurationAlignedText emitted_duration_text(std::span<const DecodeEvent> events);

struct DecodeOptions {
  std::size_t top_k = 15;
  std::size_t emission_cap = 10;
  std::uint64_t seed = 0;
};

/// Samples an index among the k most probable entries of a log-distribution,
/// renormalised. Ties are ranked by lower index.
std::size_t top_k_sample(std::span<const double> log_probs, std::size_t k, num::Rng& rng);

struct DecodeState {
  std::size_t cursor = 0;
  TokenId current_text = kBos;
  bool encoder_ready = false;
  RecurrentState encoder;
  RecurrentState predictor;
  Tensor encoder_out;
  Tensor predictor_out;
  std::size_t emits_at_cursor = 0;
  std::vector<TokenId> tokens;
  DurationAlignedText duration_text;
  std::size_t model_calls = 0;
  std::size_t calls_since_text = 0;
  double log_prob = 0.0;
  bool done = false;
};

/// Frame-synchronous sampling decoder. Each next() produces one event, or
/// nullopt when the token under the cursor has not arrived yet; the caller
/// then lets more text arrive. The decoder only ever reads the position
/// under its cursor.
class StreamingDecoder {
 public:
  StreamingDecoder(const TransducerModel& model, DecodeOptions options);

  std::optional<DecodeEvent> next(TextSource& text);
  bool done() const { return state_.done; }
  const DecodeState& state() const { return state_; }

 private:
  DecodeEvent advance(bool forced);

  const TransducerModel& model_;
  DecodeOptions options_;
  num::Rng rng_;
  DecodeState state_;
};

/// Runs the decoder to completion, letting text arrive only when asked.
std::vector<DecodeEvent> decode_stream(const TransducerModel& model, TextSource& text,
                                       const DecodeOptions& options);
std::vector<DecodeEvent> decode_stream(const TransducerModel& model, const TextSequence& text,
                                       const DecodeOptions& options);

}  // namespace streamtts::transducer
