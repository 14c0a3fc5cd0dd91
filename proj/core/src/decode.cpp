#include "streamtts/transducer/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "streamtts/error.hpp"

namespace streamtts::transducer {

std::string format_event(const DecodeEvent& event) {
  switch (event.kind) {
    case EventKind::kEmit:
      return "EMIT " + std::to_string(event.y) + " " + std::to_string(event.x);
    case EventKind::kAdvance:
      return "ADV";
    case EventKind::kDone:
      return "DONE";
  }
  return {};
}

std::string format_events(std::span<const DecodeEvent> events) {
  std::string out;
  for (const auto& e : events) out += format_event(e) + "\n";
  return out;
}

std::vector<DecodeEvent> parse_events(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<DecodeEvent> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    DecodeEvent e;
    if (word == "EMIT") {
      e.kind = EventKind::kEmit;
      if (!(ls >> e.y >> e.x)) throw FormatError("malformed EMIT record: '" + line + "'");
    } else if (word == "ADV") {
      e.kind = EventKind::kAdvance;
    } else if (word == "DONE") {
      e.kind = EventKind::kDone;
    } else {
      throw FormatError("unknown event record: '" + line + "'");
    }
    out.push_back(e);
  }
  return out;
}

lattice::AlignmentPath events_to_path(std::span<const DecodeEvent> events) {
  lattice::AlignmentPath path;
  for (const auto& e : events) {
    path.moves.push_back(e.kind == EventKind::kEmit ? lattice::Move::kEmit
                                                    : lattice::Move::kWait);
    path.log_prob += e.log_prob;
  }
  return path;
}

std::vector<TokenId> emitted_tokens(std::span<const DecodeEvent> events) {
  std::vector<TokenId> out;
  for (const auto& e : events) {
    if (e.kind == EventKind::kEmit) out.push_back(e.y);
  }
  return out;
}

DurationAlignedText emitted_duration_text(std::span<const DecodeEvent> events) {
  DurationAlignedText out;
  for (const auto& e : events) {
    if (e.kind == EventKind::kEmit) out.tokens.push_back(e.x);
  }
  return out;
}

std::size_t top_k_sample(std::span<const double> log_probs, std::size_t k, num::Rng& rng) {
  if (k == 0) throw Error("top-k sampling needs k >= 1");
  if (log_probs.empty()) throw DimensionError("top-k sampling over an empty distribution");
  std::vector<std::size_t> order(log_probs.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t kk = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(kk), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return log_probs[a] > log_probs[b] ||
                             (log_probs[a] == log_probs[b] && a < b);
                    });
  const double top = log_probs[order[0]];
  std::vector<double> w(kk);
  double z = 0.0;
  for (std::size_t r = 0; r < kk; ++r) z += (w[r] = std::exp(log_probs[order[r]] - top));
  const double u = rng.uniform() * z;
  double acc = 0.0;
  for (std::size_t r = 0; r < kk; ++r) {
    acc += w[r];
    if (u < acc) return order[r];
  }
  return order[kk - 1];
}

StreamingDecoder::StreamingDecoder(const TransducerModel& model, DecodeOptions options)
    : model_(model), options_(options), rng_(options.seed) {
  if (options_.top_k == 0) throw Error("decode needs top_k >= 1");
  if (options_.emission_cap == 0) throw Error("decode needs emission_cap >= 1");
  state_.encoder = model_.encoder_initial();
  state_.predictor = model_.predictor_initial();
  state_.predictor_out =
      model_.predictor_step(state_.predictor, model_.config().initial_state_row());
}

DecodeEvent StreamingDecoder::advance(bool forced) {
  DecodeEvent e;
  e.cursor = state_.cursor;
  e.forced = forced;
  e.text_consumed = state_.cursor;
  e.model_calls = state_.model_calls;
  e.calls_since_text = state_.calls_since_text;
  if (state_.current_text == kEos) {
    e.kind = EventKind::kDone;
    state_.done = true;
  } else {
    e.kind = EventKind::kAdvance;
    ++state_.cursor;
    state_.encoder_ready = false;
    state_.emits_at_cursor = 0;
  }
  return e;
}

std::optional<DecodeEvent> StreamingDecoder::next(TextSource& text) {
  if (state_.done) throw StateError("decoder already finished");
  if (!state_.encoder_ready) {
    if (state_.cursor >= text.available()) return std::nullopt;
    const TokenId x = text.token(state_.cursor);
    if ((state_.cursor == 0) != (x == kBos)) {
      throw FormatError("text position " + std::to_string(state_.cursor) +
                        (x == kBos ? " repeats <bos>" : " must be <bos>"));
    }
    state_.current_text = x;
    state_.encoder_out = model_.encoder_step(state_.encoder, x);
    state_.encoder_ready = true;
    if (state_.cursor > 0) state_.calls_since_text = 0;
  }
  if (state_.emits_at_cursor >= options_.emission_cap) return advance(true);

  const Tensor lp = model_.joint(state_.encoder_out, state_.predictor_out);
  ++state_.model_calls;
  ++state_.calls_since_text;
  const std::size_t idx = top_k_sample(lp.values(), options_.top_k, rng_);
  state_.log_prob += lp[idx];
  if (idx == kBlank) {
    DecodeEvent e = advance(false);
    e.log_prob = lp[idx];
    return e;
  }
  const auto y = static_cast<TokenId>(idx - 1);
  DecodeEvent e;
  e.kind = EventKind::kEmit;
  e.y = y;
  e.x = state_.current_text;
  e.cursor = state_.cursor;
  e.text_consumed = state_.cursor;
  e.model_calls = state_.model_calls;
  e.calls_since_text = state_.calls_since_text;
  e.log_prob = lp[idx];
  state_.tokens.push_back(y);
  state_.duration_text.tokens.push_back(state_.current_text);
  ++state_.emits_at_cursor;
  state_.predictor_out = model_.predictor_step(state_.predictor, y);
  return e;
}

std::vector<DecodeEvent> decode_stream(const TransducerModel& model, TextSource& text,
                                       const DecodeOptions& options) {
  StreamingDecoder decoder(model, options);
  std::vector<DecodeEvent> events;
  while (!decoder.done()) {
    auto e = decoder.next(text);
    if (!e) {
      if (!text.arrive()) throw FormatError("text ended before <eos>");
      continue;
    }
    events.push_back(*e);
  }
  return events;
}

std::vector<DecodeEvent> decode_stream(const TransducerModel& model, const TextSequence& text,
                                       const DecodeOptions& options) {
  InstrumentedText source(text);
  return decode_stream(model, source, options);
}

}  // namespace streamtts::transducer
