#include "streamtts/pipeline/synthesis.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <exception>
#include <sstream>
#include <thread>

#include "streamtts/dbm/dbm.hpp"
#include "streamtts/error.hpp"
#include "streamtts/lattice/lattice.hpp"
#include "streamtts/pipeline/queue.hpp"

namespace streamtts::pipeline {

using transducer::DecodeEvent;
using transducer::EventKind;

void Prompt::validate(std::size_t mel_dim) const {
  if (text.size() != tokens.size() || mel.empty() != tokens.empty() ||
      (!tokens.empty() && (mel.rows() != tokens.size() || mel.cols() != mel_dim))) {
    throw DimensionError("prompt lengths disagree: text " + std::to_string(text.size()) +
                         ", tokens " + std::to_string(tokens.size()) + ", mel " +
                         num::shape_string(mel.shape()));
  }
}

void RunConfig::validate() const {
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (resample < 1) throw ConfigError("resample count must be at least 1");
  if (emission_cap < 1) throw ConfigError("emission_cap must be at least 1");
}

void Models::validate() const {
  const auto& t = transducer.config();
  const auto& a = ar.config();
  if (t.text_vocab != a.text_vocab || t.sem_vocab != a.sem_vocab) {
    throw ConfigError("transducer and AR checkpoints disagree on vocabulary sizes");
  }
}

namespace {

constexpr std::uint64_t kDecodeStream = 0;
constexpr std::uint64_t kArStream = 1;
constexpr std::uint64_t kPromptStream = std::uint64_t{1} << 40;

struct StageMessage {
  std::optional<TokenId> y;
  std::optional<TokenId> xd;
  DecodeEvent event;
  bool end = false;
};

/// AR consumer: pairs semantic tokens with DBM text in arrival order and
/// runs one step per pair. Shared by the streaming and offline paths so both
/// use identical per-step noise.
class ArStage {
 public:
  ArStage(const ar::ArModel& model, const RunConfig& config, const Prompt* prompt)
      : model_(model),
        seed_(num::derive_seed(config.seed, kArStream)),
        cache_(model.empty_cache()),
        prev_(Tensor({1, model.config().mel_dim}, 0.0)) {
    if (prompt == nullptr || prompt->size() == 0) return;
    std::vector<TokenId> text = prompt->text;
    if (config.prompt_dbm) text = dbm::apply_dbm(DurationAlignedText{text}).tokens;
    for (std::size_t p = 0; p < prompt->size(); ++p) {
      num::Rng rng(num::derive_seed(seed_, kPromptStream + p));
      model_.prefill(cache_, p, prompt->tokens[p], text[p], prev_, rng);
      for (std::size_t c = 0; c < prev_.cols(); ++c) prev_(0, c) = prompt->mel(p, c);
    }
    prompt_steps_ = prompt->size();
  }

  Tensor step(TokenId y, TokenId xd) {
    num::Rng rng(num::derive_seed(seed_, generated_));
    ar::ArStepInput in;
    in.position = cache_.steps;
    in.y = y;
    in.x = xd;
    in.mel_prev = &prev_;
    ar::ArStepResult r = model_.step(cache_, in, rng);
    prev_ = r.mel;
    ++generated_;
    return std::move(r.mel);
  }

  std::size_t prompt_steps() const { return prompt_steps_; }

 private:
  const ar::ArModel& model_;
  std::uint64_t seed_;
  ar::DecoderCache cache_;
  Tensor prev_;
  std::size_t generated_ = 0;
  std::size_t prompt_steps_ = 0;
};

transducer::DecodeOptions decode_options(const RunConfig& config) {
  transducer::DecodeOptions o;
  o.top_k = config.top_k;
  o.emission_cap = config.emission_cap;
  o.seed = num::derive_seed(config.seed, kDecodeStream);
  return o;
}

Tensor stack_frames(const std::vector<Tensor>& frames, std::size_t dim) {
  Tensor mel({frames.size(), dim});
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t c = 0; c < dim; ++c) mel(f, c) = frames[f](0, c);
  }
  return mel;
}

/// Transducer + online DBM. Hands every message to `emit`.
template <typename Emit>
void produce(const Models& models, const RunConfig& config, transducer::TextSource& text,
             Emit&& emit) {
  transducer::StreamingDecoder decoder(models.transducer, decode_options(config));
  dbm::OnlineDbm online;
  while (true) {
    auto e = decoder.next(text);
    if (!e) {
      if (!text.arrive()) throw FormatError("text ended before <eos>");
      continue;
    }
    if (e->kind == EventKind::kEmit) {
      emit(StageMessage{e->y, online.push(e->x), *e, false});
    } else if (e->kind == EventKind::kAdvance) {
      emit(StageMessage{std::nullopt, std::nullopt, *e, false});
    } else {
      for (TokenId pad : online.finish()) emit(StageMessage{std::nullopt, pad, *e, false});
      emit(StageMessage{std::nullopt, std::nullopt, *e, true});
      return;
    }
  }
}

class Consumer {
 public:
  Consumer(const Models& models, const RunConfig& config, const Prompt* prompt,
           const FrameSink& sink)
      : stage_(models.ar, config, prompt),
        sink_(sink),
        start_(std::chrono::steady_clock::now()) {
    result_.ledger.prompt_steps = stage_.prompt_steps();
  }

  /// Returns false after the end message.
  bool take(const StageMessage& m) {
    // Padding messages repeat the Done event; it is recorded once, at the end.
    if (m.event.kind != EventKind::kDone || m.end) {
      result_.events.push_back(m.event);
      result_.log_prob += m.event.log_prob;
    }
    if (m.y) {
      ys_.push_back(*m.y);
      result_.tokens.push_back(*m.y);
    }
    if (m.xd) {
      xs_.push_back(*m.xd);
      result_.dbm_text.push_back(*m.xd);
    }
    while (!ys_.empty() && !xs_.empty()) {
      Tensor frame = stage_.step(ys_.front(), xs_.front());
      ys_.pop_front();
      xs_.pop_front();
      auto& ledger = result_.ledger;
      if (!ledger.first_frame) {
        ledger.first_frame = true;
        ledger.text_waits = m.event.text_consumed;
        ledger.model_steps = m.event.calls_since_text + 1;
        ledger.model_calls = m.event.model_calls + ledger.prompt_steps + 1;
      }
      const auto now = std::chrono::steady_clock::now();
      ledger.timeline.push_back(
          {"frame " + std::to_string(frames_.size()),
           std::chrono::duration_cast<std::chrono::nanoseconds>(now - start_).count()});
      if (sink_) sink_(frames_.size(), frame);
      frames_.push_back(std::move(frame));
    }
    if (!m.end) return true;
    if (!ys_.empty() || !xs_.empty()) {
      throw StateError("semantic tokens and DBM text ended with different lengths");
    }
    return false;
  }

  SynthesisResult finish(std::size_t mel_dim) {
    result_.mel = stack_frames(frames_, mel_dim);
    return std::move(result_);
  }

 private:
  ArStage stage_;
  const FrameSink& sink_;
  std::chrono::steady_clock::time_point start_;
  std::deque<TokenId> ys_;
  std::deque<TokenId> xs_;
  std::vector<Tensor> frames_;
  SynthesisResult result_;
};

void check_inputs(const Models& models, const RunConfig& config, const Prompt* prompt) {
  config.validate();
  models.validate();
  if (prompt != nullptr) prompt->validate(models.ar.config().mel_dim);
}

}  // namespace

SynthesisResult synthesize_stream(const Models& models, const RunConfig& config,
                                  const Prompt* prompt, transducer::TextSource& text,
                                  const FrameSink& sink) {
  check_inputs(models, config, prompt);
  Consumer consumer(models, config, prompt, sink);
  if (!config.threaded) {
    produce(models, config, text, [&](const StageMessage& m) { consumer.take(m); });
    return consumer.finish(models.ar.config().mel_dim);
  }

  BoundedQueue<StageMessage> queue(config.queue_capacity);
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      produce(models, config, text, [&](const StageMessage& m) { queue.push(m); });
    } catch (...) {
      producer_error = std::current_exception();
      StageMessage stop;
      stop.end = true;
      stop.event.kind = EventKind::kDone;
      queue.push(stop);
    }
  });
  std::exception_ptr consumer_error;
  bool ended = false;
  try {
    while (!ended) {
      StageMessage m = queue.pop();
      ended = m.end;
      if (m.end && producer_error) break;
      consumer.take(m);
    }
  } catch (...) {
    consumer_error = std::current_exception();
    // Drain so the producer is never left blocked on a full queue.
    while (!ended) ended = queue.pop().end;
  }
  producer.join();
  if (producer_error) std::rethrow_exception(producer_error);
  if (consumer_error) std::rethrow_exception(consumer_error);
  return consumer.finish(models.ar.config().mel_dim);
}

SynthesisResult synthesize_stream(const Models& models, const RunConfig& config,
                                  const Prompt* prompt, const TextSequence& text) {
  transducer::InstrumentedText source(text);
  return synthesize_stream(models, config, prompt, source);
}

SynthesisResult synthesize_offline(const Models& models, const RunConfig& config,
                                   const Prompt* prompt, const TextSequence& text) {
  check_inputs(models, config, prompt);
  SynthesisResult r;
  r.events = transducer::decode_stream(models.transducer, text, decode_options(config));
  for (const auto& e : r.events) r.log_prob += e.log_prob;
  r.tokens = transducer::emitted_tokens(r.events);
  const DurationAlignedText x_prime =
      lattice::path_to_duration_text(transducer::events_to_path(r.events), text.tokens());
  r.dbm_text = dbm::apply_dbm(x_prime).tokens;
  ArStage stage(models.ar, config, prompt);
  std::vector<Tensor> frames;
  for (std::size_t t = 0; t < r.tokens.size(); ++t) {
    frames.push_back(stage.step(r.tokens[t], r.dbm_text[t]));
  }
  r.mel = stack_frames(frames, models.ar.config().mel_dim);
  r.ledger.prompt_steps = stage.prompt_steps();
  return r;
}

std::size_t edit_distance(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

ScoreFn edit_scorer(std::vector<TokenId> reference) {
  return [ref = std::move(reference)](const SynthesisResult& r) {
    const double denom = ref.empty() ? 1.0 : static_cast<double>(ref.size());
    return static_cast<double>(edit_distance(r.tokens, ref)) / denom;
  };
}

ScoreFn loglik_scorer() {
  return [](const SynthesisResult& r) {
    if (r.events.empty()) throw EvaluationError("no decode events to score");
    return -r.log_prob / static_cast<double>(r.events.size());
  };
}

std::uint64_t candidate_seed(std::uint64_t seed, std::size_t index) {
  return index == 0 ? seed : num::derive_seed(seed, 0x5eed0000u + index);
}

ResampleResult resample_best(const Models& models, const RunConfig& config, const Prompt* prompt,
                             const TextSequence& text, const ScoreFn& scorer) {
  config.validate();
  ResampleResult out;
  std::optional<double> best_score;
  for (std::size_t i = 0; i < config.resample; ++i) {
    RunConfig c = config;
    c.seed = candidate_seed(config.seed, i);
    SynthesisResult r = synthesize_stream(models, c, prompt, text);
    Candidate cand;
    cand.seed = c.seed;
    try {
      const double s = scorer(r);
      if (!std::isfinite(s)) throw EvaluationError("non-finite score");
      cand.score = s;
    } catch (const std::exception& e) {
      cand.error = e.what();
    }
    if (cand.score && (!best_score || *cand.score < *best_score)) {
      best_score = cand.score;
      out.best = i;
      out.result = std::move(r);
    }
    out.candidates.push_back(std::move(cand));
  }
  if (!best_score) throw Error("every resampling candidate was disqualified");
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_report(const RunConfig& config, const Prompt* prompt,
                          const ResampleResult& run) {
  std::ostringstream o;
  o << "seed=" << config.seed << "\n"
    << "resample=" << config.resample << "\n"
    << "scorer=" << (config.scorer == ScorerKind::kEditDistance ? "edit" : "loglik") << "\n"
    << "prompt=" << (prompt != nullptr && prompt->size() > 0 ? prompt->size() : 0) << "\n"
    << "prompt_dbm=" << (config.prompt_dbm ? 1 : 0) << "\n";
  for (std::size_t i = 0; i < run.candidates.size(); ++i) {
    const auto& c = run.candidates[i];
    o << "candidate." << i << ".seed=" << c.seed << "\n"
      << "candidate." << i << ".score=" << (c.score ? fmt(*c.score) : "disqualified") << "\n";
  }
  const auto& r = run.result;
  const auto& l = r.ledger;
  o << "best=" << run.best << "\n"
    << "frames=" << r.frames() << "\n"
    << "ftl.first_frame=" << (l.first_frame ? 1 : 0) << "\n";
  if (l.first_frame) {
    o << "ftl.text_waits=" << l.text_waits << "\n"
      << "ftl.model_steps=" << l.model_steps << "\n"
      << "ftl.model_calls=" << l.model_calls << "\n";
  }
  o << "ftl.prompt_steps=" << l.prompt_steps << "\n";
  return o.str();
}

}  // namespace streamtts::pipeline
