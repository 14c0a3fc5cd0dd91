#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "streamtts/ar/model.hpp"
#include "streamtts/transducer/decode.hpp"

namespace streamtts::pipeline {

using num::Tensor;

/// Reference utterance placed in the AR context ahead of generation. `text`
/// is duration-aligned (one entry per frame).
struct Prompt {
  std::vector<TokenId> text;
  std::vector<TokenId> tokens;
  Tensor mel;

  std::size_t size() const { return tokens.size(); }
  /// Throws DimensionError on unequal lengths.
  void validate(std::size_t mel_dim) const;
};

struct LatencyLedger {
  struct Entry {
    std::string event;
    std::int64_t wall_ns = 0;
  };

  bool first_frame = false;
  /// Text positions past <bos> consumed before the first frame (d_text units).
  std::size_t text_waits = 0;
  /// Model invocations since the last text arrival up to and including the
  /// first frame's AR step (d_model units).
  std::size_t model_steps = 0;
  /// All transducer and AR invocations before and including the first frame.
  std::size_t model_calls = 0;
  /// AR steps spent placing the prompt in context.
  std::size_t prompt_steps = 0;
  /// Per-frame wall-clock trace; never part of any reproducible output.
  std::vector<Entry> timeline;
};

enum class ScorerKind { kLogLikelihood, kEditDistance };

struct RunConfig {
  std::size_t top_k = 15;
  std::uint64_t seed = 0;
  std::size_t emission_cap = 10;
  bool prompt_dbm = false;
  std::size_t resample = 1;
  ScorerKind scorer = ScorerKind::kLogLikelihood;
  std::string transducer_checkpoint;
  std::string ar_checkpoint;
  /// Run the transducer and DBM on a producer thread.
  bool threaded = false;
  std::size_t queue_capacity = 4;

  /// Throws ConfigError.
  void validate() const;
};

struct Models {
  const transducer::TransducerModel& transducer;
  const ar::ArModel& ar;

  /// Throws ConfigError when the two stages disagree on vocabularies.
  void validate() const;
};

struct SynthesisResult {
  Tensor mel;  ///< [frames x mel_dim], prompt frames excluded
  std::vector<transducer::DecodeEvent> events;
  std::vector<TokenId> tokens;
  std::vector<TokenId> dbm_text;
  double log_prob = 0.0;
  LatencyLedger ledger;

  std::size_t frames() const { return tokens.size(); }
};

/// Called with each frame as soon as it is produced.
using FrameSink = std::function<void(std::size_t index, const Tensor& frame)>;

/// Streams text through transducer, online DBM and AR decoder. Text arrives
/// only when the transducer asks for it.
SynthesisResult synthesize_stream(const Models& models, const RunConfig& config,
                                  const Prompt* prompt, transducer::TextSource& text,
                                  const FrameSink& sink = {});
SynthesisResult synthesize_stream(const Models& models, const RunConfig& config,
                                  const Prompt* prompt, const TextSequence& text);

/// Reference composition: full decode, then path_to_duration_text, apply_dbm
/// and an AR pass over the finished sequences. The ledger is left empty.
SynthesisResult synthesize_offline(const Models& models, const RunConfig& config,
                                   const Prompt* prompt, const TextSequence& text);

std::size_t edit_distance(std::span<const TokenId> a, std::span<const TokenId> b);

/// Lower is better. May throw to disqualify a candidate.
using ScoreFn = std::function<double(const SynthesisResult&)>;

/// Token edit distance to `reference`, divided by the reference length.
ScoreFn edit_scorer(std::vector<TokenId> reference);
/// Negative transducer log-probability per decoded event.
ScoreFn loglik_scorer();

struct Candidate {
  std::uint64_t seed = 0;
  std::optional<double> score;  ///< absent when disqualified
  std::string error;
};

struct ResampleResult {
  std::size_t best = 0;
  std::vector<Candidate> candidates;
  SynthesisResult result;
};

/// Seed of candidate i; candidate 0 uses the run seed itself.
std::uint64_t candidate_seed(std::uint64_t seed, std::size_t index);

/// Runs config.resample candidates and keeps the lowest score (earliest on
/// ties). Throws Error when every candidate is disqualified.
ResampleResult resample_best(const Models& models, const RunConfig& config, const Prompt* prompt,
                             const TextSequence& text, const ScoreFn& scorer);

/// Line-delimited key=value report. Contains no wall-clock data.
std::string format_report(const RunConfig& config, const Prompt* prompt,
                          const ResampleResult& run);

}  // namespace streamtts::pipeline
