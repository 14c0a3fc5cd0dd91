#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "streamtts/ar/training.hpp"
#include "streamtts/lattice/lattice.hpp"
#include "streamtts/numerics/rng.hpp"
#include "streamtts/tokens.hpp"
#include "streamtts/transducer/training.hpp"

namespace streamtts::pipeline {

using num::Tensor;

/// Semantic token used for leading and trailing silence.
inline constexpr TokenId kSilence = 0;

struct CorpusConfig {
  std::size_t text_vocab = 16;
  std::size_t sem_vocab = 32;
  std::size_t mel_dim = 80;
  std::size_t min_length = 3;
  std::size_t max_length = 8;
  std::uint64_t grammar_seed = 7;
  double duplicate_prob = 0.1;
  /// Probability of a second silence frame at either end. Kept high so every
  /// first text token is seen after both silence lengths in a few hundred items.
  double long_silence_prob = 0.5;
  double noise = 0.05;

  void validate() const;
};

/// Fixed stochastic grammar: every text token owns a base run of semantic
/// tokens and every semantic token a smooth mel template.
struct Grammar {
  std::vector<std::vector<TokenId>> runs;  ///< indexed by text token
  Tensor templates;                        ///< [sem_vocab x mel_dim]
};

Grammar make_grammar(const CorpusConfig& config);

struct CorpusItem {
  TextSequence text;
  SemanticTokenSequence tokens;
  lattice::AlignmentPath path;  ///< ground truth, H-count = |text|
  Tensor mel;                   ///< [S x mel_dim]
};

CorpusItem generate_item(const CorpusConfig& config, const Grammar& grammar, num::Rng& rng);
/// Item i is drawn from derive_seed(seed, i), so prefixes of a corpus agree.
std::vector<CorpusItem> generate_corpus(const CorpusConfig& config, std::size_t count,
                                        std::uint64_t seed);

/// Directory layout: manifest.txt plus item_NNNNN.txt / item_NNNNN.mel.
void write_corpus(const std::filesystem::path& dir, const CorpusConfig& config,
                  std::uint64_t seed, const std::vector<CorpusItem>& items);

struct Corpus {
  std::uint64_t seed = 0;
  std::size_t text_vocab = 0;
  std::size_t sem_vocab = 0;
  std::size_t mel_dim = 0;
  std::vector<CorpusItem> items;
};

Corpus read_corpus(const std::filesystem::path& dir);
/// Reads `<stem>.txt` and `<stem>.mel`.
CorpusItem read_item(const std::filesystem::path& stem, std::size_t text_vocab = 0);

struct TrainingPair {
  transducer::TransducerPair transducer;
  std::optional<ar::ArTriple> ar;  ///< absent when the item has no frames
};

/// Builds (X, Y) and (X^D, Y, M) from a corpus item. Throws CorpusError on
/// inconsistent lengths.
TrainingPair prepare_training_pair(const CorpusItem& item);

}  // namespace streamtts::pipeline
