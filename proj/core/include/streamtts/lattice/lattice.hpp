#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "streamtts/numerics/tensor.hpp"
#include "streamtts/tokens.hpp"

namespace streamtts::lattice {

using num::Tensor;

/// Edge log-probabilities of an (H+1) x (S+1) alignment lattice.
///
/// `emit(i, j)` is the log-probability of emitting target j+1 at node (i, j)
/// (a vertical move), shape [(H+1) x S]. `wait(i, j)` is the log-probability
/// of <blank> at node (i, j) (a horizontal move), shape [(H+1) x (S+1)]; row
/// H is never traversed. Entries are <= 0; -inf marks a forbidden edge.
struct LatticeLogProbs {
  Tensor emit;
  Tensor wait;

  LatticeLogProbs() = default;
  LatticeLogProbs(std::size_t horizontal, std::size_t target_length, double fill = 0.0);

  std::size_t horizontal() const { return wait.rows() - 1; }
  std::size_t target_length() const { return wait.cols() - 1; }
};

/// Throws DimensionError / InfeasibleLatticeError when malformed.
void validate(const LatticeLogProbs& lp);

enum class Move : char { kWait = 'H', kEmit = 'V' };

/// Monotonic path from (0, 0) to (H, S).
struct AlignmentPath {
  std::vector<Move> moves;
  double log_prob = 0.0;

  std::size_t wait_count() const;
  std::size_t emit_count() const;
  std::string str() const;
  /// Parses "HVVH..." (whitespace and commas ignored).
  static AlignmentPath parse(const std::string& text);
};

/// Log forward variables alpha(i, j) over [(H+1) x (S+1)].
struct ForwardTable {
  Tensor alpha;

  /// Tab-separated rows, 17 significant digits, for cross-implementation diffs.
  std::string dump_tsv() const;
};

struct ForwardResult {
  double loss = 0.0;
  ForwardTable table;
};

/// Stable log(exp(a) + exp(b)), tolerating -inf operands.
double log_add(double a, double b);

/// Negative log of the total probability of all monotonic paths.
ForwardResult forward_loss(const LatticeLogProbs& lp);

/// Log probability of completing the lattice from each node, beta(i, j).
Tensor backward_table(const LatticeLogProbs& lp);

struct LatticeGradients {
  double loss = 0.0;
  Tensor d_emit;
  Tensor d_wait;
};

/// d loss / d edge log-probability: minus the posterior occupancy of the edge.
LatticeGradients lattice_gradients(const LatticeLogProbs& lp);

double path_log_prob(const LatticeLogProbs& lp, std::span<const Move> moves);

/// Every path in lexicographic order (H before V). Refuses when H + S exceeds
/// `max_moves`.
std::vector<AlignmentPath> enumerate_paths(const LatticeLogProbs& lp,
                                           std::size_t max_moves = 20);

double binomial(std::size_t n, std::size_t k);

/// Replays a path over framed text: the cursor starts on <bos>, each H move
/// advances it, each V move copies the token under it.
DurationAlignedText path_to_duration_text(const AlignmentPath& path,
                                          std::span<const TokenId> text);

}  // namespace streamtts::lattice
