#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "streamtts/lattice/lattice.hpp"
#include "streamtts/nn/adam.hpp"
#include "streamtts/transducer/model.hpp"

namespace streamtts::transducer {

/// Builds the alignment lattice from joint log-probabilities laid out as
/// produced by joint_grid over (T+2) text rows and (S+1) predictor rows.
/// The lattice has H = T+2 horizontal moves; the last one is the terminal
/// <blank> at <eos>, after which no emission is possible.
lattice::LatticeLogProbs build_lattice(const Tensor& grid, std::size_t text_len,
                                       std::span<const TokenId> targets);

/// Records forward_loss of a lattice given as two tape nodes, with the
/// posterior-occupancy gradient.
Var lattice_loss(Var emit, Var wait);

/// Records L_T = -log P(Y | X) on the binding's tape.
Var transducer_loss(nn::Binding& p, const TransducerModel& model, const TextSequence& x,
                    const SemanticTokenSequence& y);

/// Loss value without gradients.
double transducer_loss_value(const TransducerModel& model, const TextSequence& x,
                             const SemanticTokenSequence& y);

struct TransducerPair {
  TextSequence text;
  SemanticTokenSequence tokens;
};

struct TransducerTrainOptions {
  double lr = 3e-3;
  double clip_norm = 5.0;
};

/// Adam training over minibatches; the reported loss is the mean over the
/// batch before the update.
class TransducerTrainer {
 public:
  TransducerTrainer(TransducerModel& model, TransducerTrainOptions options);

  double train_step(std::span<const TransducerPair> batch);
  double train_step(const TextSequence& x, const SemanticTokenSequence& y);

  nn::Adam& optimizer() { return adam_; }
  const nn::Adam& optimizer() const { return adam_; }

 private:
  TransducerModel& model_;
  nn::Adam adam_;
};

}  // namespace streamtts::transducer
