#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "streamtts/nn/params.hpp"
#include "streamtts/tokens.hpp"

namespace streamtts::transducer {

using num::Tensor;
using num::Var;

/// Output index of <blank> in the joint distribution; content token y sits
/// at index y + 1.
inline constexpr std::size_t kBlank = 0;

struct TransducerConfig {
  std::size_t text_vocab = 16;
  std::size_t sem_vocab = 32;
  std::size_t embed = 32;
  std::size_t enc_hidden = 64;
  std::size_t enc_layers = 1;
  std::size_t pred_hidden = 64;
  std::size_t pred_layers = 2;
  std::size_t joint_hidden = 64;

  std::size_t output_size() const { return sem_vocab + 1; }
  /// Predictor embedding row holding the shared initial state y_0.
  TokenId initial_state_row() const { return static_cast<TokenId>(sem_vocab); }
};

/// Stacked LSTM state, one (h, c) pair per layer.
struct RecurrentState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
};

/// Causal text encoder (embedding + unidirectional LSTM stack), LSTM
/// predictor over semantic tokens and a two-layer joint network.
class TransducerModel {
 public:
  TransducerModel() = default;
  TransducerModel(const TransducerConfig& config, std::uint64_t seed);
  TransducerModel(const TransducerConfig& config, nn::ParamStore params);

  const TransducerConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Incremental inference; these never record gradients.
  RecurrentState encoder_initial() const;
  /// Consumes one text token and returns the top encoder output row.
  Tensor encoder_step(RecurrentState& state, TokenId x) const;
  RecurrentState predictor_initial() const;
  /// Consumes one semantic token (or the initial-state row).
  Tensor predictor_step(RecurrentState& state, TokenId y) const;
  /// Log-distribution over {<blank>} + semantic vocabulary, [1 x (V+1)].
  Tensor joint(const Tensor& enc_row, const Tensor& pred_row) const;

  // Recorded forms for training.
  /// [(T+2) x enc_hidden] for framed text.
  Var encode_sequence(nn::Binding& p, std::span<const TokenId> text) const;
  /// [(S+1) x pred_hidden]; row 0 is the state after y_0.
  Var predict_sequence(nn::Binding& p, std::span<const TokenId> targets) const;
  /// Joint log-probabilities for every (i, j) pair, row i * pred.rows() + j.
  Var joint_grid(nn::Binding& p, Var enc, Var pred) const;
  Var joint(nn::Binding& p, Var enc_row, Var pred_row) const;

 private:
  Tensor stack_step(const std::string& prefix, std::size_t layers, RecurrentState& state,
                    const Tensor& input) const;

  TransducerConfig config_;
  nn::ParamStore params_;
};

}  // namespace streamtts::transducer
