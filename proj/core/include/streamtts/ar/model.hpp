#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "streamtts/nn/params.hpp"
#include "streamtts/tokens.hpp"

namespace streamtts::ar {

using num::Tensor;
using num::Var;

inline constexpr double kLogVarMin = -14.0;
inline constexpr double kLogVarMax = 14.0;

/// Desk-scale defaults. Reference scale is 12 blocks, width 1024, 16 heads,
/// FFN 4096, block dropout 0.1, pre-net dropout 0.5, 80 mel bins.
struct ArConfig {
  std::size_t text_vocab = 16;
  std::size_t sem_vocab = 32;
  std::size_t mel_dim = 80;
  std::size_t latent_dim = 80;
  std::size_t d_model = 64;
  std::size_t blocks = 2;
  std::size_t heads = 2;
  std::size_t ffn = 128;
  std::size_t prenet_hidden = 64;
  std::size_t mlp_hidden = 128;
  double prenet_dropout = 0.5;
  double dropout = 0.1;
  /// Pre-net dropout rate kept active at inference; 0 disables it.
  double infer_mel_dropout = 0.5;

  /// Throws ConfigError on inconsistent dimensions.
  void validate() const;
};

/// Per-step Gaussian over the latent: mean and clamped log-variance rows.
struct LatentGaussian {
  Tensor mu;
  Tensor log_var;

  Tensor sigma() const;
};

/// Keys and values of every block for the steps decoded so far.
struct DecoderCache {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  std::size_t steps = 0;
};

struct ArStepInput {
  std::size_t position = 0;  ///< 0-based step index; must equal cache.steps
  TokenId y = 0;
  TokenId x = 0;
  const Tensor* mel_prev = nullptr;  ///< [1 x mel_dim]
  /// Reparameterisation noise; drawn from the step's rng when absent.
  std::optional<std::vector<double>> eps;
};

struct ArStepResult {
  Tensor mel;  ///< final frame; there is no post-net refinement
  LatentGaussian latent;
  Tensor z;
};

/// Teacher-forced outputs over a whole sequence.
struct SequenceOutputs {
  Var mel;       ///< [S x D] sampled-latent prediction
  Var mu;        ///< [S x D_latent]
  Var log_var;   ///< [S x D_latent], clamped
  Var mean_mel;  ///< [S x D] output MLP applied to mu
};

/// Randomness for a recorded forward pass.
struct ForwardNoise {
  Tensor eps;                      ///< [S x D_latent]
  num::Rng* dropout_rng = nullptr; ///< nullptr disables every dropout
};

class ArModel {
 public:
  ArModel() = default;
  ArModel(const ArConfig& config, std::uint64_t seed);
  ArModel(const ArConfig& config, nn::ParamStore params);

  const ArConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  DecoderCache empty_cache() const;

  /// One causal decoding step. Pre-net dropout at the inference rate and any
  /// missing noise draw from `rng`. Throws StateError when the cache does not
  /// hold exactly `input.position` steps.
  ArStepResult step(DecoderCache& cache, const ArStepInput& input, num::Rng& rng) const;

  /// Pushes a known step (prompt) into the cache without sampling output.
  void prefill(DecoderCache& cache, std::size_t position, TokenId y, TokenId x,
               const Tensor& mel_prev, num::Rng& rng) const;

  /// Teacher-forced pass with a causal mask: step t sees `mel_inputs` row t
  /// (the previous frame) and tokens up to t.
  SequenceOutputs forward_sequence(nn::Binding& p, std::span<const TokenId> y,
                                   std::span<const TokenId> x, Var mel_inputs,
                                   const ForwardNoise& noise) const;

  /// Output MLP with residual: m = z + MLP(z).
  Var output_mlp(nn::Binding& p, Var z) const;

 private:
  Var decoder_input(nn::Binding& p, std::span<const TokenId> y, std::span<const TokenId> x,
                    Var mel_prev, std::size_t first_position, num::Rng* dropout_rng,
                    double prenet_rate) const;
  Tensor encode_step(DecoderCache& cache, const ArStepInput& input, num::Rng& rng,
                     nn::Binding& p) const;

  ArConfig config_;
  nn::ParamStore params_;
};

/// Sinusoidal position rows for positions [first, first + count).
Tensor positional_encoding(std::size_t first, std::size_t count, std::size_t dim);

}  // namespace streamtts::ar
