#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "streamtts/ar/losses.hpp"
#include "streamtts/ar/model.hpp"
#include "streamtts/nn/adam.hpp"

namespace streamtts::ar {

/// One aligned training example: DBM text, semantic tokens and mel frames.
struct ArTriple {
  std::vector<TokenId> text;
  std::vector<TokenId> tokens;
  Tensor mel;  ///< [S x mel_dim]
};

struct ArLossBreakdown {
  double total = 0.0;
  double reg = 0.0;
  double kl = 0.0;
  double flux = 0.0;
};

struct ArLossVars {
  Var total;
  Var reg;
  Var kl;
  Var flux;
};

/// Teacher-forced inputs: the zero frame followed by frames 1..S-1.
Tensor shifted_mel_inputs(const Tensor& mel);

/// Records L_AR = L_reg + lambda * L_KL + beta * L_flux for one triple.
ArLossVars ar_loss(nn::Binding& p, const ArModel& model, const ArTriple& triple,
                   const ForwardNoise& noise, double lambda, double beta);

struct ArTrainOptions {
  double lr = 1e-3;
  double lambda = 5e-2;
  double beta = 0.5;
  /// Steps during which the KL weight is held at zero.
  std::uint64_t kl_warmup = 200;
  double clip_norm = 5.0;
};

class ArTrainer {
 public:
  ArTrainer(ArModel& model, ArTrainOptions options);

  /// KL weight in effect at the next update.
  double current_lambda() const;

  /// One Adam update over the batch with dropout and noise drawn from
  /// `seed`. Returns batch-mean losses before the update.
  ArLossBreakdown train_step(std::span<const ArTriple> batch, std::uint64_t seed);

  nn::Adam& optimizer() { return adam_; }
  const nn::Adam& optimizer() const { return adam_; }
  const ArTrainOptions& options() const { return options_; }

 private:
  ArModel& model_;
  ArTrainOptions options_;
  nn::Adam adam_;
};

}  // namespace streamtts::ar
