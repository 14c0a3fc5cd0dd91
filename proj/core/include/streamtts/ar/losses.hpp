#pragma once

#include "streamtts/ar/model.hpp"

namespace streamtts::ar {

// Decided loss forms; each lives behind one function so it can be swapped.

/// Mean over frames of the per-frame L1 + squared-L2 distance.
Var reg_loss(Var pred, Var target);
double reg_loss(const Tensor& pred, const Tensor& target);

/// Closed-form KL to N(0, I), summed over latent dimensions and averaged
/// over frames: 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2).
Var kl_loss(Var mu, Var log_var);
double kl_loss(const LatentGaussian& latent);

/// Spectral flux reward: -(1/(S-1)) * sum_{t>=2} |mean_t - target_{t-1}|_1,
/// where mean_t is the frame predicted from the latent mean. Zero when S < 2.
Var flux_loss(Var mean_mel, Var target);
double flux_loss(const Tensor& mean_mel, const Tensor& target);

}  // namespace streamtts::ar
