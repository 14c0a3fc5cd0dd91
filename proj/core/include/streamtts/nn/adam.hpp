#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "streamtts/nn/params.hpp"

namespace streamtts::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Applies one update. Parameters missing from `grads` are left untouched.
  /// Returns the global gradient norm before clipping.
  double step(ParamStore& params, const Gradients& grads, double lr);
  double step(ParamStore& params, const Gradients& grads) {
    return step(params, grads, options_.lr);
  }

  std::uint64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

  /// Moment tensors keyed "m.<param>" / "v.<param>", for checkpointing.
  std::map<std::string, Tensor> export_state() const;
  void import_state(const std::map<std::string, Tensor>& state, std::uint64_t steps);

 private:
  AdamOptions options_;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
  std::uint64_t t_ = 0;
};

}  // namespace streamtts::nn
