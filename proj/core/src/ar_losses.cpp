#include "streamtts/ar/losses.hpp"

#include "streamtts/error.hpp"

namespace streamtts::ar {

namespace {

void require_same(const char* what, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + num::shape_string(a.shape()) +
                         " vs " + num::shape_string(b.shape()));
  }
}

}  // namespace

Var reg_loss(Var pred, Var target) {
  require_same("reg_loss", pred.value(), target.value());
  const std::size_t frames = pred.rows();
  if (frames == 0) return pred.tape()->constant(Tensor::scalar(0.0));
  Var diff = num::sub(pred, target);
  Var per = num::add(num::abs(diff), num::square(diff));
  return num::scale(num::sum(per), 1.0 / static_cast<double>(frames));
}

double reg_loss(const Tensor& pred, const Tensor& target) {
  num::Tape tape;
  return reg_loss(tape.constant_ref(pred), tape.constant_ref(target)).value().item();
}

Var kl_loss(Var mu, Var log_var) {
  require_same("kl_loss", mu.value(), log_var.value());
  const std::size_t frames = mu.rows();
  if (frames == 0) return mu.tape()->constant(Tensor::scalar(0.0));
  Var terms = num::sub(num::add(num::square(mu), num::exp(log_var)), log_var);
  Var total = num::add_scalar(num::sum(terms), -static_cast<double>(mu.value().size()));
  return num::scale(total, 0.5 / static_cast<double>(frames));
}

double kl_loss(const LatentGaussian& latent) {
  num::Tape tape;
  return kl_loss(tape.constant_ref(latent.mu), tape.constant_ref(latent.log_var))
      .value()
      .item();
}

Var flux_loss(Var mean_mel, Var target) {
  require_same("flux_loss", mean_mel.value(), target.value());
  const std::size_t s = mean_mel.rows();
  if (s < 2) return mean_mel.tape()->constant(Tensor::scalar(0.0));
  Var moved = num::sub(num::slice_rows(mean_mel, 1, s), num::slice_rows(target, 0, s - 1));
  return num::scale(num::sum(num::abs(moved)), -1.0 / static_cast<double>(s - 1));
}

double flux_loss(const Tensor& mean_mel, const Tensor& target) {
  num::Tape tape;
  return flux_loss(tape.constant_ref(mean_mel), tape.constant_ref(target)).value().item();
}

}  // namespace streamtts::ar
