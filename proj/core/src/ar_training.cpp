#include "streamtts/ar/training.hpp"

#include <cmath>

#include "streamtts/error.hpp"

namespace streamtts::ar {

Tensor shifted_mel_inputs(const Tensor& mel) {
  const std::size_t s = mel.rows(), d = mel.cols();
  Tensor in({s, d}, 0.0);
  for (std::size_t t = 1; t < s; ++t) {
    for (std::size_t c = 0; c < d; ++c) in(t, c) = mel(t - 1, c);
  }
  return in;
}

ArLossVars ar_loss(nn::Binding& p, const ArModel& model, const ArTriple& triple,
                   const ForwardNoise& noise, double lambda, double beta) {
  const std::size_t s = triple.tokens.size();
  if (triple.text.size() != s || triple.mel.rows() != s ||
      triple.mel.cols() != model.config().mel_dim) {
    throw DimensionError("AR triple lengths disagree: text " + std::to_string(triple.text.size()) +
                         ", tokens " + std::to_string(s) + ", mel " +
                         num::shape_string(triple.mel.shape()));
  }
  num::Tape& tape = p.tape();
  Var inputs = tape.constant(shifted_mel_inputs(triple.mel));
  Var target = tape.constant_ref(triple.mel);
  SequenceOutputs out = model.forward_sequence(p, triple.tokens, triple.text, inputs, noise);
  ArLossVars l;
  l.reg = reg_loss(out.mel, target);
  l.kl = kl_loss(out.mu, out.log_var);
  l.flux = flux_loss(out.mean_mel, target);
  l.total = num::add(num::add(l.reg, num::scale(l.kl, lambda)), num::scale(l.flux, beta));
  return l;
}

ArTrainer::ArTrainer(ArModel& model, ArTrainOptions options)
    : model_(model),
      options_(options),
      adam_(nn::AdamOptions{.lr = options.lr, .clip_norm = options.clip_norm}) {}

double ArTrainer::current_lambda() const {
  return adam_.steps() < options_.kl_warmup ? 0.0 : options_.lambda;
}

ArLossBreakdown ArTrainer::train_step(std::span<const ArTriple> batch, std::uint64_t seed) {
  if (batch.empty()) throw Error("empty training batch");
  const double lambda = current_lambda();
  num::Rng rng(seed);
  num::Tape tape;
  nn::Binding p(tape, model_.params(), true);
  std::vector<Var> totals;
  ArLossBreakdown b;
  for (const auto& triple : batch) {
    ForwardNoise noise;
    noise.eps = Tensor({triple.tokens.size(), model_.config().latent_dim});
    for (auto& v : noise.eps.values()) v = rng.normal();
    noise.dropout_rng = &rng;
    ArLossVars l = ar_loss(p, model_, triple, noise, lambda, options_.beta);
    totals.push_back(l.total);
    b.reg += l.reg.value().item();
    b.kl += l.kl.value().item();
    b.flux += l.flux.value().item();
  }
  const double n = static_cast<double>(batch.size());
  Var total = num::scale(num::sum(num::concat_rows(totals)), 1.0 / n);
  b.total = total.value().item();
  b.reg /= n;
  b.kl /= n;
  b.flux /= n;
  if (!std::isfinite(b.total)) throw TrainingError("non-finite AR loss");
  tape.backward(total);
  adam_.step(model_.params(), p.gradients());
  return b;
}

}  // namespace streamtts::ar
