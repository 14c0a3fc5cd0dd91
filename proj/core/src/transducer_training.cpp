#include "streamtts/transducer/training.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "streamtts/error.hpp"

namespace streamtts::transducer {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_finite(const Tensor& grid, std::size_t cols_j) {
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      if (!std::isfinite(grid(r, c))) {
        const long i = static_cast<long>(r / cols_j), j = static_cast<long>(r % cols_j);
        throw TrainingError("non-finite joint output at lattice node (" + std::to_string(i) +
                                "," + std::to_string(j) + ")",
                            i, j);
      }
    }
  }
}

}  // namespace

lattice::LatticeLogProbs build_lattice(const Tensor& grid, std::size_t text_len,
                                       std::span<const TokenId> targets) {
  const std::size_t s = targets.size();
  if (grid.rows() != text_len * (s + 1)) {
    throw DimensionError("joint grid has " + std::to_string(grid.rows()) + " rows, expected " +
                         std::to_string(text_len * (s + 1)));
  }
  lattice::LatticeLogProbs lp(text_len, s, kNegInf);
  for (std::size_t i = 0; i < text_len; ++i) {
    for (std::size_t j = 0; j <= s; ++j) {
      const std::size_t r = i * (s + 1) + j;
      lp.wait(i, j) = grid(r, kBlank);
      if (j < s) lp.emit(i, j) = grid(r, static_cast<std::size_t>(targets[j]) + 1);
    }
  }
  return lp;
}

Var lattice_loss(Var emit, Var wait) {
  lattice::LatticeLogProbs lp;
  lp.emit = emit.value();
  lp.wait = wait.value();
  lattice::LatticeGradients lg = lattice::lattice_gradients(lp);
  const std::size_t ie = emit.id(), iw = wait.id();
  return emit.tape()->record(
      Tensor::scalar(lg.loss), {ie, iw}, [ie, iw, lg = std::move(lg)](num::Tape& tp, std::size_t self) {
        const double g = tp.grad_ref(self)[0];
        if (tp.requires_grad(ie)) {
          Tensor& ge = tp.grad_buffer(ie);
          for (std::size_t k = 0; k < ge.size(); ++k) ge[k] += g * lg.d_emit[k];
        }
        if (tp.requires_grad(iw)) {
          Tensor& gw = tp.grad_buffer(iw);
          for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += g * lg.d_wait[k];
        }
      });
}

Var transducer_loss(nn::Binding& p, const TransducerModel& model, const TextSequence& x,
                    const SemanticTokenSequence& y) {
  Var enc = model.encode_sequence(p, x.tokens());
  Var pred = model.predict_sequence(p, y.tokens);
  Var grid = model.joint_grid(p, enc, pred);
  const std::size_t s = y.size();
  check_finite(grid.value(), s + 1);

  const std::size_t text_len = x.size();
  lattice::LatticeLogProbs lp = build_lattice(grid.value(), text_len, y.tokens);
  lattice::LatticeGradients lg = lattice::lattice_gradients(lp);
  if (!std::isfinite(lg.loss)) {
    throw TrainingError("non-finite transducer loss at final node (" +
                            std::to_string(text_len) + "," + std::to_string(s) + ")",
                        static_cast<long>(text_len), static_cast<long>(s));
  }
  std::vector<TokenId> targets = y.tokens;
  const std::size_t ig = grid.id();
  return p.tape().record(
      Tensor::scalar(lg.loss), {ig},
      [ig, text_len, s, targets = std::move(targets), lg = std::move(lg)](num::Tape& tp,
                                                                         std::size_t self) {
        const double g = tp.grad_ref(self)[0];
        Tensor& gg = tp.grad_buffer(ig);
        for (std::size_t i = 0; i < text_len; ++i) {
          for (std::size_t j = 0; j <= s; ++j) {
            const std::size_t r = i * (s + 1) + j;
            gg(r, kBlank) += g * lg.d_wait(i, j);
            if (j < s) gg(r, static_cast<std::size_t>(targets[j]) + 1) += g * lg.d_emit(i, j);
          }
        }
      });
}

double transducer_loss_value(const TransducerModel& model, const TextSequence& x,
                             const SemanticTokenSequence& y) {
  num::Tape tape;
  nn::Binding p(tape, model.params(), false);
  Var enc = model.encode_sequence(p, x.tokens());
  Var pred = model.predict_sequence(p, y.tokens);
  Var grid = model.joint_grid(p, enc, pred);
  check_finite(grid.value(), y.size() + 1);
  return lattice::forward_loss(build_lattice(grid.value(), x.size(), y.tokens)).loss;
}

TransducerTrainer::TransducerTrainer(TransducerModel& model, TransducerTrainOptions options)
    : model_(model),
      adam_(nn::AdamOptions{.lr = options.lr, .clip_norm = options.clip_norm}) {}

double TransducerTrainer::train_step(std::span<const TransducerPair> batch) {
  if (batch.empty()) throw Error("empty training batch");
  num::Tape tape;
  nn::Binding p(tape, model_.params(), true);
  std::vector<Var> losses;
  for (const auto& pair : batch) losses.push_back(transducer_loss(p, model_, pair.text, pair.tokens));
  Var total = num::scale(num::sum(num::concat_rows(losses)),
                         1.0 / static_cast<double>(batch.size()));
  const double loss = total.value().item();
  if (!std::isfinite(loss)) throw TrainingError("non-finite mean transducer loss");
  tape.backward(total);
  adam_.step(model_.params(), p.gradients());
  return loss;
}

double TransducerTrainer::train_step(const TextSequence& x, const SemanticTokenSequence& y) {
  const TransducerPair pair{x, y};
  return train_step(std::span<const TransducerPair>(&pair, 1));
}

}  // namespace streamtts::transducer
