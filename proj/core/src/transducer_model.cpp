#include "streamtts/transducer/model.hpp"

#include <string>

#include "streamtts/error.hpp"

namespace streamtts::transducer {

namespace {

std::string layer_name(const std::string& prefix, std::size_t l) {
  return prefix + ".lstm" + std::to_string(l);
}

}  // namespace

TransducerModel::TransducerModel(const TransducerConfig& config, std::uint64_t seed)
    : config_(config) {
  num::Rng rng(seed);
  const auto& c = config_;
  nn::init_embedding(params_, "tr.enc.emb", c.text_vocab, c.embed, rng);
  for (std::size_t l = 0; l < c.enc_layers; ++l) {
    nn::init_lstm(params_, layer_name("tr.enc", l), l == 0 ? c.embed : c.enc_hidden,
                  c.enc_hidden, rng);
  }
  nn::init_embedding(params_, "tr.pred.emb", c.sem_vocab + 1, c.embed, rng);
  for (std::size_t l = 0; l < c.pred_layers; ++l) {
    nn::init_lstm(params_, layer_name("tr.pred", l), l == 0 ? c.embed : c.pred_hidden,
                  c.pred_hidden, rng);
  }
  params_.add("tr.joint.enc.W", nn::glorot(c.enc_hidden, c.joint_hidden, rng));
  params_.add("tr.joint.pred.W", nn::glorot(c.pred_hidden, c.joint_hidden, rng));
  params_.add("tr.joint.b", Tensor({1, c.joint_hidden}, 0.0));
  nn::init_linear(params_, "tr.joint.out", c.joint_hidden, c.output_size(), rng);
}

TransducerModel::TransducerModel(const TransducerConfig& config, nn::ParamStore params)
    : config_(config), params_(std::move(params)) {
  TransducerModel reference(config, 0);
  for (const auto& [name, t] : reference.params().all()) {
    if (!params_.contains(name)) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (params_.at(name).shape() != t.shape()) {
      throw FormatError("tensor '" + name + "' has shape " +
                        num::shape_string(params_.at(name).shape()) + ", config implies " +
                        num::shape_string(t.shape()));
    }
  }
}

RecurrentState TransducerModel::encoder_initial() const {
  RecurrentState s;
  for (std::size_t l = 0; l < config_.enc_layers; ++l) {
    s.h.emplace_back(num::Shape{1, config_.enc_hidden}, 0.0);
    s.c.emplace_back(num::Shape{1, config_.enc_hidden}, 0.0);
  }
  return s;
}

RecurrentState TransducerModel::predictor_initial() const {
  RecurrentState s;
  for (std::size_t l = 0; l < config_.pred_layers; ++l) {
    s.h.emplace_back(num::Shape{1, config_.pred_hidden}, 0.0);
    s.c.emplace_back(num::Shape{1, config_.pred_hidden}, 0.0);
  }
  return s;
}

Tensor TransducerModel::stack_step(const std::string& prefix, std::size_t layers,
                                   RecurrentState& state, const Tensor& input) const {
  num::Tape tape;
  nn::Binding p(tape, params_, false);
  Var x = tape.constant_ref(input);
  for (std::size_t l = 0; l < layers; ++l) {
    auto out = nn::lstm_cell(p, layer_name(prefix, l), x, tape.constant_ref(state.h[l]),
                             tape.constant_ref(state.c[l]));
    x = out.h;
    // Copy before overwriting: the tape still references the old state.
    Tensor h = out.h.value();
    Tensor c = out.c.value();
    state.h[l] = std::move(h);
    state.c[l] = std::move(c);
  }
  return x.value();
}

Tensor TransducerModel::encoder_step(RecurrentState& state, TokenId x) const {
  if (x < 0 || static_cast<std::size_t>(x) >= config_.text_vocab) {
    throw DimensionError("text token " + std::to_string(x) + " outside vocabulary");
  }
  const Tensor& emb = params_.at("tr.enc.emb");
  const std::size_t d = emb.cols();
  Tensor row({1, d});
  for (std::size_t c = 0; c < d; ++c) row[c] = emb(static_cast<std::size_t>(x), c);
  return stack_step("tr.enc", config_.enc_layers, state, row);
}

Tensor TransducerModel::predictor_step(RecurrentState& state, TokenId y) const {
  if (y < 0 || static_cast<std::size_t>(y) > config_.sem_vocab) {
    throw DimensionError("semantic token " + std::to_string(y) + " outside vocabulary");
  }
  const Tensor& emb = params_.at("tr.pred.emb");
  const std::size_t d = emb.cols();
  Tensor row({1, d});
  for (std::size_t c = 0; c < d; ++c) row[c] = emb(static_cast<std::size_t>(y), c);
  return stack_step("tr.pred", config_.pred_layers, state, row);
}

Tensor TransducerModel::joint(const Tensor& enc_row, const Tensor& pred_row) const {
  num::Tape tape;
  nn::Binding p(tape, params_, false);
  return joint(p, tape.constant_ref(enc_row), tape.constant_ref(pred_row)).value();
}

Var TransducerModel::joint(nn::Binding& p, Var enc_row, Var pred_row) const {
  Var hidden = num::add(num::matmul(enc_row, p("tr.joint.enc.W")),
                        num::add(num::matmul(pred_row, p("tr.joint.pred.W")), p("tr.joint.b")));
  return num::log_softmax_rows(nn::linear(p, "tr.joint.out", num::tanh(hidden)));
}

Var TransducerModel::encode_sequence(nn::Binding& p, std::span<const TokenId> text) const {
  num::Tape& tape = p.tape();
  std::vector<std::size_t> ids(text.begin(), text.end());
  Var emb = num::gather_rows(p("tr.enc.emb"), ids);
  std::vector<Var> h, c;
  for (std::size_t l = 0; l < config_.enc_layers; ++l) {
    h.push_back(tape.constant(Tensor({1, config_.enc_hidden}, 0.0)));
    c.push_back(tape.constant(Tensor({1, config_.enc_hidden}, 0.0)));
  }
  std::vector<Var> rows;
  for (std::size_t t = 0; t < text.size(); ++t) {
    Var x = num::slice_rows(emb, t, t + 1);
    for (std::size_t l = 0; l < config_.enc_layers; ++l) {
      auto out = nn::lstm_cell(p, layer_name("tr.enc", l), x, h[l], c[l]);
      h[l] = out.h;
      c[l] = out.c;
      x = out.h;
    }
    rows.push_back(x);
  }
  return num::concat_rows(rows);
}

Var TransducerModel::predict_sequence(nn::Binding& p, std::span<const TokenId> targets) const {
  num::Tape& tape = p.tape();
  std::vector<std::size_t> ids;
  ids.reserve(targets.size() + 1);
  ids.push_back(static_cast<std::size_t>(config_.initial_state_row()));
  for (TokenId y : targets) {
    if (y < 0 || static_cast<std::size_t>(y) >= config_.sem_vocab) {
      throw DimensionError("semantic token " + std::to_string(y) + " outside vocabulary");
    }
    ids.push_back(static_cast<std::size_t>(y));
  }
  Var emb = num::gather_rows(p("tr.pred.emb"), ids);
  std::vector<Var> h, c;
  for (std::size_t l = 0; l < config_.pred_layers; ++l) {
    h.push_back(tape.constant(Tensor({1, config_.pred_hidden}, 0.0)));
    c.push_back(tape.constant(Tensor({1, config_.pred_hidden}, 0.0)));
  }
  std::vector<Var> rows;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    Var x = num::slice_rows(emb, t, t + 1);
    for (std::size_t l = 0; l < config_.pred_layers; ++l) {
      auto out = nn::lstm_cell(p, layer_name("tr.pred", l), x, h[l], c[l]);
      h[l] = out.h;
      c[l] = out.c;
      x = out.h;
    }
    rows.push_back(x);
  }
  return num::concat_rows(rows);
}

Var TransducerModel::joint_grid(nn::Binding& p, Var enc, Var pred) const {
  const std::size_t ni = enc.rows(), nj = pred.rows();
  Var a = num::matmul(enc, p("tr.joint.enc.W"));
  Var b = num::add(num::matmul(pred, p("tr.joint.pred.W")), p("tr.joint.b"));
  std::vector<std::size_t> rep_i, rep_j;
  rep_i.reserve(ni * nj);
  rep_j.reserve(ni * nj);
  for (std::size_t i = 0; i < ni; ++i) {
    for (std::size_t j = 0; j < nj; ++j) {
      rep_i.push_back(i);
      rep_j.push_back(j);
    }
  }
  Var hidden = num::tanh(num::add(num::gather_rows(a, rep_i), num::gather_rows(b, rep_j)));
  return num::log_softmax_rows(nn::linear(p, "tr.joint.out", hidden));
}

}  // namespace streamtts::transducer
