#include "streamtts/nn/params.hpp"

#include <cmath>

#include "streamtts/error.hpp"

namespace streamtts::nn {

void ParamStore::add(const std::string& name, Tensor init) {
  if (!params_.emplace(name, std::move(init)).second) {
    throw StateError("duplicate parameter '" + name + "'");
  }
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

Var Binding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Tensor& value = store_.at(name);
  Var v = trainable_ ? tape_.variable_ref(value) : tape_.constant_ref(value);
  bound_.emplace(name, v);
  return v;
}

Gradients Binding::gradients() const {
  Gradients out;
  for (const auto& [name, v] : bound_) {
    if (tape_.has_grad(v.id())) out.emplace(name, tape_.grad_ref(v.id()));
  }
  return out;
}

Tensor glorot(std::size_t rows, std::size_t cols, num::Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (auto& v : t.values()) v = (2.0 * rng.uniform() - 1.0) * limit;
  return t;
}

void init_linear(ParamStore& store, const std::string& prefix, std::size_t in,
                 std::size_t out, num::Rng& rng) {
  store.add(prefix + ".W", glorot(in, out, rng));
  store.add(prefix + ".b", Tensor({1, out}, 0.0));
}

Var linear(Binding& p, const std::string& prefix, Var x) {
  return num::add(num::matmul(x, p(prefix + ".W")), p(prefix + ".b"));
}

void init_embedding(ParamStore& store, const std::string& name, std::size_t vocab,
                    std::size_t dim, num::Rng& rng) {
  Tensor t({vocab, dim});
  for (auto& v : t.values()) v = 0.1 * rng.normal();
  store.add(name, std::move(t));
}

void init_lstm(ParamStore& store, const std::string& prefix, std::size_t in,
               std::size_t hidden, num::Rng& rng) {
  store.add(prefix + ".W", glorot(in + hidden, 4 * hidden, rng));
  Tensor b({1, 4 * hidden}, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;  // forget gate
  store.add(prefix + ".b", std::move(b));
}

LstmOut lstm_cell(Binding& p, const std::string& prefix, Var x, Var h, Var c) {
  const std::size_t hidden = h.cols();
  const Var xh[] = {x, h};
  Var gates = linear(p, prefix, num::concat_cols(xh));
  Var i = num::sigmoid(num::slice_cols(gates, 0, hidden));
  Var f = num::sigmoid(num::slice_cols(gates, hidden, 2 * hidden));
  Var g = num::tanh(num::slice_cols(gates, 2 * hidden, 3 * hidden));
  Var o = num::sigmoid(num::slice_cols(gates, 3 * hidden, 4 * hidden));
  Var c_next = num::add(num::mul(f, c), num::mul(i, g));
  Var h_next = num::mul(o, num::tanh(c_next));
  return {h_next, c_next};
}

}  // namespace streamtts::nn
