#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>

#include "streamtts/numerics/rng.hpp"
#include "streamtts/numerics/tape.hpp"

namespace streamtts::nn {

using num::Tensor;
using num::Var;

/// Named, ordered parameter tensors of a model.
class ParamStore {
 public:
  void add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  const std::map<std::string, Tensor>& all() const { return params_; }
  std::map<std::string, Tensor>& all() { return params_; }
  std::size_t scalar_count() const;

 private:
  std::map<std::string, Tensor> params_;
};

using Gradients = std::map<std::string, Tensor>;

/// Places parameters on a tape on first use. Trainable bindings create leaves
/// that receive gradients; frozen bindings create constants, so inference
/// records no backward closures.
class Binding {
 public:
  Binding(num::Tape& tape, const ParamStore& store, bool trainable)
      : tape_(tape), store_(store), trainable_(trainable) {}

  Var operator()(const std::string& name);
  /// Routes a parameter name to an existing variable, e.g. to differentiate
  /// with respect to one tensor in isolation.
  void set(const std::string& name, Var v) { bound_.insert_or_assign(name, v); }
  num::Tape& tape() { return tape_; }
  bool trainable() const { return trainable_; }

  /// Gradients of every bound parameter after tape.backward().
  Gradients gradients() const;

 private:
  num::Tape& tape_;
  const ParamStore& store_;
  bool trainable_;
  std::unordered_map<std::string, Var> bound_;
};

Tensor glorot(std::size_t rows, std::size_t cols, num::Rng& rng);

void init_linear(ParamStore& store, const std::string& prefix, std::size_t in,
                 std::size_t out, num::Rng& rng);
/// x W + b with `prefix.W` [in x out] and `prefix.b` [1 x out].
Var linear(Binding& p, const std::string& prefix, Var x);

void init_embedding(ParamStore& store, const std::string& name, std::size_t vocab,
                    std::size_t dim, num::Rng& rng);

void init_lstm(ParamStore& store, const std::string& prefix, std::size_t in,
               std::size_t hidden, num::Rng& rng);

struct LstmOut {
  Var h;
  Var c;
};
/// One LSTM cell step on row vectors; gate order i, f, g, o.
LstmOut lstm_cell(Binding& p, const std::string& prefix, Var x, Var h, Var c);

}  // namespace streamtts::nn
