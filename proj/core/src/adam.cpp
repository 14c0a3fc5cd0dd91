#include "streamtts/nn/adam.hpp"

#include <cmath>

namespace streamtts::nn {

double Adam::step(ParamStore& params, const Gradients& grads, double lr) {
  double sq = 0.0;
  for (const auto& [_, g] : grads) {
    for (double v : g.values()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  double factor = 1.0;
  if (options_.clip_norm > 0.0 && norm > options_.clip_norm) factor = options_.clip_norm / norm;

  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& w = params.at(name);
    auto [mit, m_new] = m_.try_emplace(name, Tensor(w.shape(), 0.0));
    auto [vit, v_new] = v_.try_emplace(name, Tensor(w.shape(), 0.0));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * factor;
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * gi;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * gi * gi;
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
    }
  }
  return norm;
}

std::map<std::string, Tensor> Adam::export_state() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : m_) out.emplace("m." + name, t);
  for (const auto& [name, t] : v_) out.emplace("v." + name, t);
  return out;
}

void Adam::import_state(const std::map<std::string, Tensor>& state, std::uint64_t steps) {
  m_.clear();
  v_.clear();
  for (const auto& [key, t] : state) {
    if (key.rfind("m.", 0) == 0) m_.emplace(key.substr(2), t);
    else if (key.rfind("v.", 0) == 0) v_.emplace(key.substr(2), t);
  }
  t_ = steps;
}

}  // namespace streamtts::nn
