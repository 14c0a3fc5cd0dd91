#include "streamtts/ar/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "streamtts/error.hpp"

namespace streamtts::ar {

namespace {

std::string block(std::size_t l, const char* part) {
  return "ar.block" + std::to_string(l) + "." + part;
}

Var dropout(Var x, double rate, num::Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  const Tensor& v = x.value();
  Tensor mask(v.shape());
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : mask.values()) m = rng->bernoulli(rate) ? 0.0 : keep;
  return num::mul(x, x.tape()->constant(std::move(mask)));
}

Var layer_norm(nn::Binding& p, const std::string& prefix, Var x) {
  return num::layer_norm_rows(x, p(prefix + ".g"), p(prefix + ".b"));
}

void init_layer_norm(nn::ParamStore& store, const std::string& prefix, std::size_t dim) {
  store.add(prefix + ".g", Tensor({1, dim}, 1.0));
  store.add(prefix + ".b", Tensor({1, dim}, 0.0));
}

/// Multi-head scaled dot-product attention; `mask` is added to the scores.
Var attend(Var q, Var k, Var v, std::size_t heads, const Tensor* mask) {
  num::Tape& tape = *q.tape();
  const std::size_t d = q.cols(), dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::optional<Var> mask_var;
  if (mask) mask_var = tape.constant_ref(*mask);
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = num::slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = num::slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = num::slice_cols(v, h * dh, (h + 1) * dh);
    Var scores = num::scale(num::matmul(qh, num::transpose(kh)), inv);
    if (mask_var) scores = num::add(scores, *mask_var);
    outs.push_back(num::matmul(num::softmax_rows(scores), vh));
  }
  return heads == 1 ? outs[0] : num::concat_cols(outs);
}

Var feed_forward(nn::Binding& p, std::size_t l, Var h) {
  Var f = layer_norm(p, block(l, "ln2"), h);
  return nn::linear(p, block(l, "ff2"), num::relu(nn::linear(p, block(l, "ff1"), f)));
}

}  // namespace

void ArConfig::validate() const {
  if (latent_dim != mel_dim) {
    throw ConfigError("latent_dim (" + std::to_string(latent_dim) + ") must equal mel_dim (" +
                      std::to_string(mel_dim) + ") for the residual output MLP");
  }
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("d_model must be a positive multiple of heads");
  }
  if (blocks == 0) throw ConfigError("need at least one decoder block");
  for (double r : {prenet_dropout, dropout, infer_mel_dropout}) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout rates must lie in [0, 1)");
  }
}

Tensor LatentGaussian::sigma() const {
  Tensor s = log_var;
  for (auto& v : s.values()) v = std::exp(0.5 * v);
  return s;
}

Tensor positional_encoding(std::size_t first, std::size_t count, std::size_t dim) {
  Tensor pe({count, dim});
  for (std::size_t r = 0; r < count; ++r) {
    const double pos = static_cast<double>(first + r);
    for (std::size_t c = 0; c < dim; ++c) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / static_cast<double>(dim));
      pe(r, c) = (c % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

ArModel::ArModel(const ArConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  num::Rng rng(seed);
  const auto& c = config_;
  nn::init_linear(params_, "ar.prenet.0", c.mel_dim, c.prenet_hidden, rng);
  nn::init_linear(params_, "ar.prenet.1", c.prenet_hidden, c.prenet_hidden, rng);
  nn::init_linear(params_, "ar.prenet.2", c.prenet_hidden, c.d_model, rng);
  nn::init_embedding(params_, "ar.emb.sem", c.sem_vocab, c.d_model, rng);
  nn::init_embedding(params_, "ar.emb.text", c.text_vocab, c.d_model, rng);
  for (std::size_t l = 0; l < c.blocks; ++l) {
    init_layer_norm(params_, block(l, "ln1"), c.d_model);
    nn::init_linear(params_, block(l, "q"), c.d_model, c.d_model, rng);
    nn::init_linear(params_, block(l, "k"), c.d_model, c.d_model, rng);
    nn::init_linear(params_, block(l, "v"), c.d_model, c.d_model, rng);
    nn::init_linear(params_, block(l, "o"), c.d_model, c.d_model, rng);
    init_layer_norm(params_, block(l, "ln2"), c.d_model);
    nn::init_linear(params_, block(l, "ff1"), c.d_model, c.ffn, rng);
    nn::init_linear(params_, block(l, "ff2"), c.ffn, c.d_model, rng);
  }
  init_layer_norm(params_, "ar.ln_f", c.d_model);
  nn::init_linear(params_, "ar.latent.mu", c.d_model, c.latent_dim, rng);
  nn::init_linear(params_, "ar.latent.logvar", c.d_model, c.latent_dim, rng);
  nn::init_linear(params_, "ar.out.0", c.latent_dim, c.mlp_hidden, rng);
  nn::init_linear(params_, "ar.out.1", c.mlp_hidden, c.mel_dim, rng);
}

ArModel::ArModel(const ArConfig& config, nn::ParamStore params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  ArModel reference(config, 0);
  for (const auto& [name, t] : reference.params().all()) {
    if (!params_.contains(name)) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (params_.at(name).shape() != t.shape()) {
      throw FormatError("tensor '" + name + "' has shape " +
                        num::shape_string(params_.at(name).shape()) + ", config implies " +
                        num::shape_string(t.shape()));
    }
  }
}

DecoderCache ArModel::empty_cache() const {
  DecoderCache cache;
  cache.keys.assign(config_.blocks, Tensor({0, config_.d_model}));
  cache.values.assign(config_.blocks, Tensor({0, config_.d_model}));
  return cache;
}

Var ArModel::decoder_input(nn::Binding& p, std::span<const TokenId> y, std::span<const TokenId> x,
                           Var mel_prev, std::size_t first_position, num::Rng* dropout_rng,
                           double prenet_rate) const {
  const std::size_t n = y.size();
  if (x.size() != n || mel_prev.rows() != n || mel_prev.cols() != config_.mel_dim) {
    throw DimensionError("AR inputs misaligned: " + std::to_string(y.size()) + " tokens, " +
                         std::to_string(x.size()) + " text, mel " +
                         num::shape_string(mel_prev.shape()));
  }
  std::vector<std::size_t> yi, xi;
  for (std::size_t t = 0; t < n; ++t) {
    if (y[t] < 0 || static_cast<std::size_t>(y[t]) >= config_.sem_vocab ||
        x[t] < 0 || static_cast<std::size_t>(x[t]) >= config_.text_vocab) {
      throw DimensionError("AR token outside vocabulary at step " + std::to_string(t));
    }
    yi.push_back(static_cast<std::size_t>(y[t]));
    xi.push_back(static_cast<std::size_t>(x[t]));
  }
  Var h = dropout(num::relu(nn::linear(p, "ar.prenet.0", mel_prev)), prenet_rate, dropout_rng);
  h = dropout(num::relu(nn::linear(p, "ar.prenet.1", h)), prenet_rate, dropout_rng);
  h = nn::linear(p, "ar.prenet.2", h);
  h = num::add(h, num::gather_rows(p("ar.emb.sem"), yi));
  h = num::add(h, num::gather_rows(p("ar.emb.text"), xi));
  return num::add(h, p.tape().constant(positional_encoding(first_position, n, config_.d_model)));
}

Var ArModel::output_mlp(nn::Binding& p, Var z) const {
  return num::add(z, nn::linear(p, "ar.out.1", num::relu(nn::linear(p, "ar.out.0", z))));
}

SequenceOutputs ArModel::forward_sequence(nn::Binding& p, std::span<const TokenId> y,
                                          std::span<const TokenId> x, Var mel_inputs,
                                          const ForwardNoise& noise) const {
  const std::size_t n = y.size();
  if (noise.eps.rows() != n || noise.eps.cols() != config_.latent_dim) {
    throw DimensionError("noise must be [" + std::to_string(n) + "x" +
                         std::to_string(config_.latent_dim) + "], got " +
                         num::shape_string(noise.eps.shape()));
  }
  num::Rng* rng = noise.dropout_rng;
  Var h = decoder_input(p, y, x, mel_inputs, 0, rng, config_.prenet_dropout);
  Tensor mask({n, n}, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = r + 1; c < n; ++c) mask(r, c) = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t l = 0; l < config_.blocks; ++l) {
    Var a = layer_norm(p, block(l, "ln1"), h);
    Var q = nn::linear(p, block(l, "q"), a);
    Var k = nn::linear(p, block(l, "k"), a);
    Var v = nn::linear(p, block(l, "v"), a);
    Var o = nn::linear(p, block(l, "o"), attend(q, k, v, config_.heads, &mask));
    h = num::add(h, dropout(o, config_.dropout, rng));
    h = num::add(h, dropout(feed_forward(p, l, h), config_.dropout, rng));
  }
  Var e = layer_norm(p, "ar.ln_f", h);
  SequenceOutputs out;
  out.mu = nn::linear(p, "ar.latent.mu", e);
  out.log_var = num::clamp(nn::linear(p, "ar.latent.logvar", e), kLogVarMin, kLogVarMax);
  Var sigma = num::exp(num::scale(out.log_var, 0.5));
  Var z = num::add(out.mu, num::mul(sigma, p.tape().constant(noise.eps)));
  out.mel = output_mlp(p, z);
  out.mean_mel = output_mlp(p, out.mu);
  return out;
}

Tensor ArModel::encode_step(DecoderCache& cache, const ArStepInput& input, num::Rng& rng,
                            nn::Binding& p) const {
  if (input.position != cache.steps) {
    throw StateError("AR step at position " + std::to_string(input.position) +
                     " but cache holds " + std::to_string(cache.steps) + " steps");
  }
  if (cache.keys.size() != config_.blocks) throw StateError("cache built for another model");
  if (input.mel_prev == nullptr) throw StateError("AR step needs the previous frame");
  num::Tape& tape = p.tape();
  const TokenId y[] = {input.y};
  const TokenId x[] = {input.x};
  Var h = decoder_input(p, y, x, tape.constant_ref(*input.mel_prev), input.position,
                        config_.infer_mel_dropout > 0.0 ? &rng : nullptr,
                        config_.infer_mel_dropout);
  for (std::size_t l = 0; l < config_.blocks; ++l) {
    Var a = layer_norm(p, block(l, "ln1"), h);
    Var q = nn::linear(p, block(l, "q"), a);
    const Var ks[] = {tape.constant_ref(cache.keys[l]), nn::linear(p, block(l, "k"), a)};
    const Var vs[] = {tape.constant_ref(cache.values[l]), nn::linear(p, block(l, "v"), a)};
    Var k = num::concat_rows(ks);
    Var v = num::concat_rows(vs);
    Var o = nn::linear(p, block(l, "o"), attend(q, k, v, config_.heads, nullptr));
    h = num::add(h, o);
    h = num::add(h, feed_forward(p, l, h));
    Tensor knew = k.value();
    Tensor vnew = v.value();
    cache.keys[l] = std::move(knew);
    cache.values[l] = std::move(vnew);
  }
  ++cache.steps;
  return layer_norm(p, "ar.ln_f", h).value();
}

ArStepResult ArModel::step(DecoderCache& cache, const ArStepInput& input, num::Rng& rng) const {
  num::Tape tape;
  nn::Binding p(tape, params_, false);
  const Tensor e = encode_step(cache, input, rng, p);
  Var ev = tape.constant(e);
  ArStepResult r;
  r.latent.mu = nn::linear(p, "ar.latent.mu", ev).value();
  r.latent.log_var =
      num::clamp(nn::linear(p, "ar.latent.logvar", ev), kLogVarMin, kLogVarMax).value();
  std::vector<double> eps;
  if (input.eps) {
    if (input.eps->size() != config_.latent_dim) {
      throw DimensionError("eps has " + std::to_string(input.eps->size()) + " entries, expected " +
                           std::to_string(config_.latent_dim));
    }
    eps = *input.eps;
  } else {
    eps = rng.normal_vector(config_.latent_dim);
  }
  r.z = r.latent.mu;
  for (std::size_t d = 0; d < r.z.size(); ++d) {
    r.z[d] += std::exp(0.5 * r.latent.log_var[d]) * eps[d];
  }
  r.mel = output_mlp(p, tape.constant_ref(r.z)).value();
  return r;
}

void ArModel::prefill(DecoderCache& cache, std::size_t position, TokenId y, TokenId x,
                      const Tensor& mel_prev, num::Rng& rng) const {
  num::Tape tape;
  nn::Binding p(tape, params_, false);
  ArStepInput in;
  in.position = position;
  in.y = y;
  in.x = x;
  in.mel_prev = &mel_prev;
  encode_step(cache, in, rng, p);
}

}  // namespace streamtts::ar
