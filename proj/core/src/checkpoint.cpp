#include "streamtts/io/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "streamtts/error.hpp"
#include "streamtts/io/binary.hpp"

namespace streamtts::io {

namespace fs = std::filesystem;

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  std::string block;
  for (const auto& [k, v] : ckpt.config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("checkpoint config entry not representable: " + k);
    }
    block += k + "=" + v + "\n";
  }
  put_u32(out, static_cast<std::uint32_t>(block.size()));
  out.write(block.data(), static_cast<std::streamsize>(block.size()));
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.values()) put_f64(out, v);
  }
}

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  // Written beside the target and renamed, so a crash never leaves a torn file.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    write_checkpoint(out, ckpt);
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint read_checkpoint(std::istream& in) {
  const std::string magic = get_bytes(in, 4);
  if (magic != std::string(kCheckpointMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  std::istringstream block(get_bytes(in, get_u32(in)));
  std::string line;
  while (std::getline(block, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad checkpoint config line: " + line);
    ckpt.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint32_t count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_bytes(in, get_u32(in));
    const std::uint32_t rank = get_u32(in);
    if (rank > 8) throw FormatError("tensor " + name + ": implausible rank");
    num::Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = get_u64(in);
      if (d > (1ull << 28) || (d > 0 && numel > (1ull << 28) / d)) {
        throw FormatError("tensor " + name + ": implausible size");
      }
      numel *= d;
    }
    num::Tensor t(shape);
    for (auto& v : t.values()) v = get_f64(in);
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_checkpoint(in);
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::string& need(const Checkpoint& c, const std::string& key) {
  auto it = c.config.find(key);
  if (it == c.config.end()) throw FormatError("checkpoint lacks config key " + key);
  return it->second;
}

std::size_t need_size(const Checkpoint& c, const std::string& key) {
  const std::string& v = need(c, key);
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (const std::exception&) {
    throw FormatError("checkpoint key " + key + " is not a count: " + v);
  }
}

double need_double(const Checkpoint& c, const std::string& key) {
  const std::string& v = need(c, key);
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw FormatError("checkpoint key " + key + " is not a number: " + v);
  }
}

nn::ParamStore params_with_prefix(const Checkpoint& c, const std::string& prefix) {
  nn::ParamStore store;
  for (const auto& [name, t] : c.tensors) {
    if (name.rfind(prefix, 0) == 0) store.add(name, t);
  }
  return store;
}

}  // namespace

void store_transducer(Checkpoint& ckpt, const transducer::TransducerModel& model) {
  const auto& c = model.config();
  ckpt.config["transducer.text_vocab"] = std::to_string(c.text_vocab);
  ckpt.config["transducer.sem_vocab"] = std::to_string(c.sem_vocab);
  ckpt.config["transducer.embed"] = std::to_string(c.embed);
  ckpt.config["transducer.enc_hidden"] = std::to_string(c.enc_hidden);
  ckpt.config["transducer.enc_layers"] = std::to_string(c.enc_layers);
  ckpt.config["transducer.pred_hidden"] = std::to_string(c.pred_hidden);
  ckpt.config["transducer.pred_layers"] = std::to_string(c.pred_layers);
  ckpt.config["transducer.joint_hidden"] = std::to_string(c.joint_hidden);
  for (const auto& [name, t] : model.params().all()) ckpt.tensors[name] = t;
}

transducer::TransducerModel load_transducer(const Checkpoint& ckpt) {
  transducer::TransducerConfig c;
  c.text_vocab = need_size(ckpt, "transducer.text_vocab");
  c.sem_vocab = need_size(ckpt, "transducer.sem_vocab");
  c.embed = need_size(ckpt, "transducer.embed");
  c.enc_hidden = need_size(ckpt, "transducer.enc_hidden");
  c.enc_layers = need_size(ckpt, "transducer.enc_layers");
  c.pred_hidden = need_size(ckpt, "transducer.pred_hidden");
  c.pred_layers = need_size(ckpt, "transducer.pred_layers");
  c.joint_hidden = need_size(ckpt, "transducer.joint_hidden");
  return transducer::TransducerModel(c, params_with_prefix(ckpt, "tr."));
}

void store_ar(Checkpoint& ckpt, const ar::ArModel& model) {
  const auto& c = model.config();
  ckpt.config["ar.text_vocab"] = std::to_string(c.text_vocab);
  ckpt.config["ar.sem_vocab"] = std::to_string(c.sem_vocab);
  ckpt.config["ar.mel_dim"] = std::to_string(c.mel_dim);
  ckpt.config["ar.latent_dim"] = std::to_string(c.latent_dim);
  ckpt.config["ar.d_model"] = std::to_string(c.d_model);
  ckpt.config["ar.blocks"] = std::to_string(c.blocks);
  ckpt.config["ar.heads"] = std::to_string(c.heads);
  ckpt.config["ar.ffn"] = std::to_string(c.ffn);
  ckpt.config["ar.prenet_hidden"] = std::to_string(c.prenet_hidden);
  ckpt.config["ar.mlp_hidden"] = std::to_string(c.mlp_hidden);
  ckpt.config["ar.prenet_dropout"] = fmt(c.prenet_dropout);
  ckpt.config["ar.dropout"] = fmt(c.dropout);
  ckpt.config["ar.infer_mel_dropout"] = fmt(c.infer_mel_dropout);
  for (const auto& [name, t] : model.params().all()) ckpt.tensors[name] = t;
}

ar::ArModel load_ar(const Checkpoint& ckpt) {
  ar::ArConfig c;
  c.text_vocab = need_size(ckpt, "ar.text_vocab");
  c.sem_vocab = need_size(ckpt, "ar.sem_vocab");
  c.mel_dim = need_size(ckpt, "ar.mel_dim");
  c.latent_dim = need_size(ckpt, "ar.latent_dim");
  c.d_model = need_size(ckpt, "ar.d_model");
  c.blocks = need_size(ckpt, "ar.blocks");
  c.heads = need_size(ckpt, "ar.heads");
  c.ffn = need_size(ckpt, "ar.ffn");
  c.prenet_hidden = need_size(ckpt, "ar.prenet_hidden");
  c.mlp_hidden = need_size(ckpt, "ar.mlp_hidden");
  c.prenet_dropout = need_double(ckpt, "ar.prenet_dropout");
  c.dropout = need_double(ckpt, "ar.dropout");
  c.infer_mel_dropout = need_double(ckpt, "ar.infer_mel_dropout");
  return ar::ArModel(c, params_with_prefix(ckpt, "ar."));
}

void store_adam(Checkpoint& ckpt, const nn::Adam& adam) {
  ckpt.config["adam.steps"] = std::to_string(adam.steps());
  for (auto& [name, t] : adam.export_state()) ckpt.tensors["adam." + name] = t;
}

void load_adam(const Checkpoint& ckpt, nn::Adam& adam) {
  std::map<std::string, num::Tensor> state;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("adam.", 0) == 0) state[name.substr(5)] = t;
  }
  adam.import_state(state, need_size(ckpt, "adam.steps"));
}

}  // namespace streamtts::io
