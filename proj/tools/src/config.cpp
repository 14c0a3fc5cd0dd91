#include "streamtts_cli/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "streamtts/error.hpp"

namespace streamtts::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Setter = std::function<void(const std::string&)>;

struct Binder {
  std::map<std::string, Setter> keys;
  std::string section;

  [[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) const {
    throw ConfigError("[" + section + "] " + key + ": expected " + want + ", got '" + value + "'");
  }

  void size(const std::string& key, std::size_t& out) {
    keys[key] = [this, key, &out](const std::string& v) {
      std::size_t used = 0;
      try {
        if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
        out = static_cast<std::size_t>(std::stoull(v, &used));
      } catch (const std::exception&) {
        bad(key, v, "a nonnegative integer");
      }
      if (used != v.size()) bad(key, v, "a nonnegative integer");
    };
  }
  void u64(const std::string& key, std::uint64_t& out) {
    keys[key] = [this, key, &out](const std::string& v) {
      std::size_t used = 0;
      try {
        if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
        out = std::stoull(v, &used);
      } catch (const std::exception&) {
        bad(key, v, "a nonnegative integer");
      }
      if (used != v.size()) bad(key, v, "a nonnegative integer");
    };
  }
  void real(const std::string& key, double& out) {
    keys[key] = [this, key, &out](const std::string& v) {
      std::size_t used = 0;
      try {
        out = std::stod(v, &used);
      } catch (const std::exception&) {
        bad(key, v, "a number");
      }
      if (used != v.size()) bad(key, v, "a number");
    };
  }
  void flag(const std::string& key, bool& out) {
    keys[key] = [this, key, &out](const std::string& v) {
      if (v == "1" || v == "true") {
        out = true;
      } else if (v == "0" || v == "false") {
        out = false;
      } else {
        bad(key, v, "true/false");
      }
    };
  }
};

struct Schema {
  std::map<std::string, Binder> sections;
  std::string transducer_ckpt;
  std::string ar_ckpt;
  std::string scorer = "loglik";
};

// Desk-scale defaults with the reference configuration they replace:
//   transducer: 6-layer conformer text encoder, 512 wide    -> 1-layer LSTM, 64
//   ar: 12 blocks, width 1024, 16 heads, FFN 4096            -> 2 blocks, 64, 2 heads, 128
//   ar: lambda 5e-2, beta 0.5, pre-net dropout 0.5, block dropout 0.1 (kept)
//   ar: KL warm-up 10000 steps                               -> 200
//   pipeline: top-k 15, 5 resampling candidates (resample defaults to 1)
void bind_all(Schema& s, AppConfig& c) {
  {
    Binder& b = s.sections["corpus"];
    b.section = "corpus";
    b.size("text_vocab", c.corpus.text_vocab);
    b.size("sem_vocab", c.corpus.sem_vocab);
    b.size("mel_dim", c.corpus.mel_dim);
    b.size("min_length", c.corpus.min_length);
    b.size("max_length", c.corpus.max_length);
    b.u64("grammar_seed", c.corpus.grammar_seed);
    b.real("duplicate_prob", c.corpus.duplicate_prob);
    b.real("long_silence_prob", c.corpus.long_silence_prob);
    b.real("noise", c.corpus.noise);
    b.size("count", c.corpus_count);
    b.u64("seed", c.corpus_seed);
    b.size("holdout", c.holdout);
  }
  {
    Binder& b = s.sections["transducer"];
    b.section = "transducer";
    b.size("text_vocab", c.transducer.text_vocab);
    b.size("sem_vocab", c.transducer.sem_vocab);
    b.size("embed", c.transducer.embed);
    b.size("enc_hidden", c.transducer.enc_hidden);
    b.size("enc_layers", c.transducer.enc_layers);
    b.size("pred_hidden", c.transducer.pred_hidden);
    b.size("pred_layers", c.transducer.pred_layers);
    b.size("joint_hidden", c.transducer.joint_hidden);
    b.real("lr", c.transducer_train.lr);
    b.real("clip_norm", c.transducer_train.clip_norm);
    b.size("steps", c.transducer_schedule.steps);
    b.size("batch", c.transducer_schedule.batch);
    b.u64("seed", c.transducer_schedule.seed);
    b.size("checkpoint_every", c.transducer_schedule.checkpoint_every);
  }
  {
    Binder& b = s.sections["ar"];
    b.section = "ar";
    b.size("text_vocab", c.ar.text_vocab);
    b.size("sem_vocab", c.ar.sem_vocab);
    b.size("mel_dim", c.ar.mel_dim);
    b.size("latent_dim", c.ar.latent_dim);
    b.size("d_model", c.ar.d_model);
    b.size("blocks", c.ar.blocks);
    b.size("heads", c.ar.heads);
    b.size("ffn", c.ar.ffn);
    b.size("prenet_hidden", c.ar.prenet_hidden);
    b.size("mlp_hidden", c.ar.mlp_hidden);
    b.real("prenet_dropout", c.ar.prenet_dropout);
    b.real("dropout", c.ar.dropout);
    b.real("infer_mel_dropout", c.ar.infer_mel_dropout);
    b.real("lr", c.ar_train.lr);
    b.real("lambda", c.ar_train.lambda);
    b.real("beta", c.ar_train.beta);
    b.u64("kl_warmup", c.ar_train.kl_warmup);
    b.real("clip_norm", c.ar_train.clip_norm);
    b.size("steps", c.ar_schedule.steps);
    b.size("batch", c.ar_schedule.batch);
    b.u64("seed", c.ar_schedule.seed);
    b.size("checkpoint_every", c.ar_schedule.checkpoint_every);
  }
  {
    Binder& b = s.sections["pipeline"];
    b.section = "pipeline";
    b.size("top_k", c.run.top_k);
    b.size("emission_cap", c.run.emission_cap);
    b.u64("seed", c.run.seed);
    b.size("resample", c.run.resample);
    b.flag("prompt_dbm", c.run.prompt_dbm);
    b.flag("threaded", c.run.threaded);
    b.size("queue_capacity", c.run.queue_capacity);
    b.keys["scorer"] = [&s](const std::string& v) { s.scorer = v; };
    b.keys["transducer_checkpoint"] = [&s](const std::string& v) { s.transducer_ckpt = v; };
    b.keys["ar_checkpoint"] = [&s](const std::string& v) { s.ar_ckpt = v; };
  }
}

std::string resolve(const std::string& value, const fs::path& base, const char* key) {
  if (value.empty()) return {};
  fs::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  if (!fs::exists(p)) throw ConfigError(std::string("[pipeline] ") + key + ": no such file " + p.string());
  return p.string();
}

void validate(const AppConfig& c) {
  c.corpus.validate();
  c.ar.validate();
  c.run.validate();
  if (c.transducer.text_vocab != c.corpus.text_vocab || c.ar.text_vocab != c.corpus.text_vocab ||
      c.transducer.sem_vocab != c.corpus.sem_vocab || c.ar.sem_vocab != c.corpus.sem_vocab) {
    throw ConfigError("vocabulary sizes differ between [corpus], [transducer] and [ar]");
  }
  if (c.ar.mel_dim != c.corpus.mel_dim) throw ConfigError("[ar] mel_dim differs from [corpus]");
  if (c.transducer_schedule.batch == 0 || c.ar_schedule.batch == 0) {
    throw ConfigError("batch must be at least 1");
  }
  if (c.ar_train.lambda < 0 || c.ar_train.beta < 0) throw ConfigError("[ar] lambda and beta must be >= 0");
  if (c.transducer.enc_layers == 0 || c.transducer.pred_layers == 0) {
    throw ConfigError("[transducer] layer counts must be at least 1");
  }
}

}  // namespace

AppConfig parse_config(const std::string& text, const fs::path& base_dir) {
  AppConfig c;
  Schema s;
  bind_all(s, c);
  std::istringstream in(text);
  std::string line;
  Binder* current = nullptr;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      auto it = s.sections.find(name);
      if (it == s.sections.end()) throw ConfigError(where + "unknown section [" + name + "]");
      current = &it->second;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (current == nullptr) throw ConfigError(where + "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto kt = current->keys.find(key);
    if (kt == current->keys.end()) {
      throw ConfigError(where + "unknown key '" + key + "' in [" + current->section + "]");
    }
    kt->second(value);
  }
  if (s.scorer == "loglik") {
    c.run.scorer = pipeline::ScorerKind::kLogLikelihood;
  } else if (s.scorer == "edit") {
    c.run.scorer = pipeline::ScorerKind::kEditDistance;
  } else {
    throw ConfigError("[pipeline] scorer: expected loglik or edit, got '" + s.scorer + "'");
  }
  c.run.transducer_checkpoint = resolve(s.transducer_ckpt, base_dir, "transducer_checkpoint");
  c.run.ar_checkpoint = resolve(s.ar_ckpt, base_dir, "ar_checkpoint");
  validate(c);
  return c;
}

AppConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_config(const AppConfig& c) {
  std::ostringstream o;
  o << "[corpus]\n"
    << "text_vocab = " << c.corpus.text_vocab << "\n"
    << "sem_vocab = " << c.corpus.sem_vocab << "\n"
    << "mel_dim = " << c.corpus.mel_dim << "\n"
    << "min_length = " << c.corpus.min_length << "\n"
    << "max_length = " << c.corpus.max_length << "\n"
    << "grammar_seed = " << c.corpus.grammar_seed << "\n"
    << "duplicate_prob = " << num(c.corpus.duplicate_prob) << "\n"
    << "long_silence_prob = " << num(c.corpus.long_silence_prob) << "\n"
    << "noise = " << num(c.corpus.noise) << "\n"
    << "count = " << c.corpus_count << "\n"
    << "seed = " << c.corpus_seed << "\n"
    << "holdout = " << c.holdout << "\n\n";
  o << "[transducer]\n"
    << "text_vocab = " << c.transducer.text_vocab << "\n"
    << "sem_vocab = " << c.transducer.sem_vocab << "\n"
    << "embed = " << c.transducer.embed << "\n"
    << "enc_hidden = " << c.transducer.enc_hidden << "\n"
    << "enc_layers = " << c.transducer.enc_layers << "\n"
    << "pred_hidden = " << c.transducer.pred_hidden << "\n"
    << "pred_layers = " << c.transducer.pred_layers << "\n"
    << "joint_hidden = " << c.transducer.joint_hidden << "\n"
    << "lr = " << num(c.transducer_train.lr) << "\n"
    << "clip_norm = " << num(c.transducer_train.clip_norm) << "\n"
    << "steps = " << c.transducer_schedule.steps << "\n"
    << "batch = " << c.transducer_schedule.batch << "\n"
    << "seed = " << c.transducer_schedule.seed << "\n"
    << "checkpoint_every = " << c.transducer_schedule.checkpoint_every << "\n\n";
  o << "[ar]\n"
    << "text_vocab = " << c.ar.text_vocab << "\n"
    << "sem_vocab = " << c.ar.sem_vocab << "\n"
    << "mel_dim = " << c.ar.mel_dim << "\n"
    << "latent_dim = " << c.ar.latent_dim << "\n"
    << "d_model = " << c.ar.d_model << "\n"
    << "blocks = " << c.ar.blocks << "\n"
    << "heads = " << c.ar.heads << "\n"
    << "ffn = " << c.ar.ffn << "\n"
    << "prenet_hidden = " << c.ar.prenet_hidden << "\n"
    << "mlp_hidden = " << c.ar.mlp_hidden << "\n"
    << "prenet_dropout = " << num(c.ar.prenet_dropout) << "\n"
    << "dropout = " << num(c.ar.dropout) << "\n"
    << "infer_mel_dropout = " << num(c.ar.infer_mel_dropout) << "\n"
    << "lr = " << num(c.ar_train.lr) << "\n"
    << "lambda = " << num(c.ar_train.lambda) << "\n"
    << "beta = " << num(c.ar_train.beta) << "\n"
    << "kl_warmup = " << c.ar_train.kl_warmup << "\n"
    << "clip_norm = " << num(c.ar_train.clip_norm) << "\n"
    << "steps = " << c.ar_schedule.steps << "\n"
    << "batch = " << c.ar_schedule.batch << "\n"
    << "seed = " << c.ar_schedule.seed << "\n"
    << "checkpoint_every = " << c.ar_schedule.checkpoint_every << "\n\n";
  o << "[pipeline]\n"
    << "top_k = " << c.run.top_k << "\n"
    << "emission_cap = " << c.run.emission_cap << "\n"
    << "seed = " << c.run.seed << "\n"
    << "resample = " << c.run.resample << "\n"
    << "scorer = " << (c.run.scorer == pipeline::ScorerKind::kEditDistance ? "edit" : "loglik")
    << "\n"
    << "prompt_dbm = " << (c.run.prompt_dbm ? "true" : "false") << "\n"
    << "threaded = " << (c.run.threaded ? "true" : "false") << "\n"
    << "queue_capacity = " << c.run.queue_capacity << "\n";
  if (!c.run.transducer_checkpoint.empty()) {
    o << "transducer_checkpoint = " << c.run.transducer_checkpoint << "\n";
  }
  if (!c.run.ar_checkpoint.empty()) o << "ar_checkpoint = " << c.run.ar_checkpoint << "\n";
  return o.str();
}

}  // namespace streamtts::cli
