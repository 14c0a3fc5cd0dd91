#include "streamtts/pipeline/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "streamtts/dbm/dbm.hpp"
#include "streamtts/error.hpp"
#include "streamtts/io/mel.hpp"

namespace streamtts::pipeline {

namespace fs = std::filesystem;

void CorpusConfig::validate() const {
  if (text_vocab <= static_cast<std::size_t>(kFirstTextToken)) {
    throw ConfigError("corpus text_vocab must exceed the two framing tokens");
  }
  if (sem_vocab < 2) throw ConfigError("corpus sem_vocab must be at least 2");
  if (mel_dim == 0) throw ConfigError("corpus mel_dim must be positive");
  if (min_length > max_length) throw ConfigError("corpus min_length exceeds max_length");
  if (duplicate_prob < 0 || duplicate_prob > 1 || long_silence_prob < 0 ||
      long_silence_prob > 1 || noise < 0) {
    throw ConfigError("corpus probabilities must lie in [0, 1] and noise be nonnegative");
  }
}

Grammar make_grammar(const CorpusConfig& config) {
  config.validate();
  num::Rng rng(config.grammar_seed);
  Grammar g;
  g.runs.resize(config.text_vocab);
  for (std::size_t v = kFirstTextToken; v < config.text_vocab; ++v) {
    const std::size_t len = 1 + rng.index(4);
    for (std::size_t k = 0; k < len; ++k) {
      g.runs[v].push_back(static_cast<TokenId>(1 + rng.index(config.sem_vocab - 1)));
    }
  }
  const std::size_t d = config.mel_dim;
  g.templates = Tensor({config.sem_vocab, d}, -1.0);
  for (std::size_t s = 0; s < config.sem_vocab; ++s) {
    const std::size_t bumps = s == static_cast<std::size_t>(kSilence) ? 1 : 3;
    for (std::size_t b = 0; b < bumps; ++b) {
      const double amp = s == static_cast<std::size_t>(kSilence) ? 0.3 : 0.5 + 1.5 * rng.uniform();
      const double center = rng.uniform() * static_cast<double>(d);
      const double width = 2.0 + 6.0 * rng.uniform();
      for (std::size_t c = 0; c < d; ++c) {
        const double u = (static_cast<double>(c) - center) / width;
        g.templates(s, c) += amp * std::exp(-0.5 * u * u);
      }
    }
  }
  return g;
}

CorpusItem generate_item(const CorpusConfig& config, const Grammar& grammar, num::Rng& rng) {
  const std::size_t t = config.min_length + rng.index(config.max_length - config.min_length + 1);
  std::vector<TokenId> interior(t);
  for (auto& x : interior) {
    x = static_cast<TokenId>(kFirstTextToken + rng.index(config.text_vocab - kFirstTextToken));
  }
  CorpusItem item;
  item.text = TextSequence::from_interior(interior, config.text_vocab);
  auto& y = item.tokens.tokens;
  auto& moves = item.path.moves;
  auto emit_run = [&](const std::vector<TokenId>& run) {
    for (TokenId s : run) {
      y.push_back(s);
      moves.push_back(lattice::Move::kEmit);
    }
    moves.push_back(lattice::Move::kWait);
  };
  auto silence = [&] {
    return std::vector<TokenId>(rng.bernoulli(config.long_silence_prob) ? 2 : 1, kSilence);
  };
  emit_run(silence());
  for (TokenId x : interior) {
    std::vector<TokenId> run = grammar.runs[static_cast<std::size_t>(x)];
    if (rng.bernoulli(config.duplicate_prob)) run.push_back(run.back());
    emit_run(run);
  }
  emit_run(silence());

  item.mel = Tensor({y.size(), config.mel_dim});
  for (std::size_t f = 0; f < y.size(); ++f) {
    for (std::size_t c = 0; c < config.mel_dim; ++c) {
      item.mel(f, c) = grammar.templates(static_cast<std::size_t>(y[f]), c) + config.noise * rng.normal();
    }
  }
  return item;
}

std::vector<CorpusItem> generate_corpus(const CorpusConfig& config, std::size_t count,
                                        std::uint64_t seed) {
  const Grammar grammar = make_grammar(config);
  std::vector<CorpusItem> items;
  items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    num::Rng rng(num::derive_seed(seed, i));
    items.push_back(generate_item(config, grammar, rng));
  }
  return items;
}

namespace {

std::string stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "item_%05zu", i);
  return buf;
}

void check_stream(const std::ostream& out, const fs::path& path) {
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

void write_corpus(const fs::path& dir, const CorpusConfig& config, std::uint64_t seed,
                  const std::vector<CorpusItem>& items) {
  fs::create_directories(dir);
  const fs::path manifest = dir / "manifest.txt";
  std::ofstream m(manifest);
  if (!m) throw Error("cannot open " + manifest.string() + " for writing");
  m << "count=" << items.size() << "\n"
    << "seed=" << seed << "\n"
    << "text_vocab=" << config.text_vocab << "\n"
    << "sem_vocab=" << config.sem_vocab << "\n"
    << "mel_dim=" << config.mel_dim << "\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    const std::string name = stem(i);
    m << name << "\n";
    const fs::path txt = dir / (name + ".txt");
    std::ofstream t(txt);
    if (!t) throw Error("cannot open " + txt.string() + " for writing");
    t << "text " << format_token_list(item.text.tokens()) << "\n"
      << "semantic " << format_token_list(item.tokens.tokens) << "\n"
      << "path " << item.path.str() << "\n";
    check_stream(t, txt);
    io::write_mel(dir / (name + ".mel"), item.mel);
  }
  check_stream(m, manifest);
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw CorpusError("manifest: bad value for " + key + ": " + value);
  }
}

std::string after_prefix(const std::string& line, const std::string& prefix, const fs::path& file) {
  if (line.rfind(prefix, 0) != 0) {
    throw CorpusError(file.string() + ": expected line starting with '" + prefix + "'");
  }
  return line.substr(prefix.size());
}

}  // namespace

CorpusItem read_item(const fs::path& stem, std::size_t text_vocab) {
  const fs::path txt = stem.string() + ".txt";
  std::ifstream t(txt);
  if (!t) throw CorpusError("cannot open " + txt.string());
  std::string l1, l2, l3;
  std::getline(t, l1);
  std::getline(t, l2);
  std::getline(t, l3);
  CorpusItem item;
  try {
    item.text = TextSequence(parse_token_list(after_prefix(l1, "text ", txt)), text_vocab);
    item.tokens.tokens = parse_token_list(after_prefix(l2, "semantic ", txt));
    item.path = lattice::AlignmentPath::parse(after_prefix(l3, "path ", txt));
  } catch (const CorpusError&) {
    throw;
  } catch (const Error& e) {
    throw CorpusError(txt.string() + ": " + e.what());
  }
  item.mel = io::read_mel(fs::path(stem.string() + ".mel"));
  return item;
}

Corpus read_corpus(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.txt";
  std::ifstream m(manifest);
  if (!m) throw CorpusError("cannot open " + manifest.string());
  Corpus corpus;
  std::size_t count = 0;
  bool have_count = false;
  std::vector<std::string> stems;
  std::string line;
  while (std::getline(m, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      stems.push_back(line);
      continue;
    }
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "count") {
      count = parse_size(key, value);
      have_count = true;
    } else if (key == "seed") {
      corpus.seed = parse_size(key, value);
    } else if (key == "text_vocab") {
      corpus.text_vocab = parse_size(key, value);
    } else if (key == "sem_vocab") {
      corpus.sem_vocab = parse_size(key, value);
    } else if (key == "mel_dim") {
      corpus.mel_dim = parse_size(key, value);
    } else {
      throw CorpusError("manifest: unknown key " + key);
    }
  }
  if (!have_count || stems.size() != count) {
    throw CorpusError("manifest: item count does not match listed items");
  }
  for (const auto& name : stems) corpus.items.push_back(read_item(dir / name, corpus.text_vocab));
  return corpus;
}

TrainingPair prepare_training_pair(const CorpusItem& item) {
  const std::size_t s = item.tokens.size();
  if (item.path.emit_count() != s) {
    throw CorpusError("alignment path emits " + std::to_string(item.path.emit_count()) +
                      " tokens but the item has " + std::to_string(s));
  }
  if (item.path.wait_count() != item.text.size()) {
    throw CorpusError("alignment path has " + std::to_string(item.path.wait_count()) +
                      " horizontal moves for text of length " + std::to_string(item.text.size()));
  }
  if (s > 0 && (item.mel.rows() != s || item.mel.rank() != 2)) {
    throw CorpusError("mel has " + std::to_string(item.mel.empty() ? 0 : item.mel.rows()) +
                      " frames for " + std::to_string(s) + " semantic tokens");
  }
  TrainingPair pair;
  pair.transducer = {item.text, item.tokens};
  if (s == 0) return pair;
  DurationAlignedText x_prime;
  try {
    x_prime = lattice::path_to_duration_text(item.path, item.text.tokens());
  } catch (const AlignmentError& e) {
    throw CorpusError(std::string("bad alignment path: ") + e.what());
  }
  dbm::DbmText xd = dbm::apply_dbm(x_prime);
  pair.ar = ar::ArTriple{std::move(xd.tokens), item.tokens.tokens, item.mel};
  return pair;
}

}  // namespace streamtts::pipeline
