#include "streamtts_cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "streamtts/error.hpp"
#include "streamtts/io/checkpoint.hpp"
#include "streamtts/io/mel.hpp"
#include "streamtts/lattice/lattice.hpp"
#include "streamtts_cli/config.hpp"
#include "streamtts_cli/verify.hpp"

namespace streamtts::cli {

namespace fs = std::filesystem;

namespace {

AppConfig config_of(const CommonOptions& o) {
  return o.config.empty() ? AppConfig{} : load_config(o.config);
}

std::string num17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int cmd_gen_corpus(const GenCorpusOptions& options, std::ostream& out) {
  const AppConfig cfg = config_of(options.common);
  const std::size_t count = options.count.value_or(cfg.corpus_count);
  const std::uint64_t seed = options.common.seed.value_or(cfg.corpus_seed);
  const auto items = pipeline::generate_corpus(cfg.corpus, count, seed);
  pipeline::write_corpus(options.out, cfg.corpus, seed, items);
  out << "items=" << count << "\nseed=" << seed << "\n";
  return kExitOk;
}

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

void check_corpus(const pipeline::Corpus& corpus, const AppConfig& cfg) {
  if (corpus.text_vocab != cfg.corpus.text_vocab || corpus.sem_vocab != cfg.corpus.sem_vocab ||
      corpus.mel_dim != cfg.corpus.mel_dim) {
    throw ConfigError("corpus vocabulary or mel size differs from the config");
  }
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t batch,
                                       std::size_t pool) {
  num::Rng rng(num::derive_seed(num::derive_seed(seed, kBatchStream), step));
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = rng.index(pool);
  return idx;
}

/// Stage-independent training loop with CSV output, resume and divergence
/// handling. `Stage` supplies the model, optimizer and one update.
template <typename Stage>
int run_training(Stage& stage, const TrainOptions& options, std::uint64_t seed,
                 std::size_t steps, std::ostream& out) {
  std::size_t start = 0;
  if (!options.resume.empty()) {
    const io::Checkpoint ckpt = io::read_checkpoint(fs::path(options.resume));
    auto get = [&](const std::string& k) {
      auto it = ckpt.config.find(k);
      if (it == ckpt.config.end()) throw FormatError("resume checkpoint lacks " + k);
      return it->second;
    };
    if (get("train.stage") != options.stage) throw ConfigError("resume checkpoint is for another stage");
    if (get("train.seed") != std::to_string(seed)) throw ConfigError("resume checkpoint used another seed");
    stage.load(ckpt);
    start = std::stoull(get("train.step"));
  }
  auto save = [&](std::size_t step_count) {
    io::Checkpoint ckpt;
    ckpt.config["train.stage"] = options.stage;
    ckpt.config["train.step"] = std::to_string(step_count);
    ckpt.config["train.seed"] = std::to_string(seed);
    stage.store(ckpt);
    io::write_checkpoint(fs::path(options.out), ckpt);
  };

  const std::string csv_path = options.loss_csv.empty() ? options.out + ".loss.csv" : options.loss_csv;
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw Error("cannot open " + csv_path + " for writing");
  csv << stage.csv_header() << "\n";

  double first = NAN, last = NAN;
  for (std::size_t step = start; step < steps; ++step) {
    auto snapshot = stage.snapshot();
    std::string row;
    double loss = NAN;
    try {
      row = stage.step(seed, step, loss);
    } catch (const TrainingError& e) {
      stage.restore(std::move(snapshot));
      save(step);
      out << "diverged at step " << step << ": " << e.what() << "\n"
          << "last good checkpoint (after " << step << " steps) written to " << options.out << "\n";
      return kExitDiverged;
    }
    if (!std::isfinite(loss)) {
      stage.restore(std::move(snapshot));
      save(step);
      out << "diverged at step " << step << ": non-finite loss\n";
      return kExitDiverged;
    }
    if (step == start) first = loss;
    last = loss;
    csv << step << "," << row << "\n";
    if (stage.every > 0 && (step + 1) % stage.every == 0) save(step + 1);
  }
  if (!csv) throw Error("write failed: " + csv_path);
  save(std::max(start, steps));
  out << "stage=" << options.stage << "\nsteps=" << steps << "\nfirst_loss=" << num17(first)
      << "\nfinal_loss=" << num17(last) << "\ncheckpoint=" << options.out << "\nloss_csv=" << csv_path
      << "\n";
  return kExitOk;
}

struct TransducerStage {
  transducer::TransducerModel model;
  transducer::TransducerTrainer trainer;
  std::vector<transducer::TransducerPair> pairs;
  std::size_t batch;
  std::size_t every;

  TransducerStage(const AppConfig& cfg, std::uint64_t seed, std::vector<transducer::TransducerPair> p)
      : model(cfg.transducer, num::derive_seed(seed, kInitStream)),
        trainer(model, cfg.transducer_train),
        pairs(std::move(p)),
        batch(cfg.transducer_schedule.batch),
        every(cfg.transducer_schedule.checkpoint_every) {}

  std::string csv_header() const { return "step,loss"; }

  std::string step(std::uint64_t seed, std::size_t step, double& loss) {
    std::vector<transducer::TransducerPair> b;
    for (std::size_t i : batch_indices(seed, step, batch, pairs.size())) b.push_back(pairs[i]);
    loss = trainer.train_step(b);
    return num17(loss);
  }

  std::pair<nn::ParamStore, nn::Adam> snapshot() const {
    return {model.params(), trainer.optimizer()};
  }
  void restore(std::pair<nn::ParamStore, nn::Adam> s) {
    model.params() = std::move(s.first);
    trainer.optimizer() = std::move(s.second);
  }
  void store(io::Checkpoint& c) const {
    io::store_transducer(c, model);
    io::store_adam(c, trainer.optimizer());
  }
  void load(const io::Checkpoint& c) {
    const auto loaded = io::load_transducer(c);
    model.params() = loaded.params();
    io::load_adam(c, trainer.optimizer());
  }
};

struct ArStage {
  ar::ArModel model;
  ar::ArTrainer trainer;
  std::vector<ar::ArTriple> triples;
  std::size_t batch;
  std::size_t every;

  ArStage(const AppConfig& cfg, std::uint64_t seed, std::vector<ar::ArTriple> t)
      : model(cfg.ar, num::derive_seed(seed, kInitStream)),
        trainer(model, cfg.ar_train),
        triples(std::move(t)),
        batch(cfg.ar_schedule.batch),
        every(cfg.ar_schedule.checkpoint_every) {}

  std::string csv_header() const { return "step,loss,reg,kl,flux"; }

  std::string step(std::uint64_t seed, std::size_t step, double& loss) {
    std::vector<ar::ArTriple> b;
    for (std::size_t i : batch_indices(seed, step, batch, triples.size())) b.push_back(triples[i]);
    const auto l = trainer.train_step(b, num::derive_seed(num::derive_seed(seed, kNoiseStream), step));
    loss = l.total;
    return num17(l.total) + "," + num17(l.reg) + "," + num17(l.kl) + "," + num17(l.flux);
  }

  std::pair<nn::ParamStore, nn::Adam> snapshot() const {
    return {model.params(), trainer.optimizer()};
  }
  void restore(std::pair<nn::ParamStore, nn::Adam> s) {
    model.params() = std::move(s.first);
    trainer.optimizer() = std::move(s.second);
  }
  void store(io::Checkpoint& c) const {
    io::store_ar(c, model);
    io::store_adam(c, trainer.optimizer());
  }
  void load(const io::Checkpoint& c) {
    const auto loaded = io::load_ar(c);
    model.params() = loaded.params();
    io::load_adam(c, trainer.optimizer());
  }
};

}  // namespace

int cmd_train(const TrainOptions& options, std::ostream& out) {
  if (options.stage != "transducer" && options.stage != "ar") {
    throw ConfigError("stage must be 'transducer' or 'ar', got '" + options.stage + "'");
  }
  const AppConfig cfg = config_of(options.common);
  const pipeline::Corpus corpus = pipeline::read_corpus(options.corpus);
  check_corpus(corpus, cfg);
  if (cfg.holdout >= corpus.items.size()) throw ConfigError("holdout leaves no training items");
  const std::size_t pool = corpus.items.size() - cfg.holdout;

  if (options.stage == "transducer") {
    std::vector<transducer::TransducerPair> pairs;
    for (std::size_t i = 0; i < pool; ++i) {
      pairs.push_back(pipeline::prepare_training_pair(corpus.items[i]).transducer);
    }
    const std::uint64_t seed = options.common.seed.value_or(cfg.transducer_schedule.seed);
    TransducerStage stage(cfg, seed, std::move(pairs));
    return run_training(stage, options, seed, options.steps.value_or(cfg.transducer_schedule.steps), out);
  }
  std::vector<ar::ArTriple> triples;
  for (std::size_t i = 0; i < pool; ++i) {
    auto pair = pipeline::prepare_training_pair(corpus.items[i]);
    if (pair.ar) triples.push_back(std::move(*pair.ar));
  }
  if (triples.empty()) throw CorpusError("no corpus item has frames for AR training");
  const std::uint64_t seed = options.common.seed.value_or(cfg.ar_schedule.seed);
  ArStage stage(cfg, seed, std::move(triples));
  return run_training(stage, options, seed, options.steps.value_or(cfg.ar_schedule.steps), out);
}

int cmd_synth(const SynthOptions& options, std::ostream& out) {
  const AppConfig cfg = config_of(options.common);
  pipeline::RunConfig run = cfg.run;
  if (options.common.seed) run.seed = *options.common.seed;
  if (options.resample) run.resample = *options.resample;
  run.prompt_dbm = run.prompt_dbm || options.prompt_dbm;
  run.threaded = run.threaded || options.threaded;
  if (!options.transducer.empty()) run.transducer_checkpoint = options.transducer;
  if (!options.ar.empty()) run.ar_checkpoint = options.ar;
  if (run.transducer_checkpoint.empty() || run.ar_checkpoint.empty()) {
    throw ConfigError("synth needs both a transducer and an AR checkpoint");
  }
  if (options.out.empty()) throw ConfigError("synth needs --out");
  run.validate();

  const auto tm = io::load_transducer(io::read_checkpoint(fs::path(run.transducer_checkpoint)));
  const auto am = io::load_ar(io::read_checkpoint(fs::path(run.ar_checkpoint)));
  const pipeline::Models models{tm, am};
  models.validate();

  if (options.text.empty() == options.text_file.empty()) {
    throw ConfigError("give exactly one of --text or --text-file");
  }
  const std::string raw = options.text.empty() ? read_text(options.text_file) : options.text;
  TextSequence text;
  try {
    text = TextSequence(parse_token_list(raw), tm.config().text_vocab);
  } catch (const FormatError& e) {
    throw ConfigError(std::string("malformed text: ") + e.what());
  }

  std::optional<pipeline::Prompt> prompt;
  if (!options.prompt.empty()) {
    const auto item = pipeline::read_item(options.prompt, tm.config().text_vocab);
    pipeline::Prompt p;
    p.text = lattice::path_to_duration_text(item.path, item.text.tokens()).tokens;
    p.tokens = item.tokens.tokens;
    p.mel = item.mel;
    p.validate(am.config().mel_dim);
    prompt = std::move(p);
  }

  pipeline::ScoreFn scorer;
  if (run.scorer == pipeline::ScorerKind::kEditDistance) {
    if (options.reference.empty()) throw ConfigError("the edit scorer needs --reference");
    scorer = pipeline::edit_scorer(parse_token_list(options.reference));
  } else {
    scorer = pipeline::loglik_scorer();
  }

  const auto result = pipeline::resample_best(models, run, prompt ? &*prompt : nullptr, text, scorer);
  io::write_mel(fs::path(options.out), result.result.mel);
  const std::string report = pipeline::format_report(run, prompt ? &*prompt : nullptr, result);
  write_text(options.report.empty() ? options.out + ".report" : options.report, report);
  if (!options.events.empty()) {
    write_text(options.events, transducer::format_events(result.result.events));
  }
  out << report;
  return kExitOk;
}

int cmd_verify(const VerifyOptions& options, std::ostream& out) {
  const std::uint64_t seed = options.seed.value_or(1);
  const std::string& s = options.suite;
  if (s != "all" && s != "lattice" && s != "gradients" && s != "dbm" && s != "causality") {
    throw ConfigError("unknown suite '" + s + "' (lattice, gradients, dbm, causality, all)");
  }
  bool ok = true;
  auto report = [&](const SuiteResult& r) {
    print_suite(r, out);
    ok = ok && r.passed();
  };
  if (s == "all" || s == "lattice") report(verify_lattice({.count = 200, .max_moves = 12, .seed = seed}));
  if (s == "all" || s == "gradients") report(verify_gradients(seed));
  if (s == "all" || s == "dbm") report(verify_dbm(10000, seed));
  if (s == "all" || s == "causality") report(verify_causality({.runs = 100, .seed = seed}));
  out << (ok ? "verify: all checks passed\n" : "verify: FAILED\n");
  return ok ? kExitOk : kExitVerifyFailed;
}

int cmd_bench(const BenchOptions& options, std::ostream& out) {
  const AppConfig cfg = config_of(options.common);
  pipeline::RunConfig run = cfg.run;
  if (options.common.seed) run.seed = *options.common.seed;
  const std::string tpath = options.transducer.empty() ? run.transducer_checkpoint : options.transducer;
  const std::string apath = options.ar.empty() ? run.ar_checkpoint : options.ar;
  const auto tm = tpath.empty() ? transducer::TransducerModel(cfg.transducer, num::derive_seed(run.seed, 1))
                                : io::load_transducer(io::read_checkpoint(fs::path(tpath)));
  const auto am = apath.empty() ? ar::ArModel(cfg.ar, num::derive_seed(run.seed, 2))
                                : io::load_ar(io::read_checkpoint(fs::path(apath)));
  const pipeline::Models models{tm, am};
  models.validate();
  if (options.repeats == 0) throw ConfigError("repeats must be at least 1");

  std::ostringstream table;
  table << "length\ttext_waits\tmodel_steps\tmodel_calls\tframes";
  if (options.wall_clock) table << "\tfirst_frame_us\ttotal_us";
  table << "\n";
  num::Rng rng(num::derive_seed(run.seed, 3));
  const std::size_t vocab = tm.config().text_vocab;
  for (std::size_t len : options.lengths) {
    std::vector<TokenId> xs(len);
    for (auto& x : xs) x = static_cast<TokenId>(kFirstTextToken + rng.index(vocab - kFirstTextToken));
    const TextSequence text = TextSequence::from_interior(xs, vocab);
    double first_us = 0, total_us = 0;
    pipeline::SynthesisResult res;
    for (std::size_t r = 0; r < options.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      res = pipeline::synthesize_stream(models, run, nullptr, text);
      const auto t1 = std::chrono::steady_clock::now();
      total_us += std::chrono::duration<double, std::micro>(t1 - t0).count();
      if (!res.ledger.timeline.empty()) first_us += static_cast<double>(res.ledger.timeline.front().wall_ns) / 1e3;
    }
    const auto& l = res.ledger;
    table << len << "\t" << l.text_waits << "\t" << l.model_steps << "\t" << l.model_calls << "\t"
          << res.frames();
    if (options.wall_clock) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "\t%.1f\t%.1f", first_us / static_cast<double>(options.repeats),
                    total_us / static_cast<double>(options.repeats));
      table << buf;
    }
    table << "\n";
  }
  if (!options.out.empty()) write_text(options.out, table.str());
  out << table.str();
  return kExitOk;
}

}  // namespace streamtts::cli
