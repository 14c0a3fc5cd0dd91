// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "streamtts/io/checkpoint.hpp"
#include "streamtts/pipeline/corpus.hpp"
#include "streamtts/pipeline/synthesis.hpp"
#include "streamtts_cli/verify.hpp"

using namespace streamtts;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Line {
  int id;
  std::string name;
  bool ok;
  std::string detail;
};

bool g_all_ok = true;

void report(const Line& l) {
  g_all_ok = g_all_ok && l.ok;
  std::cout << (l.ok ? "PASS" : "FAIL") << "  " << l.id << "  " << l.name << "  " << l.detail << std::endl;
}

std::string summarize_failures(const cli::SuiteResult& r) {
  std::string out;
  for (const auto& c : r.checks) {
    if (!c.passed) out += " [" + c.name + ": " + c.detail + "]";
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Runner {
 public:
  Runner(std::string cli, fs::path work) : cli_(std::move(cli)), work_(std::move(work)) {}

  /// Runs the CLI inside `dir` with stdout captured to `log`; returns the exit code.
  int run(const fs::path& dir, const std::string& args, const std::string& log) const {
    const std::string cmd = "cd '" + dir.string() + "' && '" + cli_ + "' " + args + " > '" + log + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  const fs::path& work() const { return work_; }

 private:
  std::string cli_;
  fs::path work_;
};

struct CsvCurve {
  std::vector<std::vector<double>> rows;
  double first(std::size_t col) const { return rows.front()[col]; }
  double tail_mean(std::size_t col, std::size_t n) const {
    n = std::min(n, rows.size());
    double s = 0;
    for (std::size_t i = rows.size() - n; i < rows.size(); ++i) s += rows[i][col];
    return s / static_cast<double>(n);
  }
};

CsvCurve read_csv(const fs::path& p) {
  CsvCurve c;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) row.push_back(std::stod(cell));
    c.rows.push_back(std::move(row));
  }
  return c;
}

constexpr const char* kConfig = R"(# acceptance configuration: defaults with a held-out tail
[corpus]
count = 500
seed = 1
holdout = 50
)";

constexpr std::size_t kItems = 500;
constexpr std::size_t kHoldout = 50;

struct Trained {
  bool ok = false;
  std::string error;
  std::optional<transducer::TransducerModel> tr;
  std::optional<ar::ArModel> ar;
  pipeline::Corpus corpus;
  double seconds = 0;
  CsvCurve tr_curve, ar_curve;
};

Trained train_models(const Runner& r) {
  Trained t;
  const auto t0 = Clock::now();
  const fs::path dir = r.work() / "e2e";
  fs::create_directories(dir);
  std::ofstream(dir / "acceptance.ini") << kConfig;
  if (r.run(dir, "gen-corpus --config acceptance.ini --out corpus", "gen.log") != 0) {
    t.error = "gen-corpus failed: " + slurp(dir / "gen.log");
    return t;
  }
  if (r.run(dir, "train transducer --config acceptance.ini --corpus corpus --out transducer.ckpt",
            "train_tr.log") != 0) {
    t.error = "transducer training failed: " + slurp(dir / "train_tr.log");
    return t;
  }
  if (r.run(dir, "train ar --config acceptance.ini --corpus corpus --out ar.ckpt", "train_ar.log") != 0) {
    t.error = "AR training failed: " + slurp(dir / "train_ar.log");
    return t;
  }
  t.seconds = seconds_since(t0);
  t.tr = io::load_transducer(io::read_checkpoint(dir / "transducer.ckpt"));
  t.ar = io::load_ar(io::read_checkpoint(dir / "ar.ckpt"));
  t.corpus = pipeline::read_corpus(dir / "corpus");
  t.tr_curve = read_csv(dir / "transducer.ckpt.loss.csv");
  t.ar_curve = read_csv(dir / "ar.ckpt.loss.csv");
  t.ok = t.corpus.items.size() == kItems && !t.tr_curve.rows.empty() && !t.ar_curve.rows.empty();
  if (!t.ok) t.error = "training outputs incomplete";
  return t;
}

Line criterion_lattice() {
  const auto t0 = Clock::now();
  const auto r = cli::verify_lattice({.count = 600, .max_moves = 14, .seed = 101});
  const double s = seconds_since(t0);
  const bool ok = r.passed() && s < 30.0;
  std::string detail = "600 lattices, H+S<=14; " + fmt("%.2f s", s);
  for (const auto& c : r.checks) detail += "; " + c.name + " " + c.detail;
  return {1, "lattice-oracle", ok, detail + summarize_failures(r)};
}

Line criterion_gradients() {
  const auto t0 = Clock::now();
  const auto r = cli::verify_gradients(102);
  const double s = seconds_since(t0);
  return {2, "gradients", r.passed() && s < 60.0,
          std::to_string(r.checks.size()) + " finite-difference checks; " + fmt("%.2f s", s) +
              summarize_failures(r)};
}

Line criterion_dbm() {
  const auto r = cli::verify_dbm(10000, 103);
  return {3, "dbm-properties", r.passed(),
          std::to_string(r.checks.size()) + " properties on 10000 sequences" + summarize_failures(r)};
}

Line criterion_causality(const Trained& t) {
  if (!t.ok) return {4, "streaming-causality", false, "no trained models: " + t.error};
  const pipeline::Models models{*t.tr, *t.ar};
  const auto trained = cli::verify_causality({.runs = 100, .seed = 104, .models = &models});
  const auto toy = cli::verify_causality({.runs = 20, .seed = 105});
  std::string detail = "100 runs on trained models, 20 on toy models";
  for (const auto& c : trained.checks) detail += "; " + c.name + " " + c.detail;
  return {4, "streaming-causality", trained.passed() && toy.passed(),
          detail + summarize_failures(trained) + summarize_failures(toy)};
}

Line criterion_ftl(const Trained& t) {
  if (!t.ok) return {5, "ftl-contract", false, "no trained models: " + t.error};
  const pipeline::Models models{*t.tr, *t.ar};
  std::map<std::size_t, std::size_t> waits, steps;
  std::size_t runs = 0, missing = 0;
  std::set<std::size_t> calls;
  for (std::size_t len : {5, 10, 20, 50, 100, 200}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      num::Rng rng(num::derive_seed(len, seed));
      std::vector<TokenId> xs(len);
      for (auto& x : xs) x = static_cast<TokenId>(kFirstTextToken + rng.index(14));
      pipeline::RunConfig cfg;
      cfg.seed = seed;
      const auto res = pipeline::synthesize_stream(models, cfg, nullptr, TextSequence::from_interior(xs, 16));
      ++runs;
      if (!res.ledger.first_frame) {
        ++missing;
        continue;
      }
      ++waits[res.ledger.text_waits];
      ++steps[res.ledger.model_steps];
      calls.insert(res.ledger.model_calls);
    }
  }
  auto hist = [](const std::map<std::size_t, std::size_t>& m) {
    std::string s;
    for (const auto& [k, v] : m) s += (s.empty() ? "" : ",") + std::to_string(k) + "x" + std::to_string(v);
    return s;
  };
  const bool ok = missing == 0 && waits.size() == 1 && waits.begin()->first == 1 && steps.size() == 1;
  return {5, "ftl-contract", ok,
          std::to_string(runs) + " runs over lengths 5..200; text_waits " + hist(waits) + "; model_steps " +
              hist(steps) + "; without a frame " + std::to_string(missing)};
}

Line criterion_learnability(const Trained& t) {
  if (!t.ok) return {6, "learnability", false, t.error};
  const double lt0 = t.tr_curve.first(1), lt1 = t.tr_curve.tail_mean(1, 100);
  const double la0 = t.ar_curve.first(1), la1 = t.ar_curve.tail_mean(1, 100);
  const double reg0 = t.ar_curve.first(2), reg1 = t.ar_curve.tail_mean(2, 100);
  std::size_t dist = 0, ref = 0;
  for (std::size_t i = kItems - kHoldout; i < kItems; ++i) {
    const auto& item = t.corpus.items[i];
    const auto events = transducer::decode_stream(*t.tr, item.text, {.top_k = 1, .emission_cap = 10, .seed = i});
    dist += pipeline::edit_distance(transducer::emitted_tokens(events), item.tokens.tokens);
    ref += item.tokens.size();
  }
  const double err = static_cast<double>(dist) / static_cast<double>(ref);
  const bool ok = lt1 <= 0.5 * lt0 && la1 <= 0.5 * la0 && err < 0.2 && t.seconds < 600.0;
  return {6, "learnability", ok,
          "L_T " + fmt("%.3f", lt0) + " -> " + fmt("%.3f", lt1) + "; L_AR " + fmt("%.3f", la0) + " -> " +
              fmt("%.3f", la1) + " (L_reg " + fmt("%.3f", reg0) + " -> " + fmt("%.3f", reg1) +
              "); held-out greedy edit " + fmt("%.4f", err) + "; corpus+training " + fmt("%.0f s", t.seconds)};
}

Line criterion_resampling(const Trained& t) {
  if (!t.ok) return {7, "resampling-monotone", false, "no trained models: " + t.error};
  const pipeline::Models models{*t.tr, *t.ar};
  std::vector<double> mean(6, 0.0);
  for (std::size_t trial = 0; trial < 50; ++trial) {
    const auto& item = t.corpus.items[kItems - kHoldout + trial];
    for (std::size_t n = 1; n <= 5; ++n) {
      pipeline::RunConfig cfg;
      cfg.seed = 1000 + trial;
      cfg.resample = n;
      const auto r = pipeline::resample_best(models, cfg, nullptr, item.text,
                                             pipeline::edit_scorer(item.tokens.tokens));
      mean[n] += *r.candidates[r.best].score / 50.0;
    }
  }
  bool ok = true;
  std::string detail = "mean best-of-N edit score over 50 trials:";
  for (std::size_t n = 1; n <= 5; ++n) {
    detail += " N=" + std::to_string(n) + " " + fmt("%.4f", mean[n]);
    if (n > 1 && mean[n] > mean[n - 1]) ok = false;
  }
  return {7, "resampling-monotone", ok, detail};
}

Line criterion_determinism(const Runner& r, const Trained& t) {
  if (!t.ok) return {8, "determinism", false, "no trained models: " + t.error};
  const fs::path e2e = r.work() / "e2e";
  const std::string prompt = (e2e / "corpus" / "item_00450").string();
  const std::string tr = (e2e / "transducer.ckpt").string(), ar = (e2e / "ar.ckpt").string();
  const std::string corpus = (e2e / "corpus").string();
  const std::string cfg = (e2e / "acceptance.ini").string();
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "gen-corpus --config " + cfg + " --seed 9 --count 20 --out corpus"},
      {"train_tr", "train transducer --config " + cfg + " --corpus " + corpus + " --steps 5 --out tr.ckpt"},
      {"train_ar", "train ar --config " + cfg + " --corpus " + corpus + " --steps 5 --out ar.ckpt"},
      {"synth", "synth --config " + cfg + " --transducer " + tr + " --ar " + ar +
                    " --text '<bos> 4 9 2 <eos>' --prompt " + prompt +
                    " --resample 3 --seed 4 --out out.mel --events events.txt"},
      {"synth_threaded", "synth --config " + cfg + " --transducer " + tr + " --ar " + ar +
                             " --text '<bos> 4 9 2 <eos>' --threaded --seed 4 --out threaded.mel"},
      {"verify", "verify dbm --seed 3"},
      {"bench", "bench --config " + cfg + " --transducer " + tr + " --ar " + ar +
                    " --lengths 5,20 --repeats 2 --out bench.tsv"},
  };
  std::vector<fs::path> dirs = {r.work() / "det_a", r.work() / "det_b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    fs::create_directories(d);
    for (const auto& [name, args] : commands) {
      const int code = r.run(d, args, name + ".stdout");
      if (code != 0) return {8, "determinism", false, name + " exited " + std::to_string(code)};
    }
  }
  std::size_t files = 0;
  std::string diffs;
  for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dirs[0]);
    ++files;
    if (!fs::exists(dirs[1] / rel) || slurp(e.path()) != slurp(dirs[1] / rel)) diffs += " " + rel.string();
  }
  return {8, "determinism", diffs.empty(),
          std::to_string(commands.size()) + " commands run twice, " + std::to_string(files) +
              " output files compared" + (diffs.empty() ? "" : "; differ:" + diffs)};
}

Line criterion_prompt_dbm(const Runner& r, const Trained& t) {
  if (!t.ok) return {9, "prompt-dbm-ablation", false, "no trained models: " + t.error};
  const fs::path e2e = r.work() / "e2e";
  const fs::path dir = r.work() / "prompt_dbm";
  fs::create_directories(dir);
  const std::string base = "synth --config " + (e2e / "acceptance.ini").string() + " --transducer " +
                           (e2e / "transducer.ckpt").string() + " --ar " + (e2e / "ar.ckpt").string() +
                           " --text '<bos> 5 3 8 12 <eos>' --prompt " +
                           (e2e / "corpus" / "item_00451").string() + " --seed 2";
  const int a = r.run(dir, base + " --out plain.mel", "plain.stdout");
  const int b = r.run(dir, base + " --prompt-dbm --out dbm.mel", "dbm.stdout");
  if (a != 0 || b != 0) {
    return {9, "prompt-dbm-ablation", false,
            "exit codes " + std::to_string(a) + " / " + std::to_string(b) + ": " + slurp(dir / "dbm.stdout")};
  }
  const std::string ra = slurp(dir / "plain.mel.report"), rb = slurp(dir / "dbm.mel.report");
  const bool marked = ra.find("prompt_dbm=0") != std::string::npos && rb.find("prompt_dbm=1") != std::string::npos;
  const bool frames = fs::file_size(dir / "plain.mel") > 16 && fs::file_size(dir / "dbm.mel") > 16;
  const bool mel_differs = slurp(dir / "plain.mel") != slurp(dir / "dbm.mel");
  return {9, "prompt-dbm-ablation", marked && frames,
          std::string("both modes completed; report marks ") + (marked ? "prompt_dbm=0/1" : "nothing") +
              "; mel outputs " + (mel_differs ? "differ" : "identical")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamtts acceptance run"};
  std::string cli_path, work;
  app.add_option("--cli", cli_path, "streamtts executable")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work, "scratch directory")->required();
  CLI11_PARSE(app, argc, argv);

  const fs::path work_dir = fs::absolute(work);
  fs::remove_all(work_dir);
  fs::create_directories(work_dir);
  const Runner runner(fs::absolute(cli_path).string(), work_dir);

  report(criterion_lattice());
  report(criterion_gradients());
  report(criterion_dbm());
  const Trained trained = train_models(runner);
  report(criterion_causality(trained));
  report(criterion_ftl(trained));
  report(criterion_learnability(trained));
  report(criterion_resampling(trained));
  report(criterion_determinism(runner, trained));
  report(criterion_prompt_dbm(runner, trained));
  std::cout << (g_all_ok ? "acceptance: all criteria passed" : "acceptance: FAILED") << std::endl;
  return g_all_ok ? 0 : 1;
}
