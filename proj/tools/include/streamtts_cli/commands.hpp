#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace streamtts::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitVerifyFailed = 2,
  kExitDiverged = 3,
};

struct CommonOptions {
  std::string config;  ///< empty: built-in defaults
  std::optional<std::uint64_t> seed;
};

struct GenCorpusOptions {
  CommonOptions common;
  std::optional<std::size_t> count;
  std::string out;
};

struct TrainOptions {
  CommonOptions common;
  std::string stage;  ///< "transducer" or "ar"
  std::string corpus;
  std::string out;
  std::string resume;
  std::string loss_csv;  ///< default: <out>.loss.csv
  std::optional<std::size_t> steps;
};

struct SynthOptions {
  CommonOptions common;
  std::string transducer;
  std::string ar;
  std::string text;       ///< token list, "<bos> 4 5 <eos>"
  std::string text_file;
  std::string prompt;     ///< corpus item stem, e.g. corpus/item_00003
  bool prompt_dbm = false;
  std::optional<std::size_t> resample;
  std::string reference;  ///< semantic tokens for the edit-distance scorer
  std::string out;        ///< mel file
  std::string report;     ///< default: <out>.report
  std::string events;
  bool threaded = false;
};

struct VerifyOptions {
  std::string suite = "all";
  std::optional<std::uint64_t> seed;
};

struct BenchOptions {
  CommonOptions common;
  std::string transducer;
  std::string ar;
  std::vector<std::size_t> lengths{5, 10, 20, 50, 100, 200};
  std::size_t repeats = 3;
  bool wall_clock = false;
  std::string out;
};

int cmd_gen_corpus(const GenCorpusOptions& options, std::ostream& out);
int cmd_train(const TrainOptions& options, std::ostream& out);
int cmd_synth(const SynthOptions& options, std::ostream& out);
int cmd_verify(const VerifyOptions& options, std::ostream& out);
int cmd_bench(const BenchOptions& options, std::ostream& out);

}  // namespace streamtts::cli
