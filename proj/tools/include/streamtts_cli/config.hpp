#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "streamtts/ar/training.hpp"
#include "streamtts/pipeline/corpus.hpp"
#include "streamtts/pipeline/synthesis.hpp"
#include "streamtts/transducer/training.hpp"

namespace streamtts::cli {

struct TrainSchedule {
  std::size_t steps = 2000;
  std::size_t batch = 8;
  std::uint64_t seed = 1;
  /// Rewrite the output checkpoint every this many steps; 0 only at the end.
  std::size_t checkpoint_every = 0;
};

/// Every section of the plain-text config. Defaults are desk scale; the
/// comments in config.cpp list the reference values they stand in for.
struct AppConfig {
  pipeline::CorpusConfig corpus;
  std::size_t corpus_count = 500;
  std::uint64_t corpus_seed = 1;
  /// Trailing corpus items excluded from training.
  std::size_t holdout = 0;

  transducer::TransducerConfig transducer;
  transducer::TransducerTrainOptions transducer_train;
  TrainSchedule transducer_schedule;

  ar::ArConfig ar;
  ar::ArTrainOptions ar_train;
  TrainSchedule ar_schedule;

  pipeline::RunConfig run;
};

/// `[section]` headers, `key = value` lines, `#` comments. Unknown sections
/// or keys, malformed values and missing referenced files raise ConfigError.
/// Relative paths resolve against `base_dir`.
AppConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
AppConfig load_config(const std::filesystem::path& path);

/// Canonical text of a config; parse_config(format_config(c)) == c.
std::string format_config(const AppConfig& config);

}  // namespace streamtts::cli
