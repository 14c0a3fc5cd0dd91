#include <iostream>

#include "CLI11.hpp"
#include "streamtts/error.hpp"
#include "streamtts_cli/commands.hpp"

using namespace streamtts::cli;

namespace {

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "config file (sections [corpus] [transducer] [ar] [pipeline])")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "override the seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamtts: streaming two-stage text-to-mel synthesis"};
  app.require_subcommand(1);

  GenCorpusOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "write a synthetic corpus");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--count", gen.count, "number of items");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "train one stage on a corpus");
  add_common(train_cmd, train.common);
  train_cmd->add_option("stage", train.stage, "transducer or ar")->required();
  train_cmd->add_option("--corpus", train.corpus, "corpus directory")->required();
  train_cmd->add_option("--out", train.out, "checkpoint to write")->required();
  train_cmd->add_option("--resume", train.resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--loss-csv", train.loss_csv, "loss curve (default <out>.loss.csv)");
  train_cmd->add_option("--steps", train.steps, "total step count");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "stream text to mel frames");
  add_common(synth_cmd, synth.common);
  synth_cmd->add_option("--transducer", synth.transducer, "transducer checkpoint")->check(CLI::ExistingFile);
  synth_cmd->add_option("--ar", synth.ar, "AR checkpoint")->check(CLI::ExistingFile);
  synth_cmd->add_option("--text", synth.text, "framed token ids, e.g. \"<bos> 4 7 <eos>\"");
  synth_cmd->add_option("--text-file", synth.text_file, "file holding the token ids")->check(CLI::ExistingFile);
  synth_cmd->add_option("--prompt", synth.prompt, "corpus item stem used as prompt");
  synth_cmd->add_flag("--prompt-dbm", synth.prompt_dbm, "apply DBM to the prompt text");
  synth_cmd->add_option("--resample", synth.resample, "best-of-N candidates");
  synth_cmd->add_option("--reference", synth.reference, "reference semantic tokens (edit scorer)");
  synth_cmd->add_option("--out", synth.out, "mel output file")->required();
  synth_cmd->add_option("--report", synth.report, "run report (default <out>.report)");
  synth_cmd->add_option("--events", synth.events, "write the decode event stream here");
  synth_cmd->add_flag("--threaded", synth.threaded, "run the stages on two threads");

  VerifyOptions verify;
  auto* verify_cmd = app.add_subcommand("verify", "run the oracle suites");
  verify_cmd->add_option("suite", verify.suite, "lattice, gradients, dbm, causality or all");
  verify_cmd->add_option("--seed", verify.seed, "suite seed");

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "first-frame latency over text lengths");
  add_common(bench_cmd, bench.common);
  bench_cmd->add_option("--transducer", bench.transducer, "transducer checkpoint")->check(CLI::ExistingFile);
  bench_cmd->add_option("--ar", bench.ar, "AR checkpoint")->check(CLI::ExistingFile);
  bench_cmd->add_option("--lengths", bench.lengths, "interior text lengths")->delimiter(',');
  bench_cmd->add_option("--repeats", bench.repeats, "runs per length");
  bench_cmd->add_flag("--wall-clock", bench.wall_clock, "add timing columns (not reproducible)");
  bench_cmd->add_option("--out", bench.out, "also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_corpus(gen, std::cout);
    if (train_cmd->parsed()) return cmd_train(train, std::cout);
    if (synth_cmd->parsed()) return cmd_synth(synth, std::cout);
    if (verify_cmd->parsed()) return cmd_verify(verify, std::cout);
    if (bench_cmd->parsed()) return cmd_bench(bench, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "streamtts: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
