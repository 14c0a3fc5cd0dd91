#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "streamtts/error.hpp"
#include "streamtts/io/binary.hpp"
#include "streamtts/io/checkpoint.hpp"
#include "streamtts/io/mel.hpp"
#include "streamtts_cli/config.hpp"

using namespace streamtts;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "streamtts_io_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Binary, LittleEndianLayout) {
  std::ostringstream out;
  io::put_u32(out, 0x01020304u);
  EXPECT_EQ(out.str(), std::string("\x04\x03\x02\x01", 4));
  std::istringstream in(out.str().substr(0, 3));
  EXPECT_THROW(io::get_u32(in), FormatError);
}

TEST(Mel, RoundTripsBitExactly) {
  num::Tensor m({3, 4});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 1.0 / (1.0 + static_cast<double>(i)) - 0.3;
  const fs::path p = scratch("a.mel");
  io::write_mel(p, m);
  EXPECT_EQ(io::read_mel(p), m);
  EXPECT_EQ(fs::file_size(p), 16u + 12u * 8u);
  const num::Tensor empty({0, 4});
  io::write_mel(p, empty);
  EXPECT_EQ(io::read_mel(p).rows(), 0u);
}

TEST(Checkpoint, RoundTripsModelsAndConfig) {
  transducer::TransducerConfig tc;
  tc.embed = 4;
  tc.enc_hidden = 6;
  tc.pred_hidden = 6;
  tc.joint_hidden = 6;
  const transducer::TransducerModel tr(tc, 3);
  ar::ArConfig ac;
  ac.mel_dim = 5;
  ac.latent_dim = 5;
  ac.d_model = 8;
  ac.ffn = 8;
  ac.prenet_hidden = 8;
  ac.mlp_hidden = 8;
  const ar::ArModel arm(ac, 4);
  io::Checkpoint c;
  c.config["note"] = "x y";
  io::store_transducer(c, tr);
  io::store_ar(c, arm);
  const fs::path p = scratch("m.ckpt");
  io::write_checkpoint(p, c);
  const io::Checkpoint back = io::read_checkpoint(p);
  EXPECT_EQ(back.config.at("note"), "x y");
  const auto tr2 = io::load_transducer(back);
  const auto ar2 = io::load_ar(back);
  EXPECT_EQ(tr2.config().joint_hidden, 6u);
  for (const auto& [name, t] : tr.params().all()) EXPECT_EQ(tr2.params().at(name), t) << name;
  for (const auto& [name, t] : arm.params().all()) EXPECT_EQ(ar2.params().at(name), t) << name;
  EXPECT_FALSE(fs::exists(p.string() + ".tmp"));
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  std::istringstream bad("NOPE0000");
  EXPECT_THROW(io::read_checkpoint(bad), FormatError);
  io::Checkpoint c;
  c.tensors["w"] = num::Tensor({2, 2}, 1.0);
  std::ostringstream out;
  io::write_checkpoint(out, c);
  std::istringstream cut(out.str().substr(0, out.str().size() - 5));
  EXPECT_THROW(io::read_checkpoint(cut), FormatError);
}

TEST(Checkpoint, MissingTensorIsReported) {
  io::Checkpoint c;
  io::store_transducer(c, transducer::TransducerModel(transducer::TransducerConfig{}, 1));
  c.tensors.erase(c.tensors.begin());
  EXPECT_THROW(io::load_transducer(c), Error);
}

TEST(Config, ParsesSectionsAndDefaults) {
  const auto c = cli::parse_config(
      "# comment\n[corpus]\ncount = 12\n[pipeline]\ntop_k = 3\nscorer = edit\nprompt_dbm = true\n");
  EXPECT_EQ(c.corpus_count, 12u);
  EXPECT_EQ(c.run.top_k, 3u);
  EXPECT_EQ(c.run.scorer, pipeline::ScorerKind::kEditDistance);
  EXPECT_TRUE(c.run.prompt_dbm);
  EXPECT_EQ(c.run.emission_cap, 10u);
}

TEST(Config, RejectsUnknownKeysSectionsAndBadValues) {
  EXPECT_THROW(cli::parse_config("[corpus]\ncolour = 3\n"), ConfigError);
  EXPECT_THROW(cli::parse_config("[nope]\n"), ConfigError);
  EXPECT_THROW(cli::parse_config("[corpus]\ncount = many\n"), ConfigError);
  EXPECT_THROW(cli::parse_config("[pipeline]\nscorer = vibes\n"), ConfigError);
  EXPECT_THROW(cli::parse_config("[ar]\nsem_vocab = 9\n"), ConfigError);
}

TEST(Config, MissingCheckpointPathIsAnError) {
  EXPECT_THROW(cli::parse_config("[pipeline]\ntransducer_checkpoint = /no/such/file.ckpt\n"),
               ConfigError);
}

TEST(Config, FormatRoundTrips) {
  const auto c = cli::parse_config("[ar]\nlambda = 0.125\nsteps = 7\n[pipeline]\nthreaded = 1\n");
  const std::string text = cli::format_config(c);
  EXPECT_EQ(cli::format_config(cli::parse_config(text)), text);
  EXPECT_NE(text.find("lambda = 0.125"), std::string::npos);
}
