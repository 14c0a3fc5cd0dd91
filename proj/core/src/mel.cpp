#include "streamtts/io/mel.hpp"

#include <fstream>

#include "streamtts/error.hpp"
#include "streamtts/io/binary.hpp"

namespace streamtts::io {

void write_mel(std::ostream& out, const num::Tensor& mel) {
  const std::size_t s = mel.empty() ? 0 : mel.rows();
  const std::size_t d = mel.rank() == 0 ? 0 : mel.cols();
  put_u64(out, s);
  put_u64(out, d);
  for (double v : mel.values()) put_f64(out, v);
}

void write_mel(const std::filesystem::path& path, const num::Tensor& mel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_mel(out, mel);
  if (!out) throw Error("write failed: " + path.string());
}

num::Tensor read_mel(std::istream& in) {
  const std::uint64_t s = get_u64(in);
  const std::uint64_t d = get_u64(in);
  if (d > (1u << 20) || (d > 0 && s > (1ull << 32) / d)) throw FormatError("implausible mel header");
  num::Tensor mel({s, d});
  for (auto& v : mel.values()) v = get_f64(in);
  return mel;
}

num::Tensor read_mel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_mel(in);
}

}  // namespace streamtts::io
