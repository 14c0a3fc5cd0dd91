#pragma once

#include <filesystem>
#include <iosfwd>

#include "streamtts/numerics/tensor.hpp"

namespace streamtts::io {

/// u64 frame count, u64 bins, then little-endian f64 row-major.
void write_mel(std::ostream& out, const num::Tensor& mel);
void write_mel(const std::filesystem::path& path, const num::Tensor& mel);
num::Tensor read_mel(std::istream& in);
num::Tensor read_mel(const std::filesystem::path& path);

}  // namespace streamtts::io
