#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "streamtts/ar/model.hpp"
#include "streamtts/nn/adam.hpp"
#include "streamtts/transducer/model.hpp"

namespace streamtts::io {

inline constexpr char kCheckpointMagic[4] = {'T', 'S', 'T', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned container: magic, version, key=value config block, then named
/// tensors (name, rank, dims, little-endian f64 data).
struct Checkpoint {
  std::map<std::string, std::string> config;
  std::map<std::string, num::Tensor> tensors;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void store_transducer(Checkpoint& ckpt, const transducer::TransducerModel& model);
transducer::TransducerModel load_transducer(const Checkpoint& ckpt);
void store_ar(Checkpoint& ckpt, const ar::ArModel& model);
ar::ArModel load_ar(const Checkpoint& ckpt);

/// Optimizer moments under "adam.m.*" / "adam.v.*" and the step count.
void store_adam(Checkpoint& ckpt, const nn::Adam& adam);
void load_adam(const Checkpoint& ckpt, nn::Adam& adam);

}  // namespace streamtts::io
