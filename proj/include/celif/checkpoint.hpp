#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "celif/config.hpp"
#include "celif/network.hpp"
#include "celif/optimizer.hpp"

namespace celif {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (little-endian):
///   "CELIFCK\0"  u32 version  u64 len + config text
///   u64 iteration  u64 adam step  u32 tensor count
///   per tensor: u32 len + name, u32 rank, u64 dims[rank], f64 data[]
///   u64 FNV-1a of every preceding byte
/// Adam moments are stored as tensors named "adam.m.<param>" / "adam.v.<param>".
struct Checkpoint {
  std::string config_text;
  std::uint64_t iteration = 0;
  std::uint64_t adam_step = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

/// Writes to a temporary file in the same directory, then renames it over
/// `path`, so a crash never leaves a half-written checkpoint behind.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws CheckpointError on bad magic, unknown version, truncation,
/// checksum mismatch or trailing bytes.
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const RunConfig& config, Model& model, const AdamState* adam, std::uint64_t iteration);

/// Rebuilds the model described by the stored config and copies every
/// parameter in, checking names and shapes.
Model restore_model(const Checkpoint& checkpoint);
/// Restores Adam moments for `model`; leaves `state` fresh when none were saved.
void restore_adam(const Checkpoint& checkpoint, Model& model, AdamState& state);

}  // namespace celif

namespace celif {

/// Human-readable listing: header fields, the stored config, then one line
/// per tensor with its shape, sum, min, max and a content hash. Two
/// checkpoints with equal listings hold identical bytes.
std::string describe_checkpoint(const Checkpoint& checkpoint);

}  // namespace celif
