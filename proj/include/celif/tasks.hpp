#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "celif/rng.hpp"
#include "celif/tensor.hpp"

namespace celif {

enum class LossKind {
  Mse,                  // regression on [batch x out] outputs
  CrossEntropyMean,     // classification on time-averaged logits
  CrossEntropyPerStep,  // one classification per timestep
};

std::string to_string(LossKind kind);

/// inputs is [T x batch x features]. targets depend on the loss:
/// Mse -> [batch x out]; CrossEntropyMean -> [batch] class ids;
/// CrossEntropyPerStep -> [T x batch] class ids.
struct TaskBatch {
  Tensor inputs;
  Tensor targets;
  LossKind loss = LossKind::Mse;
  std::size_t seq_len = 0;
  // Per-step tasks: accuracy is scored on this many trailing steps (0 = all).
  std::size_t scored_steps = 0;

  std::size_t batch() const { return inputs.dim(1); }
};

enum class TaskKind { Adding, CopyMemory, SeqMnist, PsMnist };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

/// Adding problem: feature 0 is a uniform(0,1) value, feature 1 an indicator
/// with exactly two ones at distinct positions; target is the raw sum of the
/// two marked values.
TaskBatch gen_adding(std::size_t seq_len, std::size_t batch, Rng& rng);

inline constexpr std::size_t kCopyKeyLength = 10;
inline constexpr std::size_t kCopySymbols = 10;
inline constexpr int kCopyMarker = 9;

/// Copy memory: total length T + 20. Steps 1..10 carry key digits in 1..8,
/// steps 11..T+10 carry 0, the final 10 steps carry the marker 9. Inputs are
/// one-hot over 10 symbols; targets are 0 until step T+10, then the key.
TaskBatch gen_copy_memory(std::size_t delay, std::size_t batch, Rng& rng);

/// Loss of the trivial predictor: 0.167 for adding (both marked values
/// guessed at 0.5), 10 ln(8) / (T + 20) for copy memory.
double baseline_loss(TaskKind task, std::size_t seq_len);

/// Grayscale images flattened row-major, pixels scaled to [0,1].
struct PixelDataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Tensor images;  // [count x rows*cols]
  std::vector<int> labels;
  // Pixel order applied to every image: position i reads original pixel
  // permutation[i]. Empty means raster order.
  std::vector<std::size_t> permutation;

  std::size_t count() const { return labels.size(); }
  std::size_t pixels() const { return rows * cols; }
};

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an unsigned-byte IDX file (big-endian header). `expected_magic`
/// pins the rank; errors name the byte offset where parsing failed.
IdxArray read_idx(const std::filesystem::path& path, std::uint32_t expected_magic);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

/// Loads an image/label IDX pair, enforcing matching counts.
PixelDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Fixed seed for the permuted-pixel task.
inline constexpr std::uint64_t kPermutationSeed = 0x5EED0784ULL;

/// Fisher-Yates permutation of [0, n); nullopt yields the identity.
std::vector<std::size_t> make_permutation(std::size_t n, std::optional<std::uint64_t> seed);
std::vector<std::size_t> invert_permutation(std::span<const std::size_t> perm);
PixelDataset apply_permutation(const PixelDataset& dataset, std::span<const std::size_t> perm);
PixelDataset apply_permutation(const PixelDataset& dataset, std::optional<std::uint64_t> seed);

/// Area-weighted resampling to side x side pixels.
PixelDataset downsample(const PixelDataset& dataset, std::size_t side);

PixelDataset subset(const PixelDataset& dataset, std::size_t first, std::size_t count);

/// One pixel per timestep: inputs [pixels x batch x 1], class-id targets.
TaskBatch make_pixel_batch(const PixelDataset& dataset, std::span<const std::size_t> indices);

}  // namespace celif
