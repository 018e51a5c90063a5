#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "celif/checkpoint.hpp"
#include "celif/config.hpp"
#include "celif/network.hpp"

namespace celif {

struct PixelData {
  PixelDataset train;
  PixelDataset test;
};

inline constexpr const char* kMnistTrainImages = "train-images-idx3-ubyte";
inline constexpr const char* kMnistTrainLabels = "train-labels-idx1-ubyte";
inline constexpr const char* kMnistTestImages = "t10k-images-idx3-ubyte";
inline constexpr const char* kMnistTestLabels = "t10k-labels-idx1-ubyte";

/// True when all four IDX files are present under `root`.
bool mnist_available(const std::filesystem::path& root);

/// Loads the four IDX files, applies train_limit/test_limit, resamples to
/// image_side and, for the permuted task, applies the fixed permutation.
PixelData load_pixel_data(const RunConfig& config);

struct TrainResult {
  std::uint64_t iterations = 0;  // total optimizer steps, including resumed ones
  double last_loss = 0;          // most recent training batch
  double last_metric = 0;
  std::optional<Evaluation> last_eval;
  bool early_stopped = false;
  std::filesystem::path checkpoint;
};

/// Runs a full training job in config.out_dir:
///   config.txt   resolved configuration
///   metrics.csv  iteration,wall_ms,loss,accuracy_or_mse (training batches)
///   eval.csv     same columns, held-out evaluations
///   model.ckpt   latest checkpoint
///   summary.txt  final numbers as key = value
/// Progress lines go to `log` when non-null. Non-finite losses or gradients
/// write diverged.ckpt and throw TrainingError.
TrainResult train(const RunConfig& config, std::ostream* log = nullptr);

/// Loss and metric of a checkpoint on the held-out data its config describes
/// (the fixed evaluation batch for synthetic tasks, the test set otherwise).
Evaluation evaluate_model(const Model& model, const RunConfig& config);
Evaluation evaluate_checkpoint(const std::filesystem::path& checkpoint);

/// Batch used for a given training iteration of a synthetic task.
TaskBatch synthetic_batch(const RunConfig& config, const Rng& root, std::string_view purpose, std::uint64_t index,
                          std::size_t batch);

struct GradProbeRecord {
  std::size_t layer = 0;
  Tensor grad;                    // [T x n], |dL/dS| summed over the batch, normalised
  std::vector<double> step_sums;  // row sums of grad
  double raw_total = 0;           // absolute sum before normalisation
};

/// One backward pass on probe_batch samples drawn with rng.derive("probe").
/// All entries are zero when the gradient vanishes entirely.
GradProbeRecord probe_gradients(const Model& model, const RunConfig& config, std::size_t layer);
GradProbeRecord probe_gradients(const std::filesystem::path& checkpoint, std::size_t layer);

/// Cosine similarity between timestep rows; a pair involving a zero row is 0.
Tensor cosine_similarity_rows(const Tensor& te);
/// Similarity of the encoding used by `layer` (the shared one if shared).
Tensor te_similarity(const Model& model, std::size_t layer);
Tensor te_similarity(const std::filesystem::path& checkpoint, std::size_t layer);
/// Mean of sim[i][i+lag] over valid i, for lag = 0..max_lag.
std::vector<double> similarity_by_lag(const Tensor& sim, std::size_t max_lag);

/// Writes a rank-2 tensor as CSV with a header row c0,c1,...
void write_matrix_csv(const std::filesystem::path& path, const Tensor& matrix);
void write_probe_csv(const std::filesystem::path& dir, const GradProbeRecord& record);

}  // namespace celif

namespace celif {

/// Class-dependent noisy prototypes at side x side, for exercising the pixel
/// pipeline without MNIST. Not a benchmark.
PixelData synthetic_pixel_data(std::size_t train_count, std::size_t test_count, std::size_t side, const Rng& rng);
/// Writes the four MNIST-named IDX files into `dir`.
void write_pixel_idx(const std::filesystem::path& dir, const PixelData& data);
/// Writes one synthetic batch as inputs.csv (t,sample,features...) and
/// targets.csv.
void write_batch_csv(const std::filesystem::path& dir, const TaskBatch& batch);

}  // namespace celif
