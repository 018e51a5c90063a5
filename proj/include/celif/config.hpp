#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "celif/network.hpp"
#include "celif/optimizer.hpp"
#include "celif/tasks.hpp"

namespace celif {

/// Everything a run needs. Text form is flat `key = value` lines; `#` starts a
/// comment. Keys match the field names below. Fields written as "auto"
/// (optional here) resolve per task: readout by task, lr 1e-3 for copy memory
/// and 5e-4 otherwise, beta 1 - 1/T for copy memory and 0.99 otherwise.
struct RunConfig {
  TaskKind task = TaskKind::Adding;
  std::size_t seq_len = 100;  // copy memory: the delay T (sequence is T + 20)
  std::vector<std::size_t> hidden{64, 256, 256};
  NeuronKind neuron = NeuronKind::CeLif;
  int variant = 6;
  Connectivity connectivity = Connectivity::Feedforward;
  TeSharing te_sharing = TeSharing::PerLayer;
  std::optional<Readout> readout;

  double alpha = 0.5;
  std::optional<double> beta;
  double gamma = 0.1;
  double theta0 = 0.3;
  double gamma_sg = 0.2;
  double te_mean = 0.01;
  double te_std = 0.01;

  std::optional<double> lr;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 0;  // 0 disables clipping

  std::size_t batch_size = 256;
  std::size_t iterations = 20000;  // synthetic tasks
  std::size_t epochs = 5;          // pixel tasks
  std::size_t eval_interval = 500;
  std::size_t eval_batch = 1000;
  std::size_t log_interval = 50;
  std::size_t checkpoint_interval = 0;  // 0: final checkpoint only

  // Early stop once the periodic evaluation meets every target that is set.
  std::optional<double> target_loss;
  std::optional<double> target_metric;

  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";
  std::string data_root;  // falls back to $CELIF_DATA_ROOT
  std::size_t image_side = 28;
  std::size_t train_limit = 0;  // 0: all images
  std::size_t test_limit = 0;
  std::uint64_t permutation_seed = kPermutationSeed;
  std::size_t probe_batch = 256;

  bool wall_clock = true;  // false writes wall_ms = 0 for byte-stable logs
  std::string resume;      // checkpoint to continue from
};

/// Throws ConfigError for unknown keys or malformed values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_text(const RunConfig& config);
/// Current value of one key in its text form.
std::string config_value(const RunConfig& config, const std::string& key);
std::vector<std::string> config_keys();

/// Checks every constraint before any work is done.
void validate(const RunConfig& config);

/// Sequence length fed to the model (copy memory adds 20, pixel tasks use
/// image_side squared).
std::size_t model_seq_len(const RunConfig& config);
ModelSpec model_spec(const RunConfig& config);
AdamConfig adam_config(const RunConfig& config);
std::filesystem::path data_root(const RunConfig& config);

}  // namespace celif
