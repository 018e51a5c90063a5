#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace celif {

enum class ModelFamily { Lstm, LifSrnn, AlifSrnn, CelifFfsnn };

std::string to_string(ModelFamily family);
ModelFamily model_family_from_string(const std::string& name);

/// One hidden layer: m presynaptic and n postsynaptic neurons, with the mean
/// per-step firing rates of its input and output.
struct EnergyLayer {
  std::size_t m = 0;
  std::size_t n = 0;
  double fr_in = 0;
  double fr_out = 0;
};

/// Linear classifier after the last hidden layer. Spiking families pay one AC
/// per active synapse (m n fr_in); the LSTM pays m n MACs.
struct EnergyReadout {
  std::size_t m = 0;
  std::size_t n = 0;
  double fr_in = 0;
};

struct EnergySpec {
  ModelFamily family = ModelFamily::CelifFfsnn;
  std::vector<EnergyLayer> layers;
  std::optional<EnergyReadout> readout;
  std::size_t timesteps = 1;
  double e_ac_pj = 0.9;
  double e_mac_pj = 4.6;

  void validate() const;
};

struct EnergyReport {
  std::vector<double> layer_pj;  // per timestep
  double readout_pj = 0;         // per timestep
  double per_step_pj = 0;
  double total_nj = 0;  // per_step_pj * timesteps / 1000
};

/// Per-timestep operation costs per layer:
///   LSTM   4(mn + nn) E_MAC + 17n E_MAC
///   LIF    mn Fr_in E_AC + (nn + n) Fr_out E_AC + n E_MAC
///   ALIF   mn Fr_in E_AC + (nn + 2n) Fr_out E_AC + 4n E_MAC
///   CE-LIF (mn Fr_in + n Fr_out) E_AC + 3n E_MAC
/// summed over layers (plus readout) and multiplied by the timestep count.
EnergyReport estimate_energy(const EnergySpec& spec);

/// The four ~155k-parameter sequential-MNIST models with their recorded
/// per-layer firing rates and published energy figures (nJ). The first layer
/// reads analog pixels, so its input rate is 1.
struct ReferenceModel {
  EnergySpec spec;
  double reported_nj = 0;
};
std::vector<ReferenceModel> reference_models(std::size_t timesteps = 784, double e_ac_pj = 0.9, double e_mac_pj = 4.6);

}  // namespace celif
