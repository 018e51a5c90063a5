#include "celif/energy.hpp"

#include "celif/error.hpp"

namespace celif {

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::Lstm: return "lstm";
    case ModelFamily::LifSrnn: return "lif-srnn";
    case ModelFamily::AlifSrnn: return "alif-srnn";
    case ModelFamily::CelifFfsnn: return "celif-ffsnn";
  }
  return "?";
}

ModelFamily model_family_from_string(const std::string& name) {
  if (name == "lstm") return ModelFamily::Lstm;
  if (name == "lif" || name == "lif-srnn") return ModelFamily::LifSrnn;
  if (name == "alif" || name == "alif-srnn") return ModelFamily::AlifSrnn;
  if (name == "celif" || name == "celif-ffsnn") return ModelFamily::CelifFfsnn;
  throw ConfigError("unknown model family '" + name + "' (expected lstm, lif, alif or celif)");
}

void EnergySpec::validate() const {
  if (layers.empty()) throw ConfigError("energy spec needs at least one layer");
  auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  for (const auto& l : layers) {
    if (l.m == 0 || l.n == 0) throw ConfigError("energy spec layer widths must be positive");
    if (!rate_ok(l.fr_in) || !rate_ok(l.fr_out)) throw ConfigError("firing rates must lie in [0,1]");
  }
  if (readout) {
    if (readout->m == 0 || readout->n == 0) throw ConfigError("energy spec readout widths must be positive");
    if (!rate_ok(readout->fr_in)) throw ConfigError("readout firing rate must lie in [0,1]");
  }
  if (timesteps == 0) throw ConfigError("energy spec needs at least one timestep");
  if (!(e_ac_pj >= 0) || !(e_mac_pj >= 0)) throw ConfigError("operation energies must be non-negative");
}

EnergyReport estimate_energy(const EnergySpec& spec) {
  spec.validate();
  const double ac = spec.e_ac_pj, mac = spec.e_mac_pj;
  EnergyReport report;
  for (const auto& l : spec.layers) {
    const double m = static_cast<double>(l.m), n = static_cast<double>(l.n);
    double pj = 0;
    switch (spec.family) {
      case ModelFamily::Lstm: pj = 4.0 * (m * n + n * n) * mac + 17.0 * n * mac; break;
      case ModelFamily::LifSrnn: pj = m * n * l.fr_in * ac + (n * n + n) * l.fr_out * ac + n * mac; break;
      case ModelFamily::AlifSrnn: pj = m * n * l.fr_in * ac + (n * n + 2.0 * n) * l.fr_out * ac + 4.0 * n * mac; break;
      case ModelFamily::CelifFfsnn: pj = (m * n * l.fr_in + n * l.fr_out) * ac + 3.0 * n * mac; break;
    }
    report.layer_pj.push_back(pj);
    report.per_step_pj += pj;
  }
  if (spec.readout) {
    const double mn = static_cast<double>(spec.readout->m) * static_cast<double>(spec.readout->n);
    report.readout_pj = spec.family == ModelFamily::Lstm ? mn * mac : mn * spec.readout->fr_in * ac;
    report.per_step_pj += report.readout_pj;
  }
  report.total_nj = report.per_step_pj * static_cast<double>(spec.timesteps) / 1000.0;
  return report;
}

std::vector<ReferenceModel> reference_models(std::size_t timesteps, double e_ac_pj, double e_mac_pj) {
  const std::vector<EnergyLayer> lif_rates{{1, 176, 1, 0.22}, {176, 176, 0.22, 0.145}, {176, 176, 0.145, 0.004}};
  std::vector<ReferenceModel> out{
      {{ModelFamily::Lstm, {{1, 88, 1, 1}, {88, 88, 1, 1}, {88, 88, 1, 1}}, EnergyReadout{88, 10, 1}}, 774.9},
      {{ModelFamily::LifSrnn, lif_rates, EnergyReadout{176, 10, 0.004}}, 24.1},
      {{ModelFamily::AlifSrnn, lif_rates, EnergyReadout{176, 10, 0.004}}, 22.9},
      {{ModelFamily::CelifFfsnn, {{1, 64, 1, 0.22}, {64, 152, 0.22, 0.23}, {152, 152, 0.23, 0.44}},
        EnergyReadout{152, 10, 0.44}},
       13.5},
  };
  for (auto& r : out) {
    r.spec.timesteps = timesteps;
    r.spec.e_ac_pj = e_ac_pj;
    r.spec.e_mac_pj = e_mac_pj;
  }
  return out;
}

}  // namespace celif
