#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "celif/network.hpp"

namespace celif::testing {

inline std::filesystem::path scratch(const std::string& name) {
  const char* env = std::getenv("CELIF_TEST_TMP");
  std::filesystem::path root = env ? env : std::filesystem::temp_directory_path() / "celif-tests";
  auto dir = root / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double max_abs(const Tensor& t) {
  double m = 0;
  for (double x : t.data()) m = std::max(m, std::abs(x));
  return m;
}

/// max_i |a_i - b_i| / max(max|b|, floor); the floor keeps near-zero
/// gradients from inflating the ratio.
inline double rel_error(const Tensor& a, const Tensor& b, double floor = 1e-12) {
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  return diff / std::max(max_abs(b), floor);
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo, double hi) { return uniform_fill(rng, lo, hi, shape); }

/// Tiny two-layer classifier instance of the requested neuron kind, with
/// inputs scaled so a healthy fraction of steps sits inside the surrogate
/// window.
struct TinyCase {
  Model model;
  TaskBatch batch;
};

inline TinyCase tiny_case(NeuronKind kind, std::uint64_t seed, Connectivity conn = Connectivity::Feedforward,
                          Readout readout = Readout::MeanLogit, std::size_t T = 6) {
  Rng rng(seed);
  ModelSpec spec;
  spec.input_dim = 3;
  spec.hidden_dims = {4, 3};
  spec.output_dim = readout == Readout::LastStep ? 2 : 3;
  spec.seq_len = T;
  spec.neuron.kind = kind;
  spec.neuron.variant = CeVariant::VoltageTimesEncoding;
  spec.connectivity = conn;
  spec.readout = readout;
  Model model = init_model(spec, rng, InitOptions{0.05, 0.2});
  Rng wr = rng.derive("test-scale");
  for (auto& p : model.named_parameters())
    if (p.name.find("weight") != std::string::npos || p.name.find("recurrent") != std::string::npos)
      for (auto& x : p.tensor->data()) x = wr.uniform(-1.0, 1.0);
  for (auto& l : model.layers)
    for (auto& x : l.bias.data()) x = wr.uniform(0.0, 0.3);

  const std::size_t B = 2;
  TaskBatch batch;
  batch.seq_len = T;
  batch.inputs = uniform_fill(wr, 0.0, 1.0, {T, B, 3});
  if (readout == Readout::PerStep) {
    batch.loss = LossKind::CrossEntropyPerStep;
    batch.targets = Tensor({T, B});
    for (auto& y : batch.targets.data()) y = static_cast<double>(wr.below(3));
  } else if (readout == Readout::LastStep) {
    batch.loss = LossKind::Mse;
    batch.targets = uniform_fill(wr, 0.0, 1.0, {B, 2});
  } else {
    batch.loss = LossKind::CrossEntropyMean;
    batch.targets = Tensor({B});
    for (auto& y : batch.targets.data()) y = static_cast<double>(wr.below(3));
  }
  return {std::move(model), std::move(batch)};
}

}  // namespace celif::testing

#include "oracle.hpp"

namespace celif::testing {

struct OracleComparison {
  double worst = 0;        // largest per-tensor relative error
  std::string worst_name;  // tensor it occurred in
  double scale = 0;        // largest |gradient| over all tensors
};

/// Engine gradients against the unrolled oracle for every parameter tensor.
/// Each tensor's error is normalised by max(max|oracle tensor|, 1e-6 * scale).
inline OracleComparison compare_with_oracle(Model& model, const TaskBatch& batch) {
  const LossResult lr = loss_and_grad(model, batch);
  const auto refs = param_refs(model, lr.grads);
  std::vector<Tensor> expected;
  OracleComparison cmp;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    expected.push_back(oracle::oracle_grad(model, batch, i));
    cmp.scale = std::max(cmp.scale, max_abs(expected.back()));
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const double err = rel_error(*refs[i].grad, expected[i], std::max(1e-6 * cmp.scale, 1e-300));
    if (err > cmp.worst) {
      cmp.worst = err;
      cmp.worst_name = refs[i].name;
    }
  }
  return cmp;
}

// Single-layer model whose input passes straight through as current.
inline Model passthrough_model(NeuronConfig cfg, std::size_t T, std::size_t n, double te_value) {
  ModelSpec spec;
  spec.input_dim = n;
  spec.hidden_dims = {n};
  spec.output_dim = 1;
  spec.seq_len = T;
  spec.neuron = cfg;
  spec.readout = Readout::LastStep;
  Model m = init_model(spec, Rng(1));
  m.layers[0].weight.fill(0);
  for (std::size_t k = 0; k < n; ++k) m.layers[0].weight.at(k, k) = 1.0;
  m.layers[0].bias.fill(0);
  if (!m.encodings.empty() && !m.encodings[0].empty()) m.encodings[0].fill(te_value);
  return m;
}

inline LayerTrace trace_for(const Model& m, const Tensor& currents) { return forward(m, currents).traces[0]; }

inline LayerWeights weights_of(const Model& m) {
  return {&m.layers[0].weight, m.layers[0].recurrent.empty() ? nullptr : &m.layers[0].recurrent, m.encoding_for(0)};
}

}  // namespace celif::testing
