#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "celif/bptt.hpp"
#include "celif/neuron.hpp"
#include "celif/optimizer.hpp"
#include "celif/rng.hpp"
#include "celif/tasks.hpp"
#include "celif/tensor.hpp"

namespace celif {

enum class Connectivity { Feedforward, Recurrent };
enum class Readout { MeanLogit, LastStep, PerStep };
// PerLayer: every CE layer owns a [T x n] encoding. Shared: one [T x max n]
// encoding serves all layers, each reading its leading n columns.
enum class TeSharing { PerLayer, Shared };

std::string to_string(Connectivity c);
std::string to_string(Readout r);
std::string to_string(TeSharing s);
Connectivity connectivity_from_string(const std::string& s);
Readout readout_from_string(const std::string& s);
TeSharing te_sharing_from_string(const std::string& s);

struct ModelSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims{64, 88, 88};
  std::size_t output_dim = 10;
  std::size_t seq_len = 784;
  NeuronConfig neuron;
  // Optional per-layer override; when empty every layer uses `neuron`.
  std::vector<NeuronConfig> layer_neurons;
  Connectivity connectivity = Connectivity::Feedforward;
  Readout readout = Readout::MeanLogit;
  TeSharing te_sharing = TeSharing::PerLayer;

  const NeuronConfig& neuron_for(std::size_t layer) const;
  bool layer_uses_encoding(std::size_t layer) const;
  bool uses_encoding() const;
  void validate() const;
};

struct HiddenLayer {
  Tensor weight;     // [in x n]
  Tensor bias;       // [n]
  Tensor recurrent;  // [n x n], empty when feedforward
};

struct Model {
  ModelSpec spec;
  std::vector<HiddenLayer> layers;
  // PerLayer: one entry per layer (empty tensor where unused).
  // Shared: a single entry.
  std::vector<Tensor> encodings;
  Tensor readout_weight;  // [n_last x out]
  Tensor readout_bias;    // [out]

  const Tensor* encoding_for(std::size_t layer) const;
  std::size_t parameter_count() const;

  struct Named {
    std::string name;
    Tensor* tensor;
  };
  // Stable order: layer{l}.weight/.bias/.recurrent, encoding*, readout.*.
  std::vector<Named> named_parameters();
};

/// Closed form: sum over layers of m*n + n (+ n*n recurrent) plus encodings
/// plus the readout.
std::size_t parameter_count(const ModelSpec& spec);

struct InitOptions {
  double te_mean = 0.01;
  double te_std = 0.01;
  bool zero_readout = false;
};

/// W ~ U(+-sqrt(1/fan_in)), b = 0, TE ~ N(te_mean, te_std). Weight draws use
/// rng.derive("weights"), encodings rng.derive("encoding").
Model init_model(const ModelSpec& spec, const Rng& rng, const InitOptions& options = {});

struct ForwardResult {
  // MeanLogit/LastStep: [batch x out]; PerStep: [T x batch x out].
  Tensor outputs;
  std::vector<LayerTrace> traces;
};

ForwardResult forward(const Model& model, const TaskBatch& batch);
ForwardResult forward(const Model& model, const Tensor& inputs);

/// Mean spike count over time of a spiking layer, [batch x n].
Tensor decode_spike_frequency(const LayerTrace& trace);

struct ModelGradients {
  std::vector<GradientBundle> layers;
  std::vector<Tensor> encodings;  // mirrors Model::encodings
  Tensor readout_weight;
  Tensor readout_bias;
};

/// Gradient tensors zipped with the parameters, in named_parameters() order.
std::vector<ParamRef> param_refs(Model& model, const ModelGradients& grads);
std::vector<Tensor*> gradient_tensors(ModelGradients& grads);

struct LossOptions {
  // Record dL/dS[t] of this hidden layer ([T x batch x n]).
  std::optional<std::size_t> probe_layer;
};

struct LossResult {
  double loss = 0;
  // MSE for regression; accuracy in [0,1] for classification.
  double metric = 0;
  ModelGradients grads;
  Tensor probe;  // dL/dS of the probed layer, when requested
};

/// Loss only (no backward pass).
struct Evaluation {
  double loss = 0;
  double metric = 0;
};

Evaluation evaluate_batch(const Model& model, const TaskBatch& batch);
LossResult loss_and_grad(const Model& model, const TaskBatch& batch, const LossOptions& options = {});

}  // namespace celif
