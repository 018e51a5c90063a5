#pragma once

#include <cstddef>

#include "celif/neuron.hpp"
#include "celif/tensor.hpp"

namespace celif {

/// Forward record of one layer over a whole sequence. Every tensor is
/// [T x batch x width]; S_in holds the presynaptic input (spikes, or the raw
/// input for the first layer).
struct LayerTrace {
  std::size_t layer = 0;
  Tensor V;
  Tensor Theta;
  Tensor S;
  Tensor I;
  Tensor S_in;

  std::size_t steps() const { return V.dim(0); }
  std::size_t batch() const { return V.dim(1); }
  std::size_t width() const { return V.dim(2); }
  std::size_t input_width() const { return S_in.dim(2); }
};

/// Parameter gradients of one layer. dTE is [T x n] and present only when the
/// layer reads a temporal encoding; dW_rec only for recurrent layers.
struct GradientBundle {
  Tensor dW;
  Tensor db;
  Tensor dTE;
  Tensor dW_rec;
};

/// Weights the reverse pass needs. weight is [m x n] (I = S_in * weight + b),
/// recurrent is [n x n], encoding is [T x k] with k >= n (a layer reads the
/// leading n columns).
struct LayerWeights {
  const Tensor* weight = nullptr;
  const Tensor* recurrent = nullptr;
  const Tensor* encoding = nullptr;
};

struct BackwardOptions {
  bool input_grad = true;
  // Keep the per-step dL/dS, dL/dV, dL/dTheta tensors ([T x batch x n]).
  bool record_internals = false;
};

struct BackwardResult {
  GradientBundle grads;
  Tensor input_grad;  // dL/dS_in, [T x batch x m]; empty unless requested
  Tensor spike_grad;  // dL/dS (total), recorded on request
  Tensor voltage_grad;
  Tensor threshold_grad;
};

/// Reverse-time recursion for one layer. dL_dS_extern[t] is the part of
/// dL/dS[t] that arrives from outside the layer (readout or the next layer).
///
/// Per timestep, walking t = T..1:
///   dS[t]  = extern[t] - alpha V[t] dV[t+1] + dTheta[t+1] dCE[t+1]/dS[t]
///            + W_rec^T dV[t+1]
///   dV[t]  = dS[t] g'[t] + alpha (1 - S[t]) dV[t+1] + dTheta[t+1] dCE[t+1]/dV[t]
///   dTheta[t] = -dS[t] g'[t] + beta dTheta[t+1]          (zero for LIF)
/// with g' the boxcar surrogate. Parameter gradients accumulate as
/// dW += S_in[t]^T dV[t], db += dV[t], dTE[t] += dTheta[t] dCE[t]/dTE[t].
BackwardResult backward_layer(const LayerTrace& trace, const Tensor& dL_dS_extern, const NeuronConfig& cfg,
                              const LayerWeights& weights, BackwardOptions options = {});

BackwardResult backward_lif(const LayerTrace& trace, const Tensor& dL_dS_extern, const NeuronConfig& cfg,
                            const LayerWeights& weights, BackwardOptions options = {});
BackwardResult backward_alif(const LayerTrace& trace, const Tensor& dL_dS_extern, const NeuronConfig& cfg,
                             const LayerWeights& weights, BackwardOptions options = {});
BackwardResult backward_celif(const LayerTrace& trace, const Tensor& dL_dS_extern, const NeuronConfig& cfg,
                              const LayerWeights& weights, BackwardOptions options = {});

}  // namespace celif
