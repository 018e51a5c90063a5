#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "celif/tensor.hpp"

namespace celif {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  // One entry per parameter, in the order the parameters are passed.
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

struct ParamRef {
  std::string name;
  Tensor* value;
  const Tensor* grad;
};

/// One bias-corrected Adam update over every parameter. Moment buffers are
/// created on the first call; later calls must pass parameters of the same
/// shapes in the same order. Throws TrainingError naming the first parameter
/// whose gradient is not finite, before anything is modified.
void adam_step(std::span<const ParamRef> params, AdamState& state);

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor* const> grads, double max_norm);

}  // namespace celif
