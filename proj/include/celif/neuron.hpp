#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "celif/tensor.hpp"

namespace celif {

enum class NeuronKind { Lif, Alif, CeLif };

/// Contextual-embedding term added to the threshold each step.
enum class CeVariant : int {
  SpikePrev = 1,              // S[t-1]
  VoltagePrev = 2,            // V[t-1]
  Encoding = 3,               // TE[t]
  VoltagePlusEncoding = 4,    // V[t-1] + TE[t]
  SpikeTimesEncoding = 5,     // S[t-1] * TE[t]
  VoltageTimesEncoding = 6,   // V[t-1] * TE[t]
};

bool needs_encoding(CeVariant variant);
CeVariant ce_variant_from_int(int id);

std::string to_string(NeuronKind kind);
NeuronKind neuron_kind_from_string(const std::string& name);

struct NeuronConfig {
  NeuronKind kind = NeuronKind::CeLif;
  CeVariant variant = CeVariant::VoltageTimesEncoding;
  double alpha = 0.5;     // membrane decay
  double beta = 0.99;     // threshold decay toward theta0
  double gamma = 0.1;     // ALIF spike-triggered threshold gain
  double theta0 = 0.3;    // resting threshold
  double gamma_sg = 0.2;  // boxcar half-width of the surrogate derivative
  double v_reset = 0.0;   // only 0 is supported: reset is multiplicative

  // Throws ConfigError on any out-of-range constant.
  void validate() const;
  bool uses_encoding() const { return kind == NeuronKind::CeLif && needs_encoding(variant); }
};

/// Membrane state of one layer for a whole batch, shapes [batch x n].
struct LayerState {
  Tensor V;
  Tensor Theta;
  Tensor S;
  std::size_t t = 0;
};

LayerState initial_state(std::size_t batch, std::size_t n, const NeuronConfig& cfg);

LayerState lif_step(const LayerState& state, const Tensor& current, const NeuronConfig& cfg);
LayerState alif_step(const LayerState& state, const Tensor& current, const NeuronConfig& cfg);
/// te_t is the encoding row for this timestep; it may be absent only for
/// variants that do not read it.
LayerState celif_step(const LayerState& state, const Tensor& current, std::optional<std::span<const Real>> te_t,
                      const NeuronConfig& cfg, CeVariant variant);
/// Dispatches on cfg.kind (and cfg.variant for CE-LIF).
LayerState neuron_step(const LayerState& state, const Tensor& current, std::optional<std::span<const Real>> te_t,
                       const NeuronConfig& cfg);

inline Real boxcar(Real v, Real theta, Real gamma_sg) { return std::abs(v - theta) < gamma_sg ? 1.0 : 0.0; }

Tensor surrogate_grad(const Tensor& V, const Tensor& Theta, double gamma_sg);

/// Previous-step values for one batch row; null pointers mean t = 0
/// (V = 0, S = 0, Theta = theta0).
struct PrevRow {
  const Real* v = nullptr;
  const Real* theta = nullptr;
  const Real* s = nullptr;
};

/// Advances n neurons by one step. Order within the step: threshold from
/// the previous V/S, then V, then S = H(V - Theta). `te` must hold at least
/// n values when the configuration reads the encoding, else it is ignored.
void step_row(const NeuronConfig& cfg, std::size_t n, const Real* current, const Real* te, PrevRow prev, Real* v,
              Real* theta, Real* s);

}  // namespace celif
