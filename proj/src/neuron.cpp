#include "celif/neuron.hpp"

#include "celif/error.hpp"

namespace celif {

bool needs_encoding(CeVariant variant) {
  switch (variant) {
    case CeVariant::SpikePrev:
    case CeVariant::VoltagePrev:
      return false;
    default:
      return true;
  }
}

CeVariant ce_variant_from_int(int id) {
  if (id < 1 || id > 6) throw ConfigError("contextual-embedding variant must be 1..6, got " + std::to_string(id));
  return static_cast<CeVariant>(id);
}

std::string to_string(NeuronKind kind) {
  switch (kind) {
    case NeuronKind::Lif: return "lif";
    case NeuronKind::Alif: return "alif";
    case NeuronKind::CeLif: return "celif";
  }
  return "?";
}

NeuronKind neuron_kind_from_string(const std::string& name) {
  if (name == "lif") return NeuronKind::Lif;
  if (name == "alif") return NeuronKind::Alif;
  if (name == "celif" || name == "ce-lif") return NeuronKind::CeLif;
  throw ConfigError("unknown neuron kind '" + name + "' (expected lif, alif or celif)");
}

void NeuronConfig::validate() const {
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must lie in (0,1)");
  if (!(beta > 0 && beta <= 1)) throw ConfigError("beta must lie in (0,1]");
  if (!(gamma >= 0)) throw ConfigError("gamma must be >= 0");
  if (!(theta0 > 0)) throw ConfigError("theta0 must be > 0");
  if (!(gamma_sg > 0)) throw ConfigError("gamma_sg must be > 0");
  if (v_reset != 0.0) throw ConfigError("v_reset must be 0 (reset is multiplicative)");
  ce_variant_from_int(static_cast<int>(variant));
}

LayerState initial_state(std::size_t batch, std::size_t n, const NeuronConfig& cfg) {
  return LayerState{Tensor({batch, n}), Tensor({batch, n}, cfg.theta0), Tensor({batch, n}), 0};
}

namespace {

// CE[t] as a function of (V[t-1], S[t-1], TE[t]); ALIF is CE = gamma S[t-1].
template <NeuronKind K, CeVariant C>
inline Real contextual(Real v_prev, Real s_prev, const Real* te, std::size_t k, Real gamma) {
  if constexpr (K == NeuronKind::Alif) return gamma * s_prev;
  else if constexpr (C == CeVariant::SpikePrev) return s_prev;
  else if constexpr (C == CeVariant::VoltagePrev) return v_prev;
  else if constexpr (C == CeVariant::Encoding) return te[k];
  else if constexpr (C == CeVariant::VoltagePlusEncoding) return v_prev + te[k];
  else if constexpr (C == CeVariant::SpikeTimesEncoding) return s_prev * te[k];
  else return te[k] * v_prev;
}

template <NeuronKind K, CeVariant C>
void step_row_impl(const NeuronConfig& cfg, std::size_t n, const Real* current, const Real* te, PrevRow prev,
                   Real* v, Real* theta, Real* s) {
  const Real alpha = cfg.alpha, beta = cfg.beta, theta0 = cfg.theta0, gamma = cfg.gamma;
  if (prev.v == nullptr) {
    for (std::size_t k = 0; k < n; ++k) {
      Real th = theta0;
      if constexpr (K != NeuronKind::Lif) th = contextual<K, C>(0.0, 0.0, te, k, gamma) + theta0;
      const Real vm = current[k];
      v[k] = vm;
      theta[k] = th;
      s[k] = vm >= th ? 1.0 : 0.0;
    }
    return;
  }
  const Real* pv = prev.v;
  const Real* ps = prev.s;
  const Real* pth = prev.theta;
  for (std::size_t k = 0; k < n; ++k) {
    Real th = theta0;
    if constexpr (K != NeuronKind::Lif) th = beta * (pth[k] - theta0) + contextual<K, C>(pv[k], ps[k], te, k, gamma) + theta0;
    const Real vm = alpha * pv[k] * (1.0 - ps[k]) + current[k];
    v[k] = vm;
    theta[k] = th;
    s[k] = vm >= th ? 1.0 : 0.0;
  }
}

}  // namespace

void step_row(const NeuronConfig& cfg, std::size_t n, const Real* current, const Real* te, PrevRow prev, Real* v,
              Real* theta, Real* s) {
  using enum CeVariant;
  switch (cfg.kind) {
    case NeuronKind::Lif: return step_row_impl<NeuronKind::Lif, SpikePrev>(cfg, n, current, te, prev, v, theta, s);
    case NeuronKind::Alif: return step_row_impl<NeuronKind::Alif, SpikePrev>(cfg, n, current, te, prev, v, theta, s);
    case NeuronKind::CeLif: break;
  }
  constexpr auto K = NeuronKind::CeLif;
  switch (cfg.variant) {
    case SpikePrev: return step_row_impl<K, SpikePrev>(cfg, n, current, te, prev, v, theta, s);
    case VoltagePrev: return step_row_impl<K, VoltagePrev>(cfg, n, current, te, prev, v, theta, s);
    case Encoding: return step_row_impl<K, Encoding>(cfg, n, current, te, prev, v, theta, s);
    case VoltagePlusEncoding: return step_row_impl<K, VoltagePlusEncoding>(cfg, n, current, te, prev, v, theta, s);
    case SpikeTimesEncoding: return step_row_impl<K, SpikeTimesEncoding>(cfg, n, current, te, prev, v, theta, s);
    case VoltageTimesEncoding: return step_row_impl<K, VoltageTimesEncoding>(cfg, n, current, te, prev, v, theta, s);
  }
}

namespace {

LayerState advance(const LayerState& state, const Tensor& current, const Real* te, const NeuronConfig& cfg) {
  if (current.shape() != state.V.shape())
    throw DimensionError("neuron step: input current " + shape_string(current.shape()) + " does not match state " +
                         shape_string(state.V.shape()));
  if (!current.all_finite()) throw DynamicsError("neuron step: non-finite input current at t=" + std::to_string(state.t));
  for (Real s : state.S.data())
    if (s != 0.0 && s != 1.0) throw DynamicsError("neuron step: spike state is not binary");

  const std::size_t batch = state.V.dim(0), n = state.V.dim(1);
  LayerState next{Tensor({batch, n}), Tensor({batch, n}), Tensor({batch, n}), state.t + 1};
  for (std::size_t b = 0; b < batch; ++b) {
    PrevRow prev{state.V.row(b).data(), state.Theta.row(b).data(), state.S.row(b).data()};
    step_row(cfg, n, current.row(b).data(), te, prev, next.V.row(b).data(), next.Theta.row(b).data(),
             next.S.row(b).data());
  }
  if (!next.V.all_finite() || !next.Theta.all_finite())
    throw DynamicsError("neuron step: non-finite state at t=" + std::to_string(next.t));
  return next;
}

}  // namespace

LayerState lif_step(const LayerState& state, const Tensor& current, const NeuronConfig& cfg) {
  NeuronConfig c = cfg;
  c.kind = NeuronKind::Lif;
  return advance(state, current, nullptr, c);
}

LayerState alif_step(const LayerState& state, const Tensor& current, const NeuronConfig& cfg) {
  NeuronConfig c = cfg;
  c.kind = NeuronKind::Alif;
  return advance(state, current, nullptr, c);
}

LayerState celif_step(const LayerState& state, const Tensor& current, std::optional<std::span<const Real>> te_t,
                      const NeuronConfig& cfg, CeVariant variant) {
  NeuronConfig c = cfg;
  c.kind = NeuronKind::CeLif;
  c.variant = variant;
  const Real* te = nullptr;
  if (needs_encoding(variant)) {
    if (!te_t) throw ConfigError("CE variant " + std::to_string(static_cast<int>(variant)) + " needs a temporal encoding row");
    if (te_t->size() < state.V.dim(1))
      throw DimensionError("temporal encoding row has " + std::to_string(te_t->size()) + " entries, layer has " +
                           std::to_string(state.V.dim(1)));
    te = te_t->data();
  }
  return advance(state, current, te, c);
}

LayerState neuron_step(const LayerState& state, const Tensor& current, std::optional<std::span<const Real>> te_t,
                       const NeuronConfig& cfg) {
  switch (cfg.kind) {
    case NeuronKind::Lif: return lif_step(state, current, cfg);
    case NeuronKind::Alif: return alif_step(state, current, cfg);
    case NeuronKind::CeLif: return celif_step(state, current, te_t, cfg, cfg.variant);
  }
  throw ConfigError("unknown neuron kind");
}

Tensor surrogate_grad(const Tensor& V, const Tensor& Theta, double gamma_sg) {
  if (V.shape() != Theta.shape()) throw DimensionError("surrogate_grad: V and Theta shapes differ");
  Tensor out(V.shape());
  for (std::size_t i = 0; i < V.size(); ++i) out[i] = boxcar(V[i], Theta[i], gamma_sg);
  return out;
}

}  // namespace celif
