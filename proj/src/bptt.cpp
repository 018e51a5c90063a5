#include "celif/bptt.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "celif/error.hpp"

namespace celif {

namespace {

void check_inputs(const LayerTrace& tr, const Tensor& ext, const NeuronConfig& cfg, const LayerWeights& w) {
  if (tr.V.rank() != 3) throw DimensionError("backward: trace V must be [T x batch x n]");
  const Shape state_shape = tr.V.shape();
  for (const Tensor* t : {&tr.Theta, &tr.S, &tr.I})
    if (t->shape() != state_shape) throw DimensionError("backward: trace tensors disagree in shape");
  if (tr.S_in.rank() != 3 || tr.S_in.dim(0) != tr.steps() || tr.S_in.dim(1) != tr.batch())
    throw DimensionError("backward: trace S_in has shape " + shape_string(tr.S_in.shape()));
  if (ext.shape() != state_shape)
    throw DimensionError("backward: dL/dS extern " + shape_string(ext.shape()) + " does not match trace " +
                         shape_string(state_shape));
  if (!w.weight || w.weight->shape() != Shape{tr.input_width(), tr.width()})
    throw DimensionError("backward: weight must be [" + std::to_string(tr.input_width()) + "x" +
                         std::to_string(tr.width()) + "]");
  if (w.recurrent && w.recurrent->shape() != Shape{tr.width(), tr.width()})
    throw DimensionError("backward: recurrent weight must be square over the layer width");
  if (cfg.uses_encoding()) {
    if (!w.encoding) throw ConfigError("backward: CE variant needs a temporal encoding");
    if (w.encoding->rank() != 2 || w.encoding->dim(0) != tr.steps() || w.encoding->dim(1) < tr.width())
      throw DimensionError("backward: temporal encoding " + shape_string(w.encoding->shape()) +
                           " does not cover the trace");
  }
}

}  // namespace

BackwardResult backward_layer(const LayerTrace& tr, const Tensor& ext, const NeuronConfig& cfg,
                              const LayerWeights& w, BackwardOptions options) {
  check_inputs(tr, ext, cfg, w);

  const std::size_t T = tr.steps(), B = tr.batch(), n = tr.width(), m = tr.input_width();
  const Real alpha = cfg.alpha, beta = cfg.beta, gsg = cfg.gamma_sg;
  const bool has_threshold = cfg.kind != NeuronKind::Lif;
  const Real threshold_gain = has_threshold ? 1.0 : 0.0;
  const bool celif = cfg.kind == NeuronKind::CeLif;
  const CeVariant variant = cfg.variant;
  const Tensor* te = celif && needs_encoding(variant) ? w.encoding : nullptr;
  const std::size_t te_stride = te ? te->dim(1) : 0;

  BackwardResult out;
  auto& g = out.grads;
  g.dW = Tensor({m, n});
  g.db = Tensor({n});
  if (te) g.dTE = Tensor({T, n});
  if (w.recurrent) g.dW_rec = Tensor({n, n});
  if (options.input_grad) out.input_grad = Tensor({T, B, m});
  if (options.record_internals) {
    out.spike_grad = Tensor({T, B, n});
    out.voltage_grad = Tensor({T, B, n});
    out.threshold_grad = Tensor({T, B, n});
  }

  std::vector<Real> dv_next(B * n, 0.0), dth_next(B * n, 0.0), rec_next(B * n, 0.0);
  std::vector<Real> dv(B * n), dth(B * n), rec(B * n);
  // dCE[t+1]/dS[t] and dCE[t+1]/dV[t] for the current t, per neuron.
  std::vector<Real> cs(n, 0.0), cv(n, 0.0);

  const Real* W = w.weight->raw();
  const Real* Wr = w.recurrent ? w.recurrent->raw() : nullptr;
  Real* dW = g.dW.raw();
  Real* db = g.db.raw();
  // Transposed copies turn W^T dV into contiguous axpy updates.
  std::vector<Real> Wt, Wrt;
  if (options.input_grad) {
    Wt.resize(n * m);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < n; ++k) Wt[k * m + j] = W[j * n + k];
  }
  if (Wr) {
    Wrt.resize(n * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) Wrt[k * n + j] = Wr[j * n + k];
  }

  for (std::size_t step = T; step-- > 0;) {
    const bool has_next = step + 1 < T;
    std::fill(cs.begin(), cs.end(), 0.0);
    std::fill(cv.begin(), cv.end(), 0.0);
    if (has_next && has_threshold) {
      if (cfg.kind == NeuronKind::Alif) {
        std::fill(cs.begin(), cs.end(), cfg.gamma);
      } else {
        const Real* te_next = te ? te->raw() + (step + 1) * te_stride : nullptr;
        for (std::size_t k = 0; k < n; ++k) {
          switch (variant) {
            case CeVariant::SpikePrev: cs[k] = 1.0; break;
            case CeVariant::VoltagePrev: cv[k] = 1.0; break;
            case CeVariant::Encoding: break;
            case CeVariant::VoltagePlusEncoding: cv[k] = 1.0; break;
            case CeVariant::SpikeTimesEncoding: cs[k] = te_next[k]; break;
            case CeVariant::VoltageTimesEncoding: cv[k] = te_next[k]; break;
          }
        }
      }
    }

    for (std::size_t b = 0; b < B; ++b) {
      const Real* V = tr.V.row(step, b).data();
      const Real* Th = tr.Theta.row(step, b).data();
      const Real* S = tr.S.row(step, b).data();
      const Real* E = ext.row(step, b).data();
      const Real* dvn = dv_next.data() + b * n;
      const Real* dthn = dth_next.data() + b * n;
      const Real* recn = rec_next.data() + b * n;
      Real* dvb = dv.data() + b * n;
      Real* dthb = dth.data() + b * n;

      Real* rec_ds = options.record_internals ? out.spike_grad.row(step, b).data() : nullptr;
      for (std::size_t k = 0; k < n; ++k) {
        Real ds = E[k] + recn[k] - alpha * V[k] * dvn[k] + dthn[k] * cs[k];
        const Real gp = boxcar(V[k], Th[k], gsg);
        const Real direct = ds * gp;
        dvb[k] = direct + alpha * (1.0 - S[k]) * dvn[k] + dthn[k] * cv[k];
        dthb[k] = threshold_gain * (beta * dthn[k] - direct);
        db[k] += dvb[k];
        if (rec_ds) rec_ds[k] = ds;
      }

      if (te) {
        Real* dte = g.dTE.row(step).data();
        const Real* src = nullptr;
        bool unit = false;
        switch (variant) {
          case CeVariant::Encoding:
          case CeVariant::VoltagePlusEncoding: unit = true; break;
          case CeVariant::SpikeTimesEncoding: src = step > 0 ? tr.S.row(step - 1, b).data() : nullptr; break;
          case CeVariant::VoltageTimesEncoding: src = step > 0 ? tr.V.row(step - 1, b).data() : nullptr; break;
          default: break;
        }
        if (unit)
          for (std::size_t k = 0; k < n; ++k) dte[k] += dthb[k];
        else if (src)
          for (std::size_t k = 0; k < n; ++k) dte[k] += dthb[k] * src[k];
      }

      const Real* Sin = tr.S_in.row(step, b).data();
      for (std::size_t j = 0; j < m; ++j) {
        const Real s = Sin[j];
        if (s == 0.0) continue;
        Real* row = dW + j * n;
        for (std::size_t k = 0; k < n; ++k) row[k] += s * dvb[k];
      }

      if (options.input_grad) {
        Real* gin = out.input_grad.row(step, b).data();
        for (std::size_t k = 0; k < n; ++k) {
          const Real d = dvb[k];
          if (d == 0.0) continue;
          const Real* col = Wt.data() + k * m;
          for (std::size_t j = 0; j < m; ++j) gin[j] += d * col[j];
        }
      }

      Real* recb = rec.data() + b * n;
      if (Wr && step > 0) {
        const Real* Sp = tr.S.row(step - 1, b).data();
        Real* dWr = g.dW_rec.raw();
        std::fill(recb, recb + n, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
          const Real d = dvb[k];
          if (d == 0.0) continue;
          const Real* col = Wrt.data() + k * n;
          for (std::size_t j = 0; j < n; ++j) recb[j] += d * col[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          if (Sp[j] == 0.0) continue;
          Real* drow = dWr + j * n;
          for (std::size_t k = 0; k < n; ++k) drow[k] += Sp[j] * dvb[k];
        }
      } else {
        std::fill(recb, recb + n, 0.0);
      }
    }

    for (std::size_t i = 0; i < B * n; ++i)
      if (!std::isfinite(dv[i]) || !std::isfinite(dth[i]))
        throw GradientError("backward: non-finite gradient at layer " + std::to_string(tr.layer) + ", timestep " +
                            std::to_string(step + 1));

    if (options.record_internals) {
      std::copy(dv.begin(), dv.end(), out.voltage_grad.row(step).begin());
      std::copy(dth.begin(), dth.end(), out.threshold_grad.row(step).begin());
    }
    dv_next.swap(dv);
    dth_next.swap(dth);
    rec_next.swap(rec);
  }
  return out;
}

BackwardResult backward_lif(const LayerTrace& trace, const Tensor& ext, const NeuronConfig& cfg,
                            const LayerWeights& weights, BackwardOptions options) {
  if (cfg.kind != NeuronKind::Lif) throw ConfigError("backward_lif: configuration is not LIF");
  return backward_layer(trace, ext, cfg, weights, options);
}

BackwardResult backward_alif(const LayerTrace& trace, const Tensor& ext, const NeuronConfig& cfg,
                             const LayerWeights& weights, BackwardOptions options) {
  if (cfg.kind != NeuronKind::Alif) throw ConfigError("backward_alif: configuration is not ALIF");
  return backward_layer(trace, ext, cfg, weights, options);
}

BackwardResult backward_celif(const LayerTrace& trace, const Tensor& ext, const NeuronConfig& cfg,
                              const LayerWeights& weights, BackwardOptions options) {
  if (cfg.kind != NeuronKind::CeLif) throw ConfigError("backward_celif: configuration is not CE-LIF");
  return backward_layer(trace, ext, cfg, weights, options);
}

}  // namespace celif
