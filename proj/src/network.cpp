#include "celif/network.hpp"

#include <algorithm>
#include <cmath>

#include "celif/error.hpp"

namespace celif {

std::string to_string(Connectivity c) { return c == Connectivity::Feedforward ? "feedforward" : "recurrent"; }

std::string to_string(Readout r) {
  switch (r) {
    case Readout::MeanLogit: return "mean-logit";
    case Readout::LastStep: return "last-step";
    case Readout::PerStep: return "per-step";
  }
  return "?";
}

std::string to_string(TeSharing s) { return s == TeSharing::PerLayer ? "per-layer" : "shared"; }

Connectivity connectivity_from_string(const std::string& s) {
  if (s == "feedforward" || s == "ff") return Connectivity::Feedforward;
  if (s == "recurrent" || s == "rec") return Connectivity::Recurrent;
  throw ConfigError("unknown connectivity '" + s + "'");
}

Readout readout_from_string(const std::string& s) {
  if (s == "mean-logit") return Readout::MeanLogit;
  if (s == "last-step") return Readout::LastStep;
  if (s == "per-step") return Readout::PerStep;
  throw ConfigError("unknown readout '" + s + "'");
}

TeSharing te_sharing_from_string(const std::string& s) {
  if (s == "per-layer") return TeSharing::PerLayer;
  if (s == "shared") return TeSharing::Shared;
  throw ConfigError("unknown te_sharing '" + s + "'");
}

// ---------------------------------------------------------------------------
// ModelSpec

const NeuronConfig& ModelSpec::neuron_for(std::size_t layer) const {
  return layer_neurons.empty() ? neuron : layer_neurons.at(layer);
}

bool ModelSpec::layer_uses_encoding(std::size_t layer) const { return neuron_for(layer).uses_encoding(); }

bool ModelSpec::uses_encoding() const {
  for (std::size_t l = 0; l < hidden_dims.size(); ++l)
    if (layer_uses_encoding(l)) return true;
  return false;
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  if (output_dim == 0) throw ConfigError("output_dim must be positive");
  if (seq_len == 0) throw ConfigError("seq_len must be positive");
  if (hidden_dims.empty()) throw ConfigError("hidden_dims must be non-empty");
  for (auto n : hidden_dims)
    if (n == 0) throw ConfigError("hidden layer widths must be positive");
  if (!layer_neurons.empty() && layer_neurons.size() != hidden_dims.size())
    throw ConfigError("layer_neurons must list one configuration per hidden layer");
  for (std::size_t l = 0; l < hidden_dims.size(); ++l) neuron_for(l).validate();
}

namespace {

std::size_t shared_encoding_width(const ModelSpec& spec) {
  std::size_t width = 0;
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l)
    if (spec.layer_uses_encoding(l)) width = std::max(width, spec.hidden_dims[l]);
  return width;
}

}  // namespace

std::size_t parameter_count(const ModelSpec& spec) {
  std::size_t count = 0, in = spec.input_dim;
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
    const std::size_t n = spec.hidden_dims[l];
    count += in * n + n;
    if (spec.connectivity == Connectivity::Recurrent) count += n * n;
    if (spec.te_sharing == TeSharing::PerLayer && spec.layer_uses_encoding(l)) count += spec.seq_len * n;
    in = n;
  }
  if (spec.te_sharing == TeSharing::Shared) count += spec.seq_len * shared_encoding_width(spec);
  count += in * spec.output_dim + spec.output_dim;
  return count;
}

// ---------------------------------------------------------------------------
// Model

const Tensor* Model::encoding_for(std::size_t layer) const {
  if (!spec.layer_uses_encoding(layer)) return nullptr;
  const Tensor& t = spec.te_sharing == TeSharing::Shared ? encodings.at(0) : encodings.at(layer);
  return t.empty() ? nullptr : &t;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size() + l.recurrent.size();
  for (const auto& e : encodings) n += e.size();
  return n + readout_weight.size() + readout_bias.size();
}

namespace {

template <typename M, typename Fn>
void walk_parameters(M& model, Fn&& fn) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    fn(prefix + ".weight", model.layers[l].weight);
    fn(prefix + ".bias", model.layers[l].bias);
    if (!model.layers[l].recurrent.empty()) fn(prefix + ".recurrent", model.layers[l].recurrent);
  }
  if (model.spec.te_sharing == TeSharing::Shared) {
    if (!model.encodings.empty() && !model.encodings[0].empty()) fn(std::string("encoding.shared"), model.encodings[0]);
  } else {
    for (std::size_t l = 0; l < model.encodings.size(); ++l)
      if (!model.encodings[l].empty()) fn("encoding" + std::to_string(l), model.encodings[l]);
  }
  fn(std::string("readout.weight"), model.readout_weight);
  fn(std::string("readout.bias"), model.readout_bias);
}

}  // namespace

std::vector<Model::Named> Model::named_parameters() {
  std::vector<Named> out;
  walk_parameters(*this, [&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
  return out;
}

Model init_model(const ModelSpec& spec, const Rng& rng, const InitOptions& options) {
  spec.validate();
  Rng wrng = rng.derive("weights");
  Rng erng = rng.derive("encoding");

  Model model;
  model.spec = spec;
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
    const std::size_t n = spec.hidden_dims[l];
    HiddenLayer layer;
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    layer.weight = uniform_fill(wrng, -bound, bound, {in, n});
    layer.bias = Tensor({n});
    if (spec.connectivity == Connectivity::Recurrent) {
      const double rb = std::sqrt(1.0 / static_cast<double>(n));
      layer.recurrent = uniform_fill(wrng, -rb, rb, {n, n});
    }
    model.layers.push_back(std::move(layer));
    in = n;
  }

  if (spec.te_sharing == TeSharing::Shared) {
    const std::size_t width = shared_encoding_width(spec);
    model.encodings.emplace_back();
    if (width > 0) model.encodings[0] = gaussian_fill(erng, options.te_mean, options.te_std, {spec.seq_len, width});
  } else {
    for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
      model.encodings.emplace_back();
      if (spec.layer_uses_encoding(l))
        model.encodings[l] = gaussian_fill(erng, options.te_mean, options.te_std, {spec.seq_len, spec.hidden_dims[l]});
    }
  }

  const double rb = std::sqrt(1.0 / static_cast<double>(in));
  model.readout_weight =
      options.zero_readout ? Tensor({in, spec.output_dim}) : uniform_fill(wrng, -rb, rb, {in, spec.output_dim});
  model.readout_bias = Tensor({spec.output_dim});
  return model;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

LayerTrace run_layer(const HiddenLayer& layer, const NeuronConfig& cfg, const Tensor* te, const Tensor& input,
                     std::size_t index) {
  const std::size_t T = input.dim(0), B = input.dim(1), m = input.dim(2), n = layer.bias.size();
  LayerTrace tr;
  tr.layer = index;
  tr.S_in = input;
  tr.V = Tensor({T, B, n});
  tr.Theta = Tensor({T, B, n});
  tr.S = Tensor({T, B, n});
  tr.I = Tensor({T, B, n});

  const Real* W = layer.weight.raw();
  const Real* Wr = layer.recurrent.empty() ? nullptr : layer.recurrent.raw();
  const Real* bias = layer.bias.raw();
  const std::size_t te_stride = te ? te->dim(1) : 0;

  for (std::size_t t = 0; t < T; ++t) {
    const Real* te_row = te ? te->raw() + t * te_stride : nullptr;
    for (std::size_t b = 0; b < B; ++b) {
      Real* cur = tr.I.row(t, b).data();
      std::copy(bias, bias + n, cur);
      const Real* sin = input.row(t, b).data();
      for (std::size_t j = 0; j < m; ++j) {
        const Real s = sin[j];
        if (s == 0.0) continue;
        const Real* w = W + j * n;
        for (std::size_t k = 0; k < n; ++k) cur[k] += s * w[k];
      }
      PrevRow prev;
      if (t > 0) {
        prev = {tr.V.row(t - 1, b).data(), tr.Theta.row(t - 1, b).data(), tr.S.row(t - 1, b).data()};
        if (Wr) {
          for (std::size_t j = 0; j < n; ++j) {
            if (prev.s[j] == 0.0) continue;
            const Real* w = Wr + j * n;
            for (std::size_t k = 0; k < n; ++k) cur[k] += prev.s[j] * w[k];
          }
        }
      }
      step_row(cfg, n, cur, te_row, prev, tr.V.row(t, b).data(), tr.Theta.row(t, b).data(), tr.S.row(t, b).data());
    }
  }
  if (!tr.V.all_finite() || !tr.Theta.all_finite())
    throw DynamicsError("forward: non-finite membrane state in layer " + std::to_string(index));
  return tr;
}

void readout_rows(const Real* s, std::size_t n, const Tensor& W, const Tensor& bias, Real* out) {
  const std::size_t C = bias.size();
  std::copy(bias.raw(), bias.raw() + C, out);
  for (std::size_t k = 0; k < n; ++k) {
    if (s[k] == 0.0) continue;
    const Real* w = W.raw() + k * C;
    for (std::size_t c = 0; c < C; ++c) out[c] += s[k] * w[c];
  }
}

}  // namespace

Tensor decode_spike_frequency(const LayerTrace& trace) {
  const std::size_t T = trace.steps(), B = trace.batch(), n = trace.width();
  Tensor out({B, n});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t b = 0; b < B; ++b) {
      auto s = trace.S.row(t, b);
      for (std::size_t k = 0; k < n; ++k) out.at(b, k) += s[k];
    }
  for (auto& x : out.data()) x /= static_cast<double>(T);
  return out;
}

ForwardResult forward(const Model& model, const Tensor& inputs) {
  const auto& spec = model.spec;
  if (inputs.rank() != 3) throw DimensionError("forward: inputs must be [T x batch x features]");
  if (inputs.dim(0) != spec.seq_len)
    throw ConfigError("forward: batch has " + std::to_string(inputs.dim(0)) + " timesteps, model expects " +
                      std::to_string(spec.seq_len));
  if (inputs.dim(2) != spec.input_dim)
    throw DimensionError("forward: batch has " + std::to_string(inputs.dim(2)) + " features, model expects " +
                         std::to_string(spec.input_dim));
  if (!inputs.all_finite()) throw DynamicsError("forward: non-finite input");

  ForwardResult res;
  const Tensor* input = &inputs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    res.traces.push_back(run_layer(model.layers[l], spec.neuron_for(l), model.encoding_for(l), *input, l));
    input = &res.traces.back().S;
  }

  const LayerTrace& top = res.traces.back();
  const std::size_t T = top.steps(), B = top.batch(), n = top.width(), C = spec.output_dim;
  switch (spec.readout) {
    case Readout::MeanLogit: {
      const Tensor rate = decode_spike_frequency(top);
      res.outputs = Tensor({B, C});
      for (std::size_t b = 0; b < B; ++b)
        readout_rows(rate.row(b).data(), n, model.readout_weight, model.readout_bias, res.outputs.row(b).data());
      break;
    }
    case Readout::LastStep:
      res.outputs = Tensor({B, C});
      for (std::size_t b = 0; b < B; ++b)
        readout_rows(top.S.row(T - 1, b).data(), n, model.readout_weight, model.readout_bias,
                     res.outputs.row(b).data());
      break;
    case Readout::PerStep:
      res.outputs = Tensor({T, B, C});
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t b = 0; b < B; ++b)
          readout_rows(top.S.row(t, b).data(), n, model.readout_weight, model.readout_bias,
                       res.outputs.row(t, b).data());
      break;
  }
  return res;
}

ForwardResult forward(const Model& model, const TaskBatch& batch) { return forward(model, batch.inputs); }

// ---------------------------------------------------------------------------
// Loss

namespace {

struct OutputLoss {
  double loss = 0;
  double metric = 0;
  Tensor d_outputs;
};

// Softmax cross-entropy of one logit row; writes (p - onehot) * scale to d.
double softmax_xent(const Real* z, std::size_t C, std::size_t label, double scale, Real* d, bool* correct) {
  const Real zmax = *std::max_element(z, z + C);
  double sum = 0;
  for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - zmax);
  const double log_sum = std::log(sum) + zmax;
  if (d)
    for (std::size_t c = 0; c < C; ++c) d[c] = (std::exp(z[c] - log_sum) - (c == label ? 1.0 : 0.0)) * scale;
  if (correct) *correct = static_cast<std::size_t>(std::max_element(z, z + C) - z) == label;
  return log_sum - z[label];
}

std::size_t class_id(Real v, std::size_t C) {
  const auto id = static_cast<long long>(std::llround(v));
  if (id < 0 || static_cast<std::size_t>(id) >= C) throw ConfigError("class target out of range");
  return static_cast<std::size_t>(id);
}

OutputLoss compute_loss(const Tensor& out, const TaskBatch& batch, bool need_grad) {
  OutputLoss r;
  if (need_grad) r.d_outputs = Tensor(out.shape());
  switch (batch.loss) {
    case LossKind::Mse: {
      if (out.rank() != 2 || batch.targets.shape() != out.shape())
        throw DimensionError("mse: outputs " + shape_string(out.shape()) + " vs targets " +
                             shape_string(batch.targets.shape()));
      const double scale = 1.0 / static_cast<double>(out.size());
      double acc = 0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double e = out[i] - batch.targets[i];
        acc += e * e;
        if (need_grad) r.d_outputs[i] = 2.0 * e * scale;
      }
      r.loss = acc * scale;
      r.metric = r.loss;
      break;
    }
    case LossKind::CrossEntropyMean: {
      if (out.rank() != 2 || batch.targets.rank() != 1 || batch.targets.dim(0) != out.dim(0))
        throw DimensionError("cross-entropy: outputs " + shape_string(out.shape()) + " vs targets " +
                             shape_string(batch.targets.shape()));
      const std::size_t B = out.dim(0), C = out.dim(1);
      const double scale = 1.0 / static_cast<double>(B);
      double acc = 0;
      std::size_t hits = 0;
      for (std::size_t b = 0; b < B; ++b) {
        bool ok = false;
        acc += softmax_xent(out.row(b).data(), C, class_id(batch.targets[b], C), scale,
                            need_grad ? r.d_outputs.row(b).data() : nullptr, &ok);
        hits += ok;
      }
      r.loss = acc * scale;
      r.metric = static_cast<double>(hits) / static_cast<double>(B);
      break;
    }
    case LossKind::CrossEntropyPerStep: {
      if (out.rank() != 3 || batch.targets.rank() != 2 || batch.targets.dim(0) != out.dim(0) ||
          batch.targets.dim(1) != out.dim(1))
        throw DimensionError("per-step cross-entropy: outputs " + shape_string(out.shape()) + " vs targets " +
                             shape_string(batch.targets.shape()));
      const std::size_t T = out.dim(0), B = out.dim(1), C = out.dim(2);
      const std::size_t scored = batch.scored_steps == 0 ? T : std::min(batch.scored_steps, T);
      const double scale = 1.0 / static_cast<double>(T * B);
      double acc = 0;
      std::size_t hits = 0;
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t b = 0; b < B; ++b) {
          bool ok = false;
          acc += softmax_xent(out.row(t, b).data(), C, class_id(batch.targets.at(t, b), C), scale,
                              need_grad ? r.d_outputs.row(t, b).data() : nullptr, &ok);
          if (t >= T - scored) hits += ok;
        }
      r.loss = acc * scale;
      r.metric = static_cast<double>(hits) / static_cast<double>(scored * B);
      break;
    }
  }
  return r;
}

void check_batch(const Model& model, const TaskBatch& batch) {
  const bool per_step = model.spec.readout == Readout::PerStep;
  if (per_step != (batch.loss == LossKind::CrossEntropyPerStep))
    throw ConfigError("readout '" + to_string(model.spec.readout) + "' cannot serve loss '" + to_string(batch.loss) + "'");
}

// dO . W^T for one row: ext[k] += scale * sum_c W[k,c] dO[c].
void readout_back_row(const Tensor& W, const Real* d_out, double scale, Real* ext) {
  const std::size_t n = W.dim(0), C = W.dim(1);
  for (std::size_t k = 0; k < n; ++k) {
    const Real* w = W.raw() + k * C;
    Real acc = 0;
    for (std::size_t c = 0; c < C; ++c) acc += w[c] * d_out[c];
    ext[k] += scale * acc;
  }
}

void accumulate_outer(const Real* s, std::size_t n, const Real* d_out, std::size_t C, Tensor& dW, Tensor& db) {
  for (std::size_t k = 0; k < n; ++k) {
    if (s[k] == 0.0) continue;
    Real* row = dW.raw() + k * C;
    for (std::size_t c = 0; c < C; ++c) row[c] += s[k] * d_out[c];
  }
  for (std::size_t c = 0; c < C; ++c) db[c] += d_out[c];
}

}  // namespace

Evaluation evaluate_batch(const Model& model, const TaskBatch& batch) {
  check_batch(model, batch);
  const ForwardResult fwd = forward(model, batch);
  const OutputLoss l = compute_loss(fwd.outputs, batch, false);
  return {l.loss, l.metric};
}

LossResult loss_and_grad(const Model& model, const TaskBatch& batch, const LossOptions& options) {
  check_batch(model, batch);
  const auto& spec = model.spec;
  if (options.probe_layer && *options.probe_layer >= model.layers.size())
    throw ConfigError("probe layer " + std::to_string(*options.probe_layer) + " out of range (model has " +
                      std::to_string(model.layers.size()) + " hidden layers)");

  const ForwardResult fwd = forward(model, batch);
  OutputLoss ol = compute_loss(fwd.outputs, batch, true);

  LossResult res;
  res.loss = ol.loss;
  res.metric = ol.metric;
  auto& g = res.grads;
  g.readout_weight = Tensor(model.readout_weight.shape());
  g.readout_bias = Tensor(model.readout_bias.shape());

  const LayerTrace& top = fwd.traces.back();
  const std::size_t T = top.steps(), B = top.batch(), n = top.width(), C = spec.output_dim;
  Tensor ext({T, B, n});
  switch (spec.readout) {
    case Readout::MeanLogit: {
      const Tensor rate = decode_spike_frequency(top);
      const double inv_t = 1.0 / static_cast<double>(T);
      for (std::size_t b = 0; b < B; ++b) {
        const Real* d = ol.d_outputs.row(b).data();
        accumulate_outer(rate.row(b).data(), n, d, C, g.readout_weight, g.readout_bias);
        readout_back_row(model.readout_weight, d, inv_t, ext.row(0, b).data());
        for (std::size_t t = 1; t < T; ++t) {
          auto src = ext.row(0, b);
          std::copy(src.begin(), src.end(), ext.row(t, b).begin());
        }
      }
      break;
    }
    case Readout::LastStep:
      for (std::size_t b = 0; b < B; ++b) {
        const Real* d = ol.d_outputs.row(b).data();
        accumulate_outer(top.S.row(T - 1, b).data(), n, d, C, g.readout_weight, g.readout_bias);
        readout_back_row(model.readout_weight, d, 1.0, ext.row(T - 1, b).data());
      }
      break;
    case Readout::PerStep:
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t b = 0; b < B; ++b) {
          const Real* d = ol.d_outputs.row(t, b).data();
          accumulate_outer(top.S.row(t, b).data(), n, d, C, g.readout_weight, g.readout_bias);
          readout_back_row(model.readout_weight, d, 1.0, ext.row(t, b).data());
        }
      break;
  }

  const std::size_t L = model.layers.size();
  g.layers.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = model.layers[l];
    LayerWeights w{&layer.weight, layer.recurrent.empty() ? nullptr : &layer.recurrent, model.encoding_for(l)};
    BackwardOptions bo;
    bo.input_grad = l > 0;
    bo.record_internals = options.probe_layer && *options.probe_layer == l;
    BackwardResult br = backward_layer(fwd.traces[l], ext, spec.neuron_for(l), w, bo);
    if (bo.record_internals) res.probe = std::move(br.spike_grad);
    g.layers[l] = std::move(br.grads);
    if (l > 0) ext = std::move(br.input_grad);
  }

  if (spec.te_sharing == TeSharing::Shared) {
    g.encodings.emplace_back();
    if (!model.encodings.empty() && !model.encodings[0].empty()) {
      Tensor& dte = g.encodings[0];
      dte = Tensor(model.encodings[0].shape());
      const std::size_t width = dte.dim(1);
      for (std::size_t l = 0; l < L; ++l) {
        const Tensor& part = g.layers[l].dTE;
        if (part.empty()) continue;
        const std::size_t nl = part.dim(1);
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t k = 0; k < nl; ++k) dte[t * width + k] += part.at(t, k);
      }
    }
  } else {
    for (std::size_t l = 0; l < L; ++l) g.encodings.push_back(g.layers[l].dTE);
  }
  return res;
}

std::vector<ParamRef> param_refs(Model& model, const ModelGradients& grads) {
  std::vector<ParamRef> refs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    refs.push_back({prefix + ".weight", &model.layers[l].weight, &grads.layers.at(l).dW});
    refs.push_back({prefix + ".bias", &model.layers[l].bias, &grads.layers.at(l).db});
    if (!model.layers[l].recurrent.empty())
      refs.push_back({prefix + ".recurrent", &model.layers[l].recurrent, &grads.layers.at(l).dW_rec});
  }
  if (model.spec.te_sharing == TeSharing::Shared) {
    if (!model.encodings.empty() && !model.encodings[0].empty())
      refs.push_back({"encoding.shared", &model.encodings[0], &grads.encodings.at(0)});
  } else {
    for (std::size_t l = 0; l < model.encodings.size(); ++l)
      if (!model.encodings[l].empty())
        refs.push_back({"encoding" + std::to_string(l), &model.encodings[l], &grads.encodings.at(l)});
  }
  refs.push_back({"readout.weight", &model.readout_weight, &grads.readout_weight});
  refs.push_back({"readout.bias", &model.readout_bias, &grads.readout_bias});
  return refs;
}

std::vector<Tensor*> gradient_tensors(ModelGradients& grads) {
  std::vector<Tensor*> out;
  for (auto& l : grads.layers) {
    out.push_back(&l.dW);
    out.push_back(&l.db);
    if (!l.dW_rec.empty()) out.push_back(&l.dW_rec);
  }
  for (auto& e : grads.encodings)
    if (!e.empty()) out.push_back(&e);
  out.push_back(&grads.readout_weight);
  out.push_back(&grads.readout_bias);
  return out;
}

}  // namespace celif
