#include <doctest.h>

#include <cmath>

#include "celif/bptt.hpp"
#include "celif/error.hpp"
#include "celif/network.hpp"
#include "support.hpp"

using namespace celif;
using namespace celif::testing;

TEST_CASE("zero upstream gradient gives exactly zero gradients") {
  for (NeuronKind kind : {NeuronKind::Lif, NeuronKind::Alif, NeuronKind::CeLif}) {
    NeuronConfig cfg;
    cfg.kind = kind;
    const Model m = passthrough_model(cfg, 5, 3, 0.05);
    Rng rng(2);
    const LayerTrace tr = trace_for(m, uniform_fill(rng, 0, 0.6, {5, 2, 3}));
    const auto r = backward_layer(tr, Tensor({5, 2, 3}), cfg, weights_of(m));
    CHECK(max_abs(r.grads.dW) == 0.0);
    CHECK(max_abs(r.grads.db) == 0.0);
    CHECK(max_abs(r.input_grad) == 0.0);
    if (!r.grads.dTE.empty()) CHECK(max_abs(r.grads.dTE) == 0.0);
  }
}

TEST_CASE("tiny single-layer net matches the oracle (n=3, batch=1, T=4)") {
  for (NeuronKind kind : {NeuronKind::Lif, NeuronKind::Alif, NeuronKind::CeLif}) {
    Rng rng(31);
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden_dims = {3};
    spec.output_dim = 2;
    spec.seq_len = 4;
    spec.neuron.kind = kind;
    spec.readout = Readout::MeanLogit;
    Model m = init_model(spec, rng, InitOptions{0.1, 0.3});
    for (auto& x : m.layers[0].weight.data()) x = rng.uniform(-1, 1);
    TaskBatch b;
    b.seq_len = 4;
    b.loss = LossKind::CrossEntropyMean;
    b.inputs = uniform_fill(rng, 0, 1, {4, 1, 2});
    b.targets = Tensor({1}, {1});
    const auto cmp = compare_with_oracle(m, b);
    INFO(to_string(kind), " worst ", cmp.worst_name);
    CHECK(cmp.scale > 0);
    CHECK(cmp.worst <= 1e-6);
  }
}

TEST_CASE("two-layer oracle equivalence over 20 seeds per neuron kind") {
  for (NeuronKind kind : {NeuronKind::Lif, NeuronKind::Alif, NeuronKind::CeLif}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      TinyCase tc = tiny_case(kind, seed);
      const auto cmp = compare_with_oracle(tc.model, tc.batch);
      INFO(to_string(kind), " seed ", seed, " worst ", cmp.worst_name);
      CHECK(cmp.worst <= 1e-6);
    }
  }
}

TEST_CASE("oracle equivalence covers every CE variant, recurrence and readouts") {
  for (int v = 1; v <= 6; ++v) {
    TinyCase tc = tiny_case(NeuronKind::CeLif, 100 + v);
    tc.model.spec.neuron.variant = ce_variant_from_int(v);
    if (!needs_encoding(ce_variant_from_int(v))) {
      // Encodings exist only for variants that read them.
      Rng r(5);
      tc.model = init_model(tc.model.spec, r);
      for (auto& l : tc.model.layers) {
        for (auto& x : l.weight.data()) x = r.uniform(-1, 1);
        for (auto& x : l.bias.data()) x = r.uniform(0, 0.3);
      }
    }
    const auto cmp = compare_with_oracle(tc.model, tc.batch);
    INFO("variant ", v, " worst ", cmp.worst_name);
    CHECK(cmp.worst <= 1e-6);
  }
  for (NeuronKind kind : {NeuronKind::Lif, NeuronKind::Alif, NeuronKind::CeLif})
    for (Readout ro : {Readout::MeanLogit, Readout::LastStep, Readout::PerStep}) {
      TinyCase tc = tiny_case(kind, 7, Connectivity::Recurrent, ro);
      const auto cmp = compare_with_oracle(tc.model, tc.batch);
      INFO(to_string(kind), " ", to_string(ro), " worst ", cmp.worst_name);
      CHECK(cmp.worst <= 1e-6);
    }
}

TEST_CASE("ALIF with gamma 0 backpropagates exactly like LIF") {
  NeuronConfig lif;
  lif.kind = NeuronKind::Lif;
  NeuronConfig alif;
  alif.kind = NeuronKind::Alif;
  alif.gamma = 0;
  const Model m = passthrough_model(lif, 8, 3, 0);
  Rng rng(8);
  const LayerTrace tr = trace_for(m, uniform_fill(rng, 0, 0.7, {8, 2, 3}));
  const Tensor ext = uniform_fill(rng, -1, 1, {8, 2, 3});
  const auto a = backward_lif(tr, ext, lif, weights_of(m));
  const auto b = backward_alif(tr, ext, alif, weights_of(m));
  CHECK(a.grads.dW == b.grads.dW);
  CHECK(a.grads.db == b.grads.db);
  CHECK(a.input_grad == b.input_grad);
}

TEST_CASE("no surrogate window anywhere: weight gradient vanishes") {
  NeuronConfig cfg;
  cfg.kind = NeuronKind::Alif;
  Model m = passthrough_model(cfg, 6, 2, 0);
  // Constant current 1.5 keeps |V - Theta| >= 0.2 at every step.
  Tensor I({6, 1, 2}, 1.5);
  const LayerTrace tr = trace_for(m, I);
  for (std::size_t i = 0; i < tr.V.size(); ++i) CHECK(boxcar(tr.V[i], tr.Theta[i], cfg.gamma_sg) == 0.0);
  Rng rng(3);
  const auto r = backward_alif(tr, uniform_fill(rng, -1, 1, {6, 1, 2}), cfg, weights_of(m));
  CHECK(max_abs(r.grads.dW) == 0.0);

  TaskBatch b;
  b.seq_len = 6;
  b.loss = LossKind::Mse;
  b.inputs = I;
  b.targets = Tensor({1, 1}, {0.7});
  const auto cmp = compare_with_oracle(m, b);
  CHECK(cmp.worst <= 1e-6);
}

TEST_CASE("single step LIF gradient equals g' * dL/dS * S_in") {
  NeuronConfig cfg;
  cfg.kind = NeuronKind::Lif;
  ModelSpec spec;
  spec.input_dim = 2;
  spec.hidden_dims = {1};
  spec.output_dim = 1;
  spec.seq_len = 1;
  spec.neuron = cfg;
  spec.readout = Readout::LastStep;
  Model m = init_model(spec, Rng(1));
  m.layers[0].weight = Tensor({2, 1}, {0.2, 0.15});
  const Tensor in({1, 1, 2}, {1.0, 0.0});
  const LayerTrace tr = trace_for(m, in);
  const double gp = boxcar(tr.V[0], tr.Theta[0], cfg.gamma_sg);
  CHECK(gp == 1.0);
  const auto r = backward_lif(tr, Tensor({1, 1, 1}, {0.7}), cfg, weights_of(m));
  CHECK(r.grads.dW.at(0, 0) == doctest::Approx(gp * 0.7 * 1.0));
  CHECK(r.grads.dW.at(1, 0) == 0.0);
  CHECK(r.grads.db[0] == doctest::Approx(0.7));
}

TEST_CASE("gradient highway reaches the first step of a spike-free CE-LIF neuron") {
  NeuronConfig cfg;
  cfg.alpha = 0.5;
  cfg.beta = 0.99;
  const std::size_t T = 60;
  const double c = 0.01, seed_grad = 1.0;
  const Model m = passthrough_model(cfg, T, 1, c);
  Tensor I({T, 1, 1}, 0.0);
  I[T - 1] = 0.2;
  const LayerTrace tr = trace_for(m, I);
  for (double s : tr.S.data()) REQUIRE(s == 0.0);
  Tensor ext({T, 1, 1}, 0.0);
  ext[T - 1] = seed_grad;
  const auto r = backward_celif(tr, ext, cfg, weights_of(m), {true, true});

  const double a = cfg.alpha, b = cfg.beta;
  const double k = static_cast<double>(T - 1);
  const double closed = seed_grad * (std::pow(a, k) - c * (std::pow(b, k) - std::pow(a, k)) / (b - a));
  const double dv1 = r.voltage_grad[0];
  CHECK(std::abs(dv1 - closed) <= 1e-9);
  const double lif_only = std::pow(a, k) * std::abs(r.voltage_grad[T - 1]);
  CHECK(std::abs(dv1) >= 1e6 * lif_only);

  // Without the encoding only the decayed LIF path is left.
  const Model plain = passthrough_model(cfg, T, 1, 0.0);
  const auto r0 = backward_celif(trace_for(plain, I), ext, cfg, weights_of(plain), {true, true});
  CHECK(r0.voltage_grad[0] == doctest::Approx(std::pow(a, k)).epsilon(1e-12));
}

TEST_CASE("threshold gradient equals the accumulated sum of direct terms") {
  NeuronConfig cfg;
  cfg.beta = 0.9;
  const std::size_t T = 30, n = 3;
  const Model m = passthrough_model(cfg, T, n, 0.2);
  Rng rng(12);
  const Tensor I = uniform_fill(rng, 0.0, 0.15, {T, 1, n});
  const LayerTrace tr = trace_for(m, I);
  for (double s : tr.S.data()) REQUIRE(s == 0.0);
  const Tensor ext = uniform_fill(rng, -1, 1, {T, 1, n});
  const auto r = backward_celif(tr, ext, cfg, weights_of(m), {true, true});
  std::size_t window_hits = 0;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < T; ++t) {
      double sum = 0;
      for (std::size_t i = t; i < T; ++i) {
        const double gp = boxcar(tr.V.at(i, 0, k), tr.Theta.at(i, 0, k), cfg.gamma_sg);
        window_hits += gp > 0;
        sum += -r.spike_grad.at(i, 0, k) * gp * std::pow(cfg.beta, static_cast<double>(i - t));
      }
      CHECK(std::abs(r.threshold_grad.at(t, 0, k) - sum) <= 1e-9);
    }
  CHECK(window_hits > 0);
}

TEST_CASE("backward is linear in the upstream gradient") {
  TinyCase tc = tiny_case(NeuronKind::CeLif, 3);
  const ForwardResult fwd = forward(tc.model, tc.batch);
  const LayerTrace& tr = fwd.traces[1];
  const LayerWeights w{&tc.model.layers[1].weight, nullptr, tc.model.encoding_for(1)};
  Rng rng(4);
  const Shape sh = tr.V.shape();
  const Tensor e1 = uniform_fill(rng, -1, 1, sh), e2 = uniform_fill(rng, -1, 1, sh);
  const double a = 0.7, b = -1.3;
  Tensor mix(sh);
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * e1[i] + b * e2[i];
  const NeuronConfig& cfg = tc.model.spec.neuron;
  const auto r1 = backward_celif(tr, e1, cfg, w), r2 = backward_celif(tr, e2, cfg, w), rm = backward_celif(tr, mix, cfg, w);
  auto combo = [&](const Tensor& x, const Tensor& y) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * y[i];
    return out;
  };
  CHECK(rel_error(rm.grads.dW, combo(r1.grads.dW, r2.grads.dW)) <= 1e-12);
  CHECK(rel_error(rm.grads.db, combo(r1.grads.db, r2.grads.db)) <= 1e-12);
  CHECK(rel_error(rm.grads.dTE, combo(r1.grads.dTE, r2.grads.dTE)) <= 1e-12);
  CHECK(rel_error(rm.input_grad, combo(r1.input_grad, r2.input_grad)) <= 1e-12);
}

TEST_CASE("backward error paths") {
  NeuronConfig cfg;
  const Model m = passthrough_model(cfg, 4, 2, 0.1);
  Rng rng(1);
  const LayerTrace tr = trace_for(m, uniform_fill(rng, 0, 0.5, {4, 1, 2}));
  CHECK_THROWS_AS(backward_celif(tr, Tensor({4, 1, 3}), cfg, weights_of(m)), DimensionError);
  CHECK_THROWS_AS(backward_lif(tr, Tensor({4, 1, 2}), cfg, weights_of(m)), ConfigError);
  LayerWeights no_te = weights_of(m);
  no_te.encoding = nullptr;
  CHECK_THROWS_AS(backward_celif(tr, Tensor({4, 1, 2}), cfg, no_te), ConfigError);
  Tensor bad({4, 1, 2}, 0.0);
  bad[4] = INFINITY;
  try {
    backward_celif(tr, bad, cfg, weights_of(m));
    FAIL("expected GradientError");
  } catch (const GradientError& e) {
    CHECK(std::string(e.what()).find("timestep 3") != std::string::npos);
  }
}

TEST_CASE("oracle refuses large instances and handles trivial ones") {
  TinyCase tc = tiny_case(NeuronKind::Lif, 1, Connectivity::Feedforward, Readout::MeanLogit, 7);
  CHECK_THROWS_AS(oracle::oracle_grad(tc.model, tc.batch, 0), ConfigError);

  ModelSpec wide;
  wide.input_dim = 1;
  wide.hidden_dims = {5};
  wide.seq_len = 3;
  const Model big = init_model(wide, Rng(1));
  TaskBatch b;
  b.inputs = Tensor({3, 1, 1});
  b.targets = Tensor({1});
  b.loss = LossKind::CrossEntropyMean;
  CHECK_THROWS_AS(oracle::oracle_grad(big, b, 0), ConfigError);

  // Zero-readout network with perfect regression target: zero loss, zero grads.
  ModelSpec spec;
  spec.input_dim = 1;
  spec.hidden_dims = {2};
  spec.output_dim = 1;
  spec.seq_len = 3;
  spec.readout = Readout::LastStep;
  Model m = init_model(spec, Rng(2), InitOptions{0.01, 0.01, true});
  TaskBatch z;
  z.inputs = Tensor({3, 1, 1}, 0.1);
  z.targets = Tensor({1, 1}, 0.0);
  z.loss = LossKind::Mse;
  CHECK(oracle::oracle_loss(m, z) == 0.0);
  for (std::size_t i = 0; i < m.named_parameters().size(); ++i) CHECK(max_abs(oracle::oracle_grad(m, z, i)) == 0.0);
}

TEST_CASE("readout-only path reduces to linear regression") {
  // Hidden neurons that never fire leave only the readout bias trainable.
  ModelSpec spec;
  spec.input_dim = 1;
  spec.hidden_dims = {2};
  spec.output_dim = 1;
  spec.seq_len = 3;
  spec.readout = Readout::LastStep;
  Model m = init_model(spec, Rng(3));
  m.layers[0].weight.fill(0);
  m.layers[0].bias.fill(-5);
  m.readout_bias[0] = 0.25;
  TaskBatch b;
  b.inputs = Tensor({3, 2, 1}, 0.5);
  b.targets = Tensor({2, 1}, {1.0, 0.0});
  b.loss = LossKind::Mse;
  const LossResult lr = loss_and_grad(m, b);
  // d/db mean((b - y)^2) = 2 mean(b - y).
  CHECK(lr.grads.readout_bias[0] == doctest::Approx(2 * ((0.25 - 1.0) + (0.25 - 0.0)) / 2));
  CHECK(max_abs(lr.grads.readout_weight) == 0.0);
  CHECK(oracle::oracle_grad(m, b, m.named_parameters().size() - 1)[0] == doctest::Approx(lr.grads.readout_bias[0]));
}
