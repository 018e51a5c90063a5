#include <doctest.h>

#include <cmath>
#include <vector>

#include "celif/error.hpp"
#include "celif/neuron.hpp"
#include "celif/rng.hpp"

using namespace celif;

namespace {

NeuronConfig cfg_of(NeuronKind kind) {
  NeuronConfig c;
  c.kind = kind;
  return c;
}

LayerState scalar_state(double v, double theta, double s) {
  return {Tensor({1, 1}, {v}), Tensor({1, 1}, {theta}), Tensor({1, 1}, {s}), 1};
}

Tensor scalar(double x) { return Tensor({1, 1}, {x}); }

std::vector<double> te_row(double x) { return {x}; }

// Runs `steps` random inputs through one layer, returning every spike.
std::vector<double> spike_train(const NeuronConfig& cfg, std::size_t steps, std::uint64_t seed, double te_value) {
  Rng rng(seed);
  const std::size_t batch = 3, n = 5;
  LayerState st = initial_state(batch, n, cfg);
  std::vector<double> te(n, te_value), out;
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor I = uniform_fill(rng, -0.2, 0.6, {batch, n});
    st = neuron_step(st, I, std::span<const Real>(te), cfg);
    for (double s : st.S.data()) out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("initial state") {
  const LayerState st = initial_state(2, 3, NeuronConfig{});
  CHECK(st.t == 0);
  for (double x : st.V.data()) CHECK(x == 0.0);
  for (double x : st.S.data()) CHECK(x == 0.0);
  for (double x : st.Theta.data()) CHECK(x == 0.3);
}

TEST_CASE("lif_step examples") {
  const NeuronConfig c = cfg_of(NeuronKind::Lif);
  LayerState a = lif_step(scalar_state(0, 0.3, 0), scalar(0), c);
  CHECK(a.V[0] == 0.0);
  CHECK(a.S[0] == 0.0);

  LayerState b = lif_step(scalar_state(1.0, 0.3, 0), scalar(0), c);
  CHECK(b.V[0] == doctest::Approx(0.5));
  CHECK(b.S[0] == 1.0);
  CHECK(b.Theta[0] == 0.3);

  LayerState d = lif_step(scalar_state(1.0, 0.3, 1), scalar(0.2), c);
  CHECK(d.V[0] == doctest::Approx(0.2));
  CHECK(d.S[0] == 0.0);
}

TEST_CASE("alif_step examples") {
  NeuronConfig c = cfg_of(NeuronKind::Alif);
  c.gamma = 0.1;
  c.beta = 0.99;
  CHECK(alif_step(scalar_state(0, 0.3, 0), scalar(0), c).Theta[0] == doctest::Approx(0.3));
  CHECK(alif_step(scalar_state(0, 0.3, 1), scalar(0), c).Theta[0] == doctest::Approx(0.4));
}

TEST_CASE("celif_step examples") {
  NeuronConfig c = cfg_of(NeuronKind::CeLif);
  const auto zero = te_row(0.0);
  const LayerState rest = celif_step(scalar_state(0.2, 0.3, 0), scalar(0.1), std::span<const Real>(zero), c,
                                     CeVariant::VoltageTimesEncoding);
  CHECK(rest.Theta[0] == doctest::Approx(0.3));

  const auto te = te_row(0.02);
  const LayerState up =
      celif_step(scalar_state(0.5, 0.3, 0), scalar(0), std::span<const Real>(te), c, CeVariant::VoltageTimesEncoding);
  CHECK(up.Theta[0] == doctest::Approx(0.31));

  // TE * V_prev = -0.05 lowers the threshold.
  const auto neg = te_row(-0.1);
  const LayerState down =
      celif_step(scalar_state(0.5, 0.3, 0), scalar(0), std::span<const Real>(neg), c, CeVariant::VoltageTimesEncoding);
  CHECK(down.Theta[0] == doctest::Approx(0.25));
  CHECK(down.Theta[0] < c.theta0);
}

TEST_CASE("celif variants compute their contextual embeddings") {
  NeuronConfig c = cfg_of(NeuronKind::CeLif);
  c.beta = 0.5;
  const auto te = te_row(0.04);
  const LayerState prev = scalar_state(0.2, 0.5, 1);  // theta_prev - theta0 = 0.2
  const double carry = 0.5 * 0.2 + 0.3;
  auto theta = [&](CeVariant v) {
    return celif_step(prev, scalar(0), std::span<const Real>(te), c, v).Theta[0];
  };
  CHECK(theta(CeVariant::SpikePrev) == doctest::Approx(carry + 1.0));
  CHECK(theta(CeVariant::VoltagePrev) == doctest::Approx(carry + 0.2));
  CHECK(theta(CeVariant::Encoding) == doctest::Approx(carry + 0.04));
  CHECK(theta(CeVariant::VoltagePlusEncoding) == doctest::Approx(carry + 0.24));
  CHECK(theta(CeVariant::SpikeTimesEncoding) == doctest::Approx(carry + 0.04));
  CHECK(theta(CeVariant::VoltageTimesEncoding) == doctest::Approx(carry + 0.008));
}

TEST_CASE("encoding variants require a TE row") {
  NeuronConfig c = cfg_of(NeuronKind::CeLif);
  for (int v = 3; v <= 6; ++v)
    CHECK_THROWS_AS(celif_step(scalar_state(0, 0.3, 0), scalar(0), std::nullopt, c, ce_variant_from_int(v)), ConfigError);
  CHECK_NOTHROW(celif_step(scalar_state(0, 0.3, 0), scalar(0), std::nullopt, c, CeVariant::SpikePrev));
  CHECK_NOTHROW(celif_step(scalar_state(0, 0.3, 0), scalar(0), std::nullopt, c, CeVariant::VoltagePrev));
  CHECK_THROWS_AS(ce_variant_from_int(7), ConfigError);
}

TEST_CASE("dynamics errors") {
  const NeuronConfig c = cfg_of(NeuronKind::Lif);
  CHECK_THROWS_AS(lif_step(scalar_state(0, 0.3, 0), scalar(NAN), c), DynamicsError);
  CHECK_THROWS_AS(lif_step(scalar_state(0, 0.3, 0.5), scalar(0), c), DynamicsError);
  CHECK_THROWS_AS(lif_step(scalar_state(0, 0.3, 0), Tensor({1, 2}), c), DimensionError);
}

TEST_CASE("config validation") {
  NeuronConfig c;
  CHECK_NOTHROW(c.validate());
  for (double a : {0.0, 1.0, -0.1}) {
    NeuronConfig bad;
    bad.alpha = a;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
  NeuronConfig b1;
  b1.beta = 1.0;
  CHECK_NOTHROW(b1.validate());
  b1.beta = 1.01;
  CHECK_THROWS_AS(b1.validate(), ConfigError);
  NeuronConfig t0;
  t0.theta0 = 0;
  CHECK_THROWS_AS(t0.validate(), ConfigError);
  NeuronConfig sg;
  sg.gamma_sg = 0;
  CHECK_THROWS_AS(sg.validate(), ConfigError);
  NeuronConfig g;
  g.gamma = -1;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  NeuronConfig r;
  r.v_reset = 0.1;
  CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("surrogate examples") {
  CHECK(boxcar(0.3, 0.3, 0.2) == 1.0);
  CHECK(boxcar(0.6, 0.3, 0.2) == 0.0);
  CHECK(boxcar(0.45, 0.3, 0.2) == 1.0);
  const Tensor g = surrogate_grad(Tensor({3}, {0.3, 0.6, 0.45}), Tensor({3}, {0.3, 0.3, 0.3}), 0.2);
  CHECK(g == Tensor({3}, {1, 0, 1}));
  CHECK_THROWS_AS(surrogate_grad(Tensor({2}), Tensor({3}), 0.2), DimensionError);
}

TEST_CASE("spikes are binary and a spike removes the carry") {
  NeuronConfig c = cfg_of(NeuronKind::CeLif);
  Rng rng(9);
  LayerState st = initial_state(4, 6, c);
  std::vector<double> te(6, 0.05);
  for (int t = 0; t < 200; ++t) {
    const Tensor I = uniform_fill(rng, -0.3, 0.8, {4, 6});
    const LayerState next = neuron_step(st, I, std::span<const Real>(te), c);
    for (std::size_t i = 0; i < next.S.size(); ++i) {
      CHECK((next.S[i] == 0.0 || next.S[i] == 1.0));
      if (st.S[i] == 1.0) CHECK(next.V[i] == I[i]);
    }
    st = next;
  }
}

TEST_CASE("reductions to LIF over 1000 random steps") {
  const auto lif = spike_train(cfg_of(NeuronKind::Lif), 1000, 77, 0.0);

  NeuronConfig ce = cfg_of(NeuronKind::CeLif);
  CHECK(spike_train(ce, 1000, 77, 0.0) == lif);

  NeuronConfig alif = cfg_of(NeuronKind::Alif);
  alif.gamma = 0.0;
  CHECK(spike_train(alif, 1000, 77, 0.0) == lif);

  // Sanity: the trains are not trivially empty or saturated.
  double rate = 0;
  for (double s : lif) rate += s;
  rate /= static_cast<double>(lif.size());
  CHECK(rate > 0.05);
  CHECK(rate < 0.95);
}

TEST_CASE("variant 1 with unit gain equals ALIF with gamma 1") {
  NeuronConfig ce = cfg_of(NeuronKind::CeLif);
  ce.variant = CeVariant::SpikePrev;
  NeuronConfig alif = cfg_of(NeuronKind::Alif);
  alif.gamma = 1.0;
  Rng rng(4);
  LayerState a = initial_state(2, 4, ce), b = initial_state(2, 4, alif);
  for (int t = 0; t < 300; ++t) {
    const Tensor I = uniform_fill(rng, -0.5, 1.5, {2, 4});
    a = neuron_step(a, I, std::nullopt, ce);
    b = neuron_step(b, I, std::nullopt, alif);
    CHECK(a.S == b.S);
    CHECK(a.V == b.V);
    CHECK(a.Theta == b.Theta);
  }
}

TEST_CASE("threshold decays geometrically without embedding input") {
  // CE = V[t-1] TE[t] with TE = 0 leaves only the beta recursion.
  NeuronConfig c = cfg_of(NeuronKind::CeLif);
  c.beta = 0.9;
  const double theta_start = 0.8;
  LayerState st{Tensor({1, 1}, 0.0), Tensor({1, 1}, theta_start), Tensor({1, 1}, 0.0), 0};
  std::vector<double> te(1, 0.0);
  for (int t = 1; t <= 200; ++t) {
    st = celif_step(st, scalar(0.0), std::span<const Real>(te), c, CeVariant::VoltageTimesEncoding);
    const double expected = std::pow(c.beta, t) * (theta_start - c.theta0);
    CHECK(std::abs(std::abs(st.Theta[0] - c.theta0) - std::abs(expected)) <= 1e-9);
    CHECK(st.S[0] == 0.0);
  }
}
