#include <doctest.h>

#include <cmath>

#include "celif/error.hpp"
#include "celif/optimizer.hpp"
#include "celif/rng.hpp"
#include "celif/tensor.hpp"
#include "support.hpp"

using namespace celif;
using celif::testing::rel_error;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      long double acc = 0;
      for (std::size_t k = 0; k < a.dim(1); ++k) acc += static_cast<long double>(a.at(i, k)) * b.at(k, j);
      c.at(i, j) = static_cast<double>(acc);
    }
  return c;
}

}  // namespace

TEST_CASE("tensor construction validates shape and data") {
  CHECK_THROWS_AS(Tensor({0, 2}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<Real>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor({1, 1, 1, 1}), DimensionError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5);
  CHECK_THROWS_AS(t.dim(2), DimensionError);
}

TEST_CASE("matmul examples") {
  const Tensor id({2, 2}, {1, 0, 0, 1});
  const Tensor v({2, 1}, {3, 4});
  CHECK(matmul(id, v) == v);
  CHECK(matmul(Tensor({1, 2}, {1, 2}), v) == Tensor({1, 1}, {11}));
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST_CASE("matmul matches triple-loop oracle on random instances up to 32x32") {
  Rng rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + rng.below(32), k = 1 + rng.below(32), n = 1 + rng.below(32);
    const Tensor a = uniform_fill(rng, -1, 1, {m, k});
    const Tensor b = uniform_fill(rng, -1, 1, {k, n});
    CHECK(rel_error(matmul(a, b), naive_matmul(a, b)) <= 1e-6);
  }
  Rng r2(7);
  const Tensor a = uniform_fill(r2, -1, 1, {5, 4}), b = uniform_fill(r2, -1, 1, {4, 3});
  CHECK(rel_error(matmul(a, b), naive_matmul(a, b)) <= 1e-6);
}

TEST_CASE("elementwise examples and broadcasting") {
  const Tensor a({2}, {1, 2});
  CHECK(elementwise(ElementwiseOp::Mul, a, Tensor({2}, {0, 0})) == Tensor({2}, {0, 0}));
  CHECK(elementwise(ElementwiseOp::Mul, a, Tensor({2}, {3, 4})) == Tensor({2}, {3, 8}));
  CHECK(elementwise(ElementwiseOp::Add, a, Tensor({2}, {3, 4})) == Tensor({2}, {4, 6}));
  CHECK(elementwise(ElementwiseOp::Sub, a, Tensor({2}, {3, 4})) == Tensor({2}, {-2, -2}));

  // A [T]-vector against a [T x n] matrix tiles along the columns.
  Rng rng(3);
  const std::size_t T = 5, n = 3;
  const Tensor m = uniform_fill(rng, -1, 1, {T, n});
  const Tensor v = uniform_fill(rng, -1, 1, {T});
  Tensor tiled({T, n});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < n; ++j) tiled.at(t, j) = v[t];
  CHECK(elementwise(ElementwiseOp::Mul, m, v) == elementwise(ElementwiseOp::Mul, m, tiled));

  // A neuron-axis vector tiles over rows.
  const Tensor w = uniform_fill(rng, -1, 1, {n});
  Tensor rows({T, n});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < n; ++j) rows.at(t, j) = w[j];
  CHECK(elementwise(ElementwiseOp::Add, m, w) == elementwise(ElementwiseOp::Add, m, rows));

  CHECK_THROWS_AS(elementwise(ElementwiseOp::Add, m, Tensor({4})), DimensionError);
  CHECK_THROWS_AS(elementwise(ElementwiseOp::Add, Tensor({2, 2}), Tensor({2, 3})), DimensionError);
}

TEST_CASE("elementwise rejects non-finite results") {
  const Tensor big({1}, {1e308});
  CHECK_THROWS_AS(elementwise(ElementwiseOp::Mul, big, big), DimensionError);
}

TEST_CASE("adam: one step on a scalar matches hand evaluation") {
  Tensor x({1}, {0.0});
  Tensor g({1}, {1.0});
  AdamState st;
  st.config.learning_rate = 1e-3;
  std::vector<ParamRef> p{{"x", &x, &g}};
  adam_step(p, st);
  // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1; step = lr * 1 / (1 + eps).
  const double expected = -1e-3 * 1.0 / (1.0 + 1e-8);
  CHECK(x[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(st.step == 1);
  CHECK(st.first_moment[0][0] == doctest::Approx(0.1));
  CHECK(st.second_moment[0][0] == doctest::Approx(0.001));
}

TEST_CASE("adam: zero gradients are a fixed point and moments decay") {
  Tensor x({3}, {1, -2, 3});
  Tensor g({3}, {0.5, 0.5, 0.5});
  AdamState st;
  std::vector<ParamRef> p{{"x", &x, &g}};
  adam_step(p, st);
  const double m0 = st.first_moment[0][0], v0 = st.second_moment[0][0];
  g.fill(0);
  for (int i = 0; i < 5; ++i) adam_step(p, st);
  // Parameters still move while moments are non-zero, so check the moments.
  CHECK(st.first_moment[0][0] == doctest::Approx(m0 * std::pow(0.9, 5)));
  CHECK(st.second_moment[0][0] == doctest::Approx(v0 * std::pow(0.999, 5)));

  Tensor y({2}, {1, 2});
  Tensor zero({2}, 0.0);
  AdamState fresh;
  std::vector<ParamRef> q{{"y", &y, &zero}};
  for (int i = 0; i < 10; ++i) adam_step(q, fresh);
  CHECK(y == Tensor({2}, {1, 2}));
  CHECK(fresh.step == 10);
}

TEST_CASE("adam: 100 steps on x^2 from 1 with lr 0.1") {
  Tensor x({1}, {1.0});
  Tensor g({1});
  AdamState st;
  st.config.learning_rate = 0.1;
  std::vector<ParamRef> p{{"x", &x, &g}};
  for (int i = 0; i < 100; ++i) {
    g[0] = 2 * x[0];
    adam_step(p, st);
  }
  CHECK(std::abs(x[0]) < 0.5);
}

TEST_CASE("adam: non-finite gradient names the parameter and changes nothing") {
  Tensor a({1}, {1.0}), b({1}, {2.0});
  Tensor ga({1}, {0.1}), gb({1}, {NAN});
  AdamState st;
  std::vector<ParamRef> p{{"alpha", &a, &ga}, {"bravo", &b, &gb}};
  try {
    adam_step(p, st);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("bravo") != std::string::npos);
  }
  CHECK(a[0] == 1.0);
  CHECK(st.step == 0);
}

TEST_CASE("adam: shape mismatch is rejected") {
  Tensor a({2}), ga({3});
  AdamState st;
  std::vector<ParamRef> p{{"a", &a, &ga}};
  CHECK_THROWS_AS(adam_step(p, st), DimensionError);
}

TEST_CASE("clip_grad_norm rescales to the cap") {
  Tensor a({2}, {3, 0}), b({1}, {4});
  std::vector<Tensor*> gs{&a, &b};
  CHECK(clip_grad_norm(gs, 1.0) == doctest::Approx(5.0));
  CHECK(a[0] == doctest::Approx(0.6));
  CHECK(b[0] == doctest::Approx(0.8));
}

TEST_CASE("gaussian_fill statistics and edge cases") {
  Rng rng(11);
  const Tensor t = gaussian_fill(rng, 0.01, 0.01, {100000});
  double mean = 0;
  for (double x : t.data()) mean += x;
  mean /= static_cast<double>(t.size());
  double var = 0;
  for (double x : t.data()) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(t.size() - 1));
  CHECK(mean >= 0.0097);
  CHECK(mean <= 0.0103);
  // Sample std of 1e5 normals: relative standard error about 1/sqrt(2N).
  CHECK(std::abs(sd - 0.01) <= 3 * 0.01 / std::sqrt(2.0 * 100000));

  Rng r2(5);
  const Tensor c = gaussian_fill(r2, 0.25, 0.0, {50});
  for (double x : c.data()) CHECK(x == 0.25);
  CHECK_THROWS_AS(gaussian_fill(r2, 0, -1, {2}), ConfigError);

  Rng a(99), b(99);
  CHECK(gaussian_fill(a, 0, 1, {64}) == gaussian_fill(b, 0, 1, {64}));
}

TEST_CASE("rng streams are deterministic and purpose-separated") {
  Rng root(123);
  Rng a = root.derive("data", 4), b = root.derive("data", 4), c = root.derive("data", 5), d = root.derive("weights", 4);
  const auto va = a.next_u64();
  CHECK(va == b.next_u64());
  CHECK(va != c.next_u64());
  CHECK(va != d.next_u64());

  // derive() does not depend on how far the parent has advanced.
  Rng moved(123);
  for (int i = 0; i < 10; ++i) moved.next_u64();
  CHECK(moved.derive("data", 4).next_u64() == va);

  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(u.below(7) < 7);
  }
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}
