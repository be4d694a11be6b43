#include <cmath>
#include <random>

#include "common/errors.hpp"
#include "doctest.h"
#include "tensor/gradcheck.hpp"
#include "tensor/graph.hpp"
#include "tensor/special.hpp"

using namespace ehrgen;
using namespace ehrgen::ad;

namespace {

Parameter random_param(const std::string& name, size_t r, size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Parameter p(name, Tensor(r, c));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : p.value.data) v = u(rng);
  return p;
}

// Sum of elementwise products with a fixed random weight, so every output entry matters.
Var project(Graph& g, Var x, uint64_t seed) {
  const Tensor& v = g.value(x);
  Tensor w(v.rows, v.cols);
  Rng rng = make_rng(seed, {0x77});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& e : w.data) e = u(rng);
  return sum(g, mul(g, x, g.constant(std::move(w))));
}

double check(const LossBuilder& build, std::vector<Parameter*> params) {
  return grad_check(build, params, 1e-6).max_rel_error;
}

}  // namespace

TEST_CASE("special functions against known values") {
  CHECK(digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-12));
  CHECK(digamma(0.5) == doctest::Approx(-1.9635100260214235).epsilon(1e-12));
  CHECK(digamma(10.0) == doctest::Approx(2.251752589066721).epsilon(1e-12));
  // Exponential(2) density at 0.5 is 2 e^{-1}.
  CHECK(ehrgen::gamma_log_pdf(1.0, 2.0, 0.5) == doctest::Approx(std::log(2.0) - 1.0).epsilon(1e-12));
  // digamma(x+1) = digamma(x) + 1/x
  for (double x : {0.3, 1.7, 4.2, 25.0}) CHECK(digamma(x + 1) - digamma(x) == doctest::Approx(1.0 / x).epsilon(1e-10));
}

TEST_CASE("forward values of elementwise ops") {
  Graph g;
  Tensor t(1, 3);
  t.data = {-2.0, 0.0, 3.0};
  Var x = g.constant(t);
  const auto& ge = g.value(gelu(g, x));
  for (size_t i = 0; i < 3; ++i) {
    const double v = t.data[i];
    const double want = 0.5 * v * (1 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
    CHECK(ge.data[i] == doctest::Approx(want).epsilon(1e-14));
  }
  const auto& sp = g.value(softplus(g, x));
  for (size_t i = 0; i < 3; ++i) CHECK(sp.data[i] == doctest::Approx(std::log1p(std::exp(t.data[i]))).epsilon(1e-14));
  Tensor big(1, 1, 800.0);
  CHECK(g.value(softplus(g, g.constant(big))).item() == doctest::Approx(800.0));
  const auto& sm = g.value(softmax_rows(g, x));
  const double z = std::exp(-2.0) + 1.0 + std::exp(3.0);
  CHECK(sm.data[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
}

TEST_CASE("layer norm forward") {
  Graph g;
  Tensor t(2, 4);
  t.data = {1, 2, 3, 4, -1, 0, 0, 5};
  Tensor gamma(1, 4, 2.0), beta(1, 4, 0.5);
  const auto& y = g.value(layer_norm(g, g.constant(t), g.constant(gamma), g.constant(beta)));
  for (size_t r = 0; r < 2; ++r) {
    double mean = 0, var = 0;
    for (size_t c = 0; c < 4; ++c) mean += t.at(r, c) / 4;
    for (size_t c = 0; c < 4; ++c) var += (t.at(r, c) - mean) * (t.at(r, c) - mean) / 4;
    for (size_t c = 0; c < 4; ++c)
      CHECK(y.at(r, c) == doctest::Approx(2.0 * (t.at(r, c) - mean) / std::sqrt(var + 1e-5) + 0.5).epsilon(1e-12));
  }
}

TEST_CASE("cross entropy skips negative targets") {
  Graph g;
  Tensor logits(3, 3);
  logits.data = {1, 2, 3, 0, 0, 0, 5, 1, 1};
  const std::vector<int32_t> targets = {2, -1, 0};
  const double got = g.value(cross_entropy_sum(g, g.constant(logits), targets)).item();
  auto nll = [&](size_t r, size_t t) {
    double z = 0;
    for (size_t c = 0; c < 3; ++c) z += std::exp(logits.at(r, c));
    return std::log(z) - logits.at(r, t);
  };
  CHECK(got == doctest::Approx(nll(0, 2) + nll(2, 0)).epsilon(1e-13));
}

TEST_CASE("gradients of every op match central differences") {
  Rng rng = make_rng(1);
  auto a = random_param("a", 3, 4, rng);
  auto b = random_param("b", 3, 4, rng);
  auto w = random_param("w", 4, 5, rng);
  auto bias = random_param("bias", 1, 5, rng);
  auto pos = random_param("pos", 3, 4, rng, 0.2, 2.0);

  SUBCASE("elementwise") {
    auto build = [&](Graph& g) {
      Var x = g.param(a), y = g.param(b);
      Var e = add(g, mul(g, x, y), sub(g, scale(g, x, 0.3), add_scalar(g, y, 2.0)));
      e = add(g, e, add(g, gelu(g, x), softplus(g, y)));
      e = add(g, e, add(g, exp(g, scale(g, x, 0.5)), log(g, g.param(pos))));
      return project(g, e, 1);
    };
    CHECK(check(build, {&a, &b, &pos}) < 1e-7);
  }
  SUBCASE("matmul, linear, matmul_bt") {
    auto build = [&](Graph& g) {
      Var y = linear(g, g.param(a), g.param(w), g.param(bias));
      Var z = matmul_bt(g, g.param(a), g.param(b));
      return add(g, project(g, y, 2), project(g, matmul(g, z, g.param(a)), 3));
    };
    CHECK(check(build, {&a, &b, &w, &bias}) < 1e-7);
  }
  SUBCASE("layer norm and softmax") {
    auto gamma = random_param("g", 1, 4, rng);
    auto beta = random_param("be", 1, 4, rng);
    auto build = [&](Graph& g) {
      Var y = layer_norm(g, g.param(a), g.param(gamma), g.param(beta));
      return add(g, project(g, y, 4), project(g, softmax_rows(g, g.param(b)), 5));
    };
    CHECK(check(build, {&a, &b, &gamma, &beta}) < 1e-7);
  }
  SUBCASE("embedding, gather, slice, shared use") {
    auto table = random_param("t", 6, 4, rng);
    const std::vector<int32_t> ids = {3, 0, 3, 5};
    const std::vector<size_t> rows = {2, 0, 2};
    auto build = [&](Graph& g) {
      Var e = embedding(g, g.param(table), ids);
      Var gr = gather_rows(g, e, rows);
      Var s = slice_cols(g, e, 1, 2);
      return add(g, add(g, project(g, gr, 6), project(g, s, 7)), project(g, matmul_bt(g, e, g.param(table)), 8));
    };
    CHECK(check(build, {&table}) < 1e-7);
  }
  SUBCASE("cross entropy") {
    const std::vector<int32_t> t = {1, -1, 4};
    auto build = [&](Graph& g) { return cross_entropy_sum(g, linear(g, g.param(a), g.param(w), g.param(bias)), t); };
    CHECK(check(build, {&a, &w, &bias}) < 1e-7);
  }
  SUBCASE("gamma log density") {
    auto alpha = random_param("al", 3, 1, rng, 0.5, 3.0);
    auto rate = random_param("ra", 3, 1, rng, 0.01, 1.0);
    const std::vector<double> t = {0.5, 10.5, 400.5};
    auto build = [&](Graph& g) { return sum(g, gamma_log_pdf(g, g.param(alpha), g.param(rate), t)); };
    CHECK(check(build, {&alpha, &rate}) < 1e-7);
  }
}

TEST_CASE("attention gradients and masking") {
  Rng rng = make_rng(2);
  const Segments segs{{3, 4}};
  auto qkv = random_param("qkv", 7, 12, rng);
  for (bool causal : {true, false}) {
    CAPTURE(causal);
    auto build = [&](Graph& g) { return project(g, attention(g, g.param(qkv), segs, 2, causal), 9); };
    CHECK(check(build, {&qkv}) < 1e-7);
  }

  // Perturbing the second segment or a later position never changes earlier causal outputs.
  Graph g0;
  const Tensor base = g0.value(attention(g0, g0.constant(qkv.value), segs, 2, true));
  Tensor moved = qkv.value;
  for (size_t c = 0; c < 12; ++c) {
    moved.at(5, c) += 1.0;
    moved.at(2, c) += 1.0;
  }
  Graph g1;
  const Tensor after = g1.value(attention(g1, g1.constant(moved), segs, 2, true));
  for (size_t r : {0, 1, 3, 4})
    for (size_t c = 0; c < 4; ++c) CHECK(after.at(r, c) == base.at(r, c));
  CHECK(after.at(6, 0) != base.at(6, 0));

  // A single position attends only to itself: output equals its value vector.
  Graph g2;
  const Tensor one = g2.value(attention(g2, g2.constant(qkv.value), Segments{{1, 6}}, 2, true));
  for (size_t c = 0; c < 4; ++c) CHECK(one.at(0, c) == doctest::Approx(qkv.value.at(0, 8 + c)).epsilon(1e-14));
}

TEST_CASE("dropout") {
  Rng rng = make_rng(3);
  Graph g;
  Tensor ones(200, 50, 1.0);
  Var x = g.constant(ones);
  CHECK(dropout(g, x, 0.0, rng).index == x.index);
  const auto& y = g.value(dropout(g, x, 0.25, rng));
  double total = 0;
  size_t zeros = 0;
  for (double v : y.data) {
    total += v;
    zeros += v == 0.0;
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
  }
  CHECK(total / y.size() == doctest::Approx(1.0).epsilon(0.03));
  CHECK(static_cast<double>(zeros) / y.size() == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("backward accumulates into shared parameters and rejects non-scalars") {
  Parameter p("p", Tensor(1, 2, 3.0));
  Graph g;
  Var x = g.param(p);
  Var loss = sum(g, add(g, mul(g, x, x), x));  // d/dx = 2x + 1
  g.backward(loss);
  CHECK(p.grad.data[0] == doctest::Approx(7.0));
  Graph h;
  CHECK_THROWS(h.backward(h.param(p)));
}

TEST_CASE("gradient check reports the offending op for non-finite losses") {
  Parameter p("p", Tensor(1, 1, -1.0));
  auto build = [&](Graph& g) { return sum(g, log(g, g.param(p))); };
  try {
    std::vector<Parameter*> ps = {&p};
    grad_check(build, ps);
    FAIL("expected failure");
  } catch (const RuntimeFailure& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("shape mismatches are rejected") {
  Graph g;
  Var a = g.constant(Tensor(2, 3));
  Var b = g.constant(Tensor(3, 2));
  CHECK_THROWS(add(g, a, b));
  CHECK_THROWS(matmul(g, a, a));
}
