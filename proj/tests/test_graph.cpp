#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "plume/errors.hpp"
#include "plume/nn/graph.hpp"
#include "plume/nn/layers.hpp"
#include "plume/rng.hpp"
#include "plume/soft_perm.hpp"

using namespace plume;
using namespace plume::nn;

namespace {

using Builder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

Tensor<double> random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  Rng rng(seed);
  for (double& v : t.data) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Reduces any output to a scalar with non-uniform sensitivities:
// sum(tanh(out + c)) for a fixed random c.
Var probe_loss(Graph<double>& g, Var out) {
  const auto& v = g.value(out);
  Var c = g.constant(random_tensor(v.shape, 4242));
  return g.sum(g.tanh(g.add(out, c)));
}

double evaluate(std::vector<Parameter<double>>& params, const Builder& build) {
  Graph<double> g;
  std::vector<Var> vars;
  for (auto& p : params) vars.push_back(g.constant_ref(p.value));
  return g.value(probe_loss(g, build(g, vars))).data[0];
}

// Central differences against backward for every coordinate.
void check_gradients(std::vector<Parameter<double>> params, const Builder& build, double h = 1e-6,
                     double tol = 1e-6) {
  {
    Graph<double> g;
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(g.parameter(p));
    g.backward(probe_loss(g, build(g, vars)));
  }
  for (auto& p : params) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value.data[k];
      p.value.data[k] = orig + h;
      const double up = evaluate(params, build);
      p.value.data[k] = orig - h;
      const double down = evaluate(params, build);
      p.value.data[k] = orig;
      const double fd = (up - down) / (2 * h);
      INFO(p.name << "[" << k << "] analytic " << p.grad.data[k] << " fd " << fd);
      CHECK(std::abs(p.grad.data[k] - fd) <= tol * (1.0 + std::abs(fd)));
    }
  }
}

Parameter<double> param(const std::string& name, std::vector<std::size_t> shape, std::uint64_t seed,
                        double lo = -1.0, double hi = 1.0) {
  Parameter<double> p(name, shape);
  p.value = random_tensor(shape, seed, lo, hi);
  return p;
}

}  // namespace

TEST_CASE("tensor shape checks") {
  CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5)), DimensionError);
  Tensor<float> t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("mlp_forward trivial cases") {
  Graph<double> g;
  auto m = make_mlp<double>("m", {3, 4});
  m.layers[0].bias.value.data = {1.0, -2.0, 0.5, 3.0};
  const Var x = g.constant(random_tensor({5, 3}, 1));
  const auto y = g.value(mlp_forward(g, m, x));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(y(i, j) == m.layers[0].bias.value.data[j]);

  auto id = make_mlp<double>("id", {3, 3});
  for (std::size_t i = 0; i < 3; ++i) id.layers[0].weight.value(i, i) = 1.0;
  const auto yi = g.value(mlp_forward(g, id, x));
  CHECK(yi.data == g.value(x).data);

  auto wrong = make_mlp<double>("w", {4, 2});
  CHECK_THROWS_AS(mlp_forward(g, wrong, x), DimensionError);
}

TEST_CASE("mlp_forward on higher-rank input acts on the trailing dim") {
  Graph<double> g;
  auto m = make_mlp<double>("m", {2, 3, 2});
  Rng rng(3);
  for (auto& l : m.layers) init_linear(l, rng);
  const Tensor<double> x3 = random_tensor({2, 3, 2}, 5);
  const Tensor<double> x2({6, 2}, x3.data);
  const auto a = g.value(mlp_forward(g, m, g.constant(x3)));
  const auto b = g.value(mlp_forward(g, m, g.constant(x2)));
  CHECK(a.shape == std::vector<std::size_t>{2, 3, 2});
  CHECK(a.data == b.data);
}

TEST_CASE("mlp gradients match finite differences") {
  auto m = make_mlp<double>("m", {3, 5, 2});
  Rng rng(7);
  for (auto& l : m.layers) init_linear(l, rng);
  for (auto& l : m.layers)
    for (double& b : l.bias.value.data) b = rng.uniform() - 0.5;
  std::vector<Parameter<double>> ps = {m.layers[0].weight, m.layers[0].bias, m.layers[1].weight,
                                       m.layers[1].bias, param("x", {4, 3}, 8)};
  check_gradients(ps, [](Graph<double>& g, const std::vector<Var>& v) {
    const Var h = g.relu(g.linear(v[4], v[0], v[1]));
    return g.linear(h, v[2], v[3]);
  });
}

TEST_CASE("elementwise and matrix op gradients") {
  check_gradients({param("a", {3, 4}, 1), param("b", {4, 2}, 2)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.matmul(v[0], v[1]); });
  check_gradients({param("y", {5, 3}, 3)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.gram(v[0]); });
  check_gradients({param("x", {3, 3}, 4)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return g.scale(g.tanh(v[0]), 2.5); });
  check_gradients({param("a", {3, 2}, 5), param("b", {3, 1}, 6), param("c", {3, 3}, 7)},
                  [](Graph<double>& g, const std::vector<Var>& v) {
                    const Var parts[] = {v[0], v[1], v[2]};
                    return g.concat_cols(parts);
                  });
}

TEST_CASE("backward trivial cases") {
  Graph<double> g;
  Parameter<double> p = param("p", {2, 3}, 1);
  g.backward(g.sum(g.parameter(p)));
  for (double v : p.grad.data) CHECK(v == 1.0);

  Graph<double> g2;
  Parameter<double> x("x", {1});
  g2.backward(g2.sum(g2.tanh(g2.parameter(x))));
  CHECK(x.grad.data[0] == 1.0);

  Graph<double> g3;
  Parameter<double> y = param("y", {2, 2}, 2);
  CHECK_THROWS_AS(g3.backward(g3.tanh(g3.parameter(y))), ContractError);
}

TEST_CASE("gradients route into external sinks") {
  Parameter<double> p = param("p", {3}, 9);
  Tensor<double> sink_a, sink_b;
  Graph<double> g;
  const Var a = g.parameter(p, sink_a);
  const Var b = g.parameter(p, sink_b);
  g.backward(g.sum(g.add(g.scale(a, 2.0), b)));
  CHECK(sink_a.data == std::vector<double>{2.0, 2.0, 2.0});
  CHECK(sink_b.data == std::vector<double>{1.0, 1.0, 1.0});
  for (double v : p.grad.data) CHECK(v == 0.0);
}

TEST_CASE("fast_pooling") {
  Graph<double> g;
  const Var one = g.constant(Tensor<double>({1, 1, 2}, std::vector<double>{3.0, -1.0}));
  const auto single = g.value(fast_pooling(g, one));
  CHECK(single.data == std::vector<double>{3.0, -1.0, 3.0, -1.0, 3.0, -1.0});

  const Var c = g.constant(Tensor<double>({4, 4, 2}, 0.75));
  const auto pc = g.value(fast_pooling(g, c));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pc(i, 0) == 3.0);
    CHECK(pc(i, 1) == 3.0);
    CHECK(pc(i, 2) == 0.75);
    CHECK(pc(i, 4) == 0.75);
  }

  const Tensor<double> e = random_tensor({6, 6, 3}, 11);
  const auto p = g.value(fast_pooling(g, g.constant(e)));
  REQUIRE(p.shape == std::vector<std::size_t>{6, 9});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c2 = 0; c2 < 3; ++c2) {
      double s = 0.0, m = -1e300;
      for (std::size_t j = 0; j < 6; ++j) {
        const double v = e.data[(i * 6 + j) * 3 + c2];
        s += v;
        m = std::max(m, v);
      }
      CHECK(p(i, c2) == s);
      CHECK(p(i, 3 + c2) == s / 6.0);
      CHECK(p(i, 6 + c2) == m);
    }
}

TEST_CASE("fast_pooling gradients and max routing") {
  check_gradients({param("e", {5, 5, 2}, 12)},
                  [](Graph<double>& g, const std::vector<Var>& v) { return fast_pooling(g, v[0]); });

  // Ties route the whole max gradient to the first index.
  Parameter<double> e("e", {3, 3, 1});
  e.value.data = {2.0, 5.0, 5.0, 1.0, 1.0, 1.0, 0.0, 4.0, -1.0};
  Graph<double> g;
  const Var pooled = fast_pooling(g, g.parameter(e));
  const Tensor<double> max_only({3, 1}, std::vector<double>{0.0, 0.0, 1.0});
  g.backward(g.sum(g.matmul(pooled, g.constant(max_only))));
  CHECK(e.grad.data == std::vector<double>{0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
}

TEST_CASE("row_normalize") {
  Graph<double> g;
  const Var a = g.constant(Tensor<double>({2, 2}, std::vector<double>{2.0, 2.0, 0.0, 0.0}));
  const auto r = g.value(row_normalize(g, a));
  CHECK(r.data[0] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(r.data[1] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(r.data[2] == 0.0);
  CHECK(r.data[3] == 0.0);

  const Var neg = g.constant(Tensor<double>({1, 2}, std::vector<double>{1.0, -0.5}));
  CHECK_THROWS_AS(row_normalize(g, neg), DomainError);

  const Tensor<double> m = random_tensor({7, 7}, 13, 0.0, 3.0);
  const auto rm = g.value(row_normalize(g, g.constant(m)));
  for (std::size_t i = 0; i < 7; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) s += rm(i, j);
    CHECK(std::abs(s - 1.0) < 1e-6);
  }

  check_gradients({param("m", {4, 4}, 14, 0.1, 2.0)},
                  [](Graph<double>& g2, const std::vector<Var>& v) { return row_normalize(g2, v[0]); });
}

TEST_CASE("sinkhorn node matches the operator and its gradient") {
  const Tensor<double> l = random_tensor({6, 6}, 15, -13.0, 13.0);
  Graph<double> g;
  const auto t = g.value(g.sinkhorn(g.constant(l), 100));
  Matrix m(6, 6);
  m.data() = l.data;
  const auto ref = plume::sinkhorn(m, GumbelSinkhornConfig{1.0, 100, 0.0});
  for (std::size_t k = 0; k < 36; ++k) CHECK(t.data[k] == ref.values.data()[k]);

  for (int iters : {1, 3, 20})
    check_gradients({param("l", {5, 5}, 16 + iters, -3.0, 3.0)},
                    [iters](Graph<double>& g2, const std::vector<Var>& v) { return g2.sinkhorn(v[0], iters); });
}

TEST_CASE("qap_bilinear value and gradient") {
  const Tensor<double> f = random_tensor({5, 5}, 20, 0.0, 1.0);
  const Tensor<double> d = random_tensor({5, 5}, 21, 0.0, 1.0);
  const Tensor<double> t = random_tensor({5, 5}, 22, 0.0, 1.0);
  Graph<double> g;
  const double v = g.value(g.qap_bilinear(g.constant(t), g.constant(f), g.constant(d))).data[0];
  double ref = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t a = 0; a < 5; ++a)
        for (std::size_t b = 0; b < 5; ++b) ref += t(i, a) * f(a, b) * t(j, b) * d(i, j);
  CHECK(v == doctest::Approx(ref).epsilon(1e-13));

  check_gradients({param("t", {5, 5}, 23, 0.0, 1.0)}, [&](Graph<double>& g2, const std::vector<Var>& v2) {
    return g2.qap_bilinear(v2[0], g2.constant(f), g2.constant(d));
  });
}

TEST_CASE("forward passes are bit-deterministic") {
  auto run = [] {
    Graph<float> g;
    auto m = make_mlp<float>("m", {4, 8, 4});
    Rng rng(1);
    for (auto& l : m.layers) init_linear(l, rng);
    Tensor<float> x({6, 4});
    for (float& v : x.data) v = static_cast<float>(rng.uniform());
    const Var y = mlp_forward(g, m, g.constant(x));
    return g.value(g.sinkhorn(g.gram(y), 50)).data;
  };
  CHECK(run() == run());
}
