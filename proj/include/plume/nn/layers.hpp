#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "plume/errors.hpp"
#include "plume/nn/graph.hpp"
#include "plume/rng.hpp"

namespace plume::nn {

inline constexpr double kRowNormEps = 1e-8;

template <class T>
struct Linear {
  Parameter<T> weight;  // [out, in]
  Parameter<T> bias;    // [out]

  std::size_t in_dim() const { return weight.value.shape[1]; }
  std::size_t out_dim() const { return weight.value.shape[0]; }
};

// Affine layers with ReLU between them and no activation after the last.
template <class T>
struct Mlp {
  std::vector<Linear<T>> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
};

template <class T>
Linear<T> make_linear(const std::string& name, std::size_t in, std::size_t out) {
  return {Parameter<T>(name + ".weight", {out, in}), Parameter<T>(name + ".bias", {out})};
}

// dims = {in, hidden..., out}; names are "<name>.<k>.weight" / ".bias".
template <class T>
Mlp<T> make_mlp(const std::string& name, const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw DimensionError("make_mlp: need at least input and output dims");
  Mlp<T> m;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k)
    m.layers.push_back(make_linear<T>(name + "." + std::to_string(k), dims[k], dims[k + 1]));
  return m;
}

// Weights ~ Uniform(-1/√fan_in, 1/√fan_in), biases zero.
template <class T>
void init_linear(Linear<T>& layer, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(layer.in_dim()));
  for (T& w : layer.weight.value.data) w = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  std::fill(layer.bias.value.data.begin(), layer.bias.value.data.end(), T(0));
}

// Graph node for a parameter; lets callers route gradients to their own
// buffers (or bind parameters as constants for inference).
template <class T>
using ParamBinder = std::function<Var(const Parameter<T>&)>;

template <class T>
Var linear_forward(Graph<T>& g, const Linear<T>& layer, Var x, const ParamBinder<T>& bind) {
  return g.linear(x, bind(layer.weight), bind(layer.bias));
}

template <class T>
Var mlp_forward(Graph<T>& g, const Mlp<T>& mlp, Var x, const ParamBinder<T>& bind) {
  if (g.value(x).shape.back() != mlp.in_dim())
    throw DimensionError("mlp_forward: input dim " + std::to_string(g.value(x).shape.back()) +
                         " does not match layer dim " + std::to_string(mlp.in_dim()));
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    x = linear_forward(g, mlp.layers[k], x, bind);
    if (k + 1 < mlp.layers.size()) x = g.relu(x);
  }
  return x;
}

// Convenience overload: gradients accumulate into the parameters themselves.
template <class T>
Var mlp_forward(Graph<T>& g, Mlp<T>& mlp, Var x) {
  ParamBinder<T> bind = [&g](const Parameter<T>& p) {
    return g.parameter(const_cast<Parameter<T>&>(p));
  };
  return mlp_forward(g, static_cast<const Mlp<T>&>(mlp), x, bind);
}

// [n, n, d] -> [n, 3d] row-wise sum | mean | max.
template <class T>
Var fast_pooling(Graph<T>& g, Var e) {
  return g.row_pool(e);
}

template <class T>
Var row_normalize(Graph<T>& g, Var m, T eps = static_cast<T>(kRowNormEps)) {
  return g.row_normalize(m, eps);
}

}  // namespace plume::nn
