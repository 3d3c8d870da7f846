#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "plume/matrix.hpp"
#include "plume/nn/graph.hpp"
#include "plume/nn/layers.hpp"
#include "plume/qap.hpp"
#include "plume/soft_perm.hpp"

namespace plume {

// Offset added to distances before inversion in the location kernel.
inline constexpr double kInverseDistanceEps = 1e-3;

struct ModelConfig {
  std::size_t d = 64;
  std::size_t n_layers = 3;
  double alpha = 40.0;
  GumbelSinkhornConfig gs{};

  void validate() const;
  bool operator==(const ModelConfig& o) const {
    return d == o.d && n_layers == o.n_layers && alpha == o.alpha && gs.tau == o.gs.tau &&
           gs.iters == o.gs.iters && gs.gamma == o.gs.gamma;
  }
};

template <class T>
struct ModelParams {
  nn::Mlp<T> phi_f;  // 1 -> d -> d, flow entries
  nn::Mlp<T> phi_l;  // 1 -> d -> d, distance entries
  nn::Mlp<T> phi_x;  // 2 -> d -> d, coordinates
  nn::Mlp<T> mix_f;  // 3d -> d -> d
  nn::Mlp<T> mix_l;  // 3d -> d -> d
  std::vector<nn::Linear<T>> msg_f;  // one per layer, d -> d
  std::vector<nn::Linear<T>> msg_l;
  std::vector<nn::Mlp<T>> fuse;      // one per layer, 3d -> d -> d -> d

  // Visits every parameter in a fixed order (the checkpoint and gradient
  // buffer order).
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const {
    std::size_t c = 0;
    for_each([&c](const nn::Parameter<T>& p) { c += p.value.size(); });
    return c;
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    auto mlp = [&f](auto& m) {
      for (auto& layer : m.layers) {
        f(layer.weight);
        f(layer.bias);
      }
    };
    mlp(self.phi_f);
    mlp(self.phi_l);
    mlp(self.phi_x);
    mlp(self.mix_f);
    mlp(self.mix_l);
    for (auto& l : self.msg_f) {
      f(l.weight);
      f(l.bias);
    }
    for (auto& l : self.msg_l) {
      f(l.weight);
      f(l.bias);
    }
    for (auto& m : self.fuse) mlp(m);
  }
};

// Uninitialized (zero) parameters with the architecture's shapes.
template <class T>
ModelParams<T> make_params(const ModelConfig& cfg);

template <class T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <class To, class From>
ModelParams<To> cast_params(const ModelParams<From>& src) {
  ModelParams<To> out;
  auto conv_lin = [](const nn::Linear<From>& l) {
    nn::Linear<To> r;
    r.weight.name = l.weight.name;
    r.weight.value = nn::tensor_cast<To>(l.weight.value);
    r.weight.grad = nn::Tensor<To>(l.weight.value.shape);
    r.bias.name = l.bias.name;
    r.bias.value = nn::tensor_cast<To>(l.bias.value);
    r.bias.grad = nn::Tensor<To>(l.bias.value.shape);
    return r;
  };
  auto conv_mlp = [&](const nn::Mlp<From>& m) {
    nn::Mlp<To> r;
    for (const auto& l : m.layers) r.layers.push_back(conv_lin(l));
    return r;
  };
  out.phi_f = conv_mlp(src.phi_f);
  out.phi_l = conv_mlp(src.phi_l);
  out.phi_x = conv_mlp(src.phi_x);
  out.mix_f = conv_mlp(src.mix_f);
  out.mix_l = conv_mlp(src.mix_l);
  for (const auto& l : src.msg_f) out.msg_f.push_back(conv_lin(l));
  for (const auto& l : src.msg_l) out.msg_l.push_back(conv_lin(l));
  for (const auto& m : src.fuse) out.fuse.push_back(conv_mlp(m));
  return out;
}

// One gradient tensor per parameter, in for_each order.
template <class T>
using GradBuffer = std::vector<nn::Tensor<T>>;

template <class T>
GradBuffer<T> make_grad_buffer(const ModelParams<T>& params) {
  GradBuffer<T> buf;
  params.for_each([&buf](const nn::Parameter<T>& p) { buf.emplace_back(p.value.shape); });
  return buf;
}

// Per-instance constant inputs, converted once to the graph's scalar type.
template <class T>
struct ModelInputs {
  std::size_t n = 0;
  nn::Tensor<T> flow_entries;  // [n, n, 1]
  nn::Tensor<T> dist_entries;  // [n, n, 1]
  nn::Tensor<T> flow;          // [n, n]
  nn::Tensor<T> inv_dist;      // [n, n], 1 / (D + eps)
  nn::Tensor<T> dist;          // [n, n]
  nn::Tensor<T> coords;        // [n, 2]

  static ModelInputs from_instance(const QapInstance& inst);
};

template <class T>
struct ForwardOutput {
  nn::Var y;       // [n, d]
  nn::Var logits;  // [n, n], alpha · tanh(y yᵀ)
  std::optional<nn::Var> soft;  // [n, n] soft permutation
};

// Stages of the network. Each takes the graph, the constant inputs, the
// parameters and a binder that decides how parameters enter the graph.
template <class T>
nn::Var encode_facilities(nn::Graph<T>& g, const ModelInputs<T>& in, const ModelParams<T>& params,
                          const nn::ParamBinder<T>& bind);
template <class T>
nn::Var encode_locations(nn::Graph<T>& g, const ModelInputs<T>& in, const ModelParams<T>& params,
                         const nn::ParamBinder<T>& bind);
template <class T>
nn::Var position_lift(nn::Graph<T>& g, const ModelInputs<T>& in, const ModelParams<T>& params,
                      const nn::ParamBinder<T>& bind);
template <class T>
nn::Var fusion_layer(nn::Graph<T>& g, nn::Var h_fac, nn::Var h_loc, nn::Var h_pos,
                     std::size_t layer, const ModelParams<T>& params,
                     const nn::ParamBinder<T>& bind);

// Full forward pass. `noise_seed` selects the Gumbel draw for the soft
// permutation; without it the noise term is dropped. `with_soft` = false
// stops after the logits (all that decoding needs).
template <class T>
ForwardOutput<T> forward(nn::Graph<T>& g, const ModelInputs<T>& in, const ModelParams<T>& params,
                         const ModelConfig& cfg, std::optional<std::uint64_t> noise_seed,
                         const nn::ParamBinder<T>& bind, bool with_soft = true);

// Binders: parameters as constants (inference), or routed into a buffer.
template <class T>
nn::ParamBinder<T> constant_binder(nn::Graph<T>& g);
template <class T>
nn::ParamBinder<T> buffer_binder(nn::Graph<T>& g, const ModelParams<T>& params,
                                 GradBuffer<T>& grads);

// Inference helpers (no gradient tape kept beyond the call).
template <class T>
Matrix infer_logits(const ModelParams<T>& params, const ModelConfig& cfg, const QapInstance& inst);

template <class T>
struct ForwardValues {
  Matrix y;
  Matrix logits;
  Matrix soft;
};

template <class T>
ForwardValues<T> infer_all(const ModelParams<T>& params, const ModelConfig& cfg,
                           const QapInstance& inst, std::optional<std::uint64_t> noise_seed);

// Deterministic (gamma = 0) decode of the model's assignment.
template <class T>
Permutation predict_assignment(const ModelParams<T>& params, const ModelConfig& cfg,
                               const QapInstance& inst);

}  // namespace plume
