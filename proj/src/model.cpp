#include "plume/model.hpp"

#include <array>
#include <string>
#include <unordered_map>

#include "plume/assignment.hpp"
#include "plume/errors.hpp"
#include "plume/rng.hpp"

namespace plume {

void ModelConfig::validate() const {
  if (d < 1) throw DomainError("model: d must be at least 1");
  if (n_layers < 1) throw DomainError("model: n_layers must be at least 1");
  if (!(alpha > 0.0)) throw DomainError("model: alpha must be positive");
  gs.validate();
}

template <class T>
ModelParams<T> make_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d;
  ModelParams<T> p;
  p.phi_f = nn::make_mlp<T>("phi_f", {1, d, d});
  p.phi_l = nn::make_mlp<T>("phi_l", {1, d, d});
  p.phi_x = nn::make_mlp<T>("phi_x", {2, d, d});
  p.mix_f = nn::make_mlp<T>("mix_f", {3 * d, d, d});
  p.mix_l = nn::make_mlp<T>("mix_l", {3 * d, d, d});
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    p.msg_f.push_back(nn::make_linear<T>("msg_f." + std::to_string(l), d, d));
    p.msg_l.push_back(nn::make_linear<T>("msg_l." + std::to_string(l), d, d));
    p.fuse.push_back(nn::make_mlp<T>("fuse." + std::to_string(l), {3 * d, d, d, d}));
  }
  return p;
}

template <class T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<T> p = make_params<T>(cfg);
  Rng rng(seed);
  auto init_mlp = [&rng](nn::Mlp<T>& m) {
    for (auto& l : m.layers) nn::init_linear(l, rng);
  };
  init_mlp(p.phi_f);
  init_mlp(p.phi_l);
  init_mlp(p.phi_x);
  init_mlp(p.mix_f);
  init_mlp(p.mix_l);
  for (auto& l : p.msg_f) nn::init_linear(l, rng);
  for (auto& l : p.msg_l) nn::init_linear(l, rng);
  for (auto& m : p.fuse) init_mlp(m);
  return p;
}

template <class T>
ModelInputs<T> ModelInputs<T>::from_instance(const QapInstance& inst) {
  const std::size_t n = inst.n;
  ModelInputs<T> in;
  in.n = n;
  in.flow_entries = nn::Tensor<T>({n, n, 1});
  in.dist_entries = nn::Tensor<T>({n, n, 1});
  in.flow = nn::Tensor<T>({n, n});
  in.inv_dist = nn::Tensor<T>({n, n});
  in.dist = nn::Tensor<T>({n, n});
  in.coords = nn::Tensor<T>({n, 2});
  for (std::size_t k = 0; k < n * n; ++k) {
    const double f = inst.flow.data()[k];
    const double dd = inst.dist.data()[k];
    in.flow_entries.data[k] = static_cast<T>(f);
    in.flow.data[k] = static_cast<T>(f);
    in.dist_entries.data[k] = static_cast<T>(dd);
    in.dist.data[k] = static_cast<T>(dd);
    in.inv_dist.data[k] = static_cast<T>(1.0 / (dd + kInverseDistanceEps));
  }
  for (std::size_t k = 0; k < 2 * n; ++k) in.coords.data[k] = static_cast<T>(inst.coords.data()[k]);
  return in;
}

template <class T>
nn::ParamBinder<T> constant_binder(nn::Graph<T>& g) {
  return [&g](const nn::Parameter<T>& p) { return g.constant_ref(p.value); };
}

template <class T>
nn::ParamBinder<T> buffer_binder(nn::Graph<T>& g, const ModelParams<T>& params,
                                 GradBuffer<T>& grads) {
  auto slots = std::make_shared<std::unordered_map<const nn::Parameter<T>*, std::size_t>>();
  params.for_each([&](const nn::Parameter<T>& p) { slots->emplace(&p, slots->size()); });
  if (grads.size() != slots->size()) grads = make_grad_buffer(params);
  return [&g, &grads, slots](const nn::Parameter<T>& p) {
    auto it = slots->find(&p);
    if (it == slots->end()) throw ContractError("buffer_binder: parameter '" + p.name + "' is not part of the model");
    return g.parameter(p, grads[it->second]);
  };
}

namespace {

// h + W · msg(h): one row-stochastic message pass over a fixed kernel.
template <class T>
nn::Var message_pass(nn::Graph<T>& g, nn::Var h, nn::Var kernel, const nn::Linear<T>& msg,
                     const nn::ParamBinder<T>& bind) {
  nn::Var m = nn::linear_forward(g, msg, h, bind);
  return g.add(h, g.matmul(kernel, m));
}

template <class T>
nn::Var lift_and_pool(nn::Graph<T>& g, const nn::Tensor<T>& entries, const nn::Mlp<T>& phi,
                      const nn::Mlp<T>& mix, const nn::ParamBinder<T>& bind) {
  nn::Var x = g.constant_ref(entries);
  nn::Var lifted = nn::mlp_forward(g, phi, x, bind);  // [n, n, d]
  nn::Var pooled = nn::fast_pooling(g, lifted);       // [n, 3d]
  return nn::mlp_forward(g, mix, pooled, bind);       // [n, d]
}

template <class T>
nn::Var flow_kernel(nn::Graph<T>& g, const ModelInputs<T>& in) {
  return nn::row_normalize(g, g.constant_ref(in.flow));
}

template <class T>
nn::Var distance_kernel(nn::Graph<T>& g, const ModelInputs<T>& in) {
  return nn::row_normalize(g, g.constant_ref(in.inv_dist));
}

template <class T>
nn::Var encode_facilities_with(nn::Graph<T>& g, const ModelInputs<T>& in,
                               const ModelParams<T>& params, const nn::ParamBinder<T>& bind,
                               nn::Var w_f) {
  nn::Var h = lift_and_pool(g, in.flow_entries, params.phi_f, params.mix_f, bind);
  return message_pass(g, h, w_f, params.msg_f.at(0), bind);
}

template <class T>
nn::Var encode_locations_with(nn::Graph<T>& g, const ModelInputs<T>& in,
                              const ModelParams<T>& params, const nn::ParamBinder<T>& bind,
                              nn::Var w_d) {
  nn::Var z = lift_and_pool(g, in.dist_entries, params.phi_l, params.mix_l, bind);
  return message_pass(g, z, w_d, params.msg_l.at(0), bind);
}

}  // namespace

template <class T>
nn::Var encode_facilities(nn::Graph<T>& g, const ModelInputs<T>& in, const ModelParams<T>& params,
                          const nn::ParamBinder<T>& bind) {
  return encode_facilities_with(g, in, params, bind, flow_kernel(g, in));
}

template <class T>
nn::Var encode_locations(nn::Graph<T>& g, const ModelInputs<T>& in, const ModelParams<T>& params,
                         const nn::ParamBinder<T>& bind) {
  return encode_locations_with(g, in, params, bind, distance_kernel(g, in));
}

template <class T>
nn::Var position_lift(nn::Graph<T>& g, const ModelInputs<T>& in, const ModelParams<T>& params,
                      const nn::ParamBinder<T>& bind) {
  return nn::mlp_forward(g, params.phi_x, g.constant_ref(in.coords), bind);
}

template <class T>
nn::Var fusion_layer(nn::Graph<T>& g, nn::Var h_fac, nn::Var h_loc, nn::Var h_pos,
                     std::size_t layer, const ModelParams<T>& params,
                     const nn::ParamBinder<T>& bind) {
  const std::array<nn::Var, 3> streams{h_fac, h_loc, h_pos};
  nn::Var u = g.concat_cols(streams);
  return nn::mlp_forward(g, params.fuse.at(layer), u, bind);
}

template <class T>
ForwardOutput<T> forward(nn::Graph<T>& g, const ModelInputs<T>& in, const ModelParams<T>& params,
                         const ModelConfig& cfg, std::optional<std::uint64_t> noise_seed,
                         const nn::ParamBinder<T>& bind, bool with_soft) {
  if (params.fuse.size() != cfg.n_layers || params.msg_f.size() != cfg.n_layers ||
      params.msg_l.size() != cfg.n_layers)
    throw DimensionError("forward: parameters do not match n_layers");
  nn::Var w_f = flow_kernel(g, in);
  nn::Var w_d = distance_kernel(g, in);
  nn::Var h_pos = position_lift(g, in, params, bind);
  nn::Var h_fac = encode_facilities_with(g, in, params, bind, w_f);
  nn::Var h_loc = encode_locations_with(g, in, params, bind, w_d);
  nn::Var h = fusion_layer(g, h_fac, h_loc, h_pos, 0, params, bind);
  for (std::size_t l = 1; l < cfg.n_layers; ++l) {
    // State update: both streams restart from the shared representation and
    // take one message pass over their fixed kernels.
    h_fac = message_pass(g, h, w_f, params.msg_f[l], bind);
    h_loc = message_pass(g, h, w_d, params.msg_l[l], bind);
    h = fusion_layer(g, h_fac, h_loc, h_pos, l, params, bind);
  }
  ForwardOutput<T> out;
  out.y = h;
  out.logits = g.scale(g.tanh(g.gram(h)), static_cast<T>(cfg.alpha));
  if (!with_soft) return out;

  nn::Var scores = out.logits;
  if (noise_seed && cfg.gs.gamma > 0.0) {
    const Matrix noise = gumbel_noise(in.n, *noise_seed);
    nn::Tensor<T> scaled({in.n, in.n});
    for (std::size_t k = 0; k < scaled.size(); ++k)
      scaled.data[k] = static_cast<T>(cfg.gs.gamma * noise.data()[k]);
    scores = g.add(scores, g.constant(std::move(scaled)));
  }
  scores = g.scale(scores, static_cast<T>(1.0 / cfg.gs.tau));
  out.soft = g.sinkhorn(scores, cfg.gs.iters);
  return out;
}

namespace {

template <class T>
Matrix to_matrix(const nn::Tensor<T>& t) {
  Matrix m(t.rows(), t.cols());
  for (std::size_t k = 0; k < t.size(); ++k) m.data()[k] = static_cast<double>(t.data[k]);
  return m;
}

}  // namespace

template <class T>
Matrix infer_logits(const ModelParams<T>& params, const ModelConfig& cfg, const QapInstance& inst) {
  const auto in = ModelInputs<T>::from_instance(inst);
  nn::Graph<T> g;
  const auto out = forward(g, in, params, cfg, std::nullopt, constant_binder(g), false);
  return to_matrix(g.value(out.logits));
}

template <class T>
ForwardValues<T> infer_all(const ModelParams<T>& params, const ModelConfig& cfg,
                           const QapInstance& inst, std::optional<std::uint64_t> noise_seed) {
  const auto in = ModelInputs<T>::from_instance(inst);
  nn::Graph<T> g;
  const auto out = forward(g, in, params, cfg, noise_seed, constant_binder(g), true);
  return {to_matrix(g.value(out.y)), to_matrix(g.value(out.logits)), to_matrix(g.value(*out.soft))};
}

template <class T>
Permutation predict_assignment(const ModelParams<T>& params, const ModelConfig& cfg,
                               const QapInstance& inst) {
  return decode_permutation(infer_logits(params, cfg, inst), 0.0, cfg.gs.tau);
}

#define PLUME_INSTANTIATE_MODEL(T)                                                              \
  template ModelParams<T> make_params<T>(const ModelConfig&);                                   \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                    \
  template struct ModelInputs<T>;                                                               \
  template nn::ParamBinder<T> constant_binder<T>(nn::Graph<T>&);                                \
  template nn::ParamBinder<T> buffer_binder<T>(nn::Graph<T>&, const ModelParams<T>&,            \
                                               GradBuffer<T>&);                                 \
  template nn::Var encode_facilities<T>(nn::Graph<T>&, const ModelInputs<T>&,                   \
                                        const ModelParams<T>&, const nn::ParamBinder<T>&);      \
  template nn::Var encode_locations<T>(nn::Graph<T>&, const ModelInputs<T>&,                    \
                                       const ModelParams<T>&, const nn::ParamBinder<T>&);       \
  template nn::Var position_lift<T>(nn::Graph<T>&, const ModelInputs<T>&,                       \
                                    const ModelParams<T>&, const nn::ParamBinder<T>&);          \
  template nn::Var fusion_layer<T>(nn::Graph<T>&, nn::Var, nn::Var, nn::Var, std::size_t,       \
                                   const ModelParams<T>&, const nn::ParamBinder<T>&);           \
  template ForwardOutput<T> forward<T>(nn::Graph<T>&, const ModelInputs<T>&,                    \
                                       const ModelParams<T>&, const ModelConfig&,               \
                                       std::optional<std::uint64_t>,                            \
                                       const nn::ParamBinder<T>&, bool);                        \
  template Matrix infer_logits<T>(const ModelParams<T>&, const ModelConfig&, const QapInstance&); \
  template ForwardValues<T> infer_all<T>(const ModelParams<T>&, const ModelConfig&,             \
                                         const QapInstance&, std::optional<std::uint64_t>);     \
  template Permutation predict_assignment<T>(const ModelParams<T>&, const ModelConfig&,         \
                                             const QapInstance&);

PLUME_INSTANTIATE_MODEL(float)
PLUME_INSTANTIATE_MODEL(double)

}  // namespace plume
