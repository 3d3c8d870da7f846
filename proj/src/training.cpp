#include "plume/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "plume/assignment.hpp"
#include "plume/errors.hpp"
#include "plume/rng.hpp"

namespace plume {

namespace {

// Seed-path tags so that init, shuffling and noise streams never collide.
constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kShuffleTag = 0x5401;
constexpr std::uint64_t kNoiseTag = 0x7015;

}  // namespace

double soft_loss(const Matrix& soft, const QapInstance& inst) {
  const std::size_t n = inst.n;
  if (soft.rows() != n || soft.cols() != n) throw DimensionError("soft_loss: shape mismatch");
  Matrix tf(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double t = soft(i, k);
      if (t == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) tf(i, j) += t * inst.flow(k, j);
    }
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += tf(i, k) * soft(j, k);
      loss += inst.dist(i, j) * s;
    }
  return loss;
}

template <class T>
nn::Var soft_loss(nn::Graph<T>& g, nn::Var soft, const ModelInputs<T>& in) {
  return g.qap_bilinear(soft, g.constant_ref(in.flow), g.constant_ref(in.dist));
}

template nn::Var soft_loss<float>(nn::Graph<float>&, nn::Var, const ModelInputs<float>&);
template nn::Var soft_loss<double>(nn::Graph<double>&, nn::Var, const ModelInputs<double>&);

template <class T>
void adamw_step(std::span<nn::Tensor<T>* const> params, std::span<const nn::Tensor<T>> grads,
                AdamWState<T>& state, const AdamWConfig& cfg) {
  if (params.size() != grads.size()) throw DimensionError("adamw_step: params/grads count differs");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape);
      state.v.emplace_back(p->shape);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adamw_step: state does not match params");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k]->data;
    const auto& g = grads[k].data;
    auto& m = state.m[k].data;
    auto& v = state.v[k].data;
    if (g.size() != p.size() || m.size() != p.size())
      throw DimensionError("adamw_step: tensor size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      p[i] = static_cast<T>(p[i] * decay - cfg.lr * update);
    }
  }
}

template <class T>
void adamw_step(ModelParams<T>& params, const GradBuffer<T>& grads, AdamWState<T>& state,
                const AdamWConfig& cfg) {
  std::vector<nn::Tensor<T>*> ptrs;
  params.for_each([&ptrs](nn::Parameter<T>& p) { ptrs.push_back(&p.value); });
  adamw_step<T>(std::span<nn::Tensor<T>* const>(ptrs), std::span<const nn::Tensor<T>>(grads), state,
                cfg);
}

template void adamw_step<float>(std::span<nn::Tensor<float>* const>,
                                std::span<const nn::Tensor<float>>, AdamWState<float>&,
                                const AdamWConfig&);
template void adamw_step<double>(std::span<nn::Tensor<double>* const>,
                                 std::span<const nn::Tensor<double>>, AdamWState<double>&,
                                 const AdamWConfig&);
template void adamw_step<float>(ModelParams<float>&, const GradBuffer<float>&, AdamWState<float>&,
                                const AdamWConfig&);
template void adamw_step<double>(ModelParams<double>&, const GradBuffer<double>&,
                                 AdamWState<double>&, const AdamWConfig&);

BatchGradient batch_gradient(const ModelParams<float>& params, const ModelConfig& cfg,
                             std::span<const ModelInputs<float>* const> inputs,
                             std::span<const std::uint64_t> noise_seeds, ExecPolicy policy) {
  if (inputs.size() != noise_seeds.size()) throw DimensionError("batch_gradient: seeds/inputs differ");
  if (inputs.empty()) throw DomainError("batch_gradient: empty batch");
  std::vector<GradBuffer<float>> per(inputs.size());
  std::vector<double> losses(inputs.size());
  for_each_index(inputs.size(), policy, [&](std::size_t i) {
    nn::Graph<float> g;
    per[i] = make_grad_buffer(params);
    const auto bind = buffer_binder(g, params, per[i]);
    const auto out = forward(g, *inputs[i], params, cfg, noise_seeds[i], bind, true);
    const nn::Var loss = soft_loss(g, *out.soft, *inputs[i]);
    losses[i] = g.value(loss).data[0];
    g.backward(loss);
  });
  BatchGradient result;
  result.grads = make_grad_buffer(params);
  const float inv = 1.0f / static_cast<float>(inputs.size());
  for (std::size_t i = 0; i < per.size(); ++i) {
    result.mean_loss += losses[i];
    for (std::size_t k = 0; k < result.grads.size(); ++k) {
      auto& dst = result.grads[k].data;
      const auto& src = per[i][k].data;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
  for (auto& t : result.grads)
    for (float& v : t.data) v *= inv;
  result.mean_loss /= static_cast<double>(inputs.size());
  return result;
}

std::vector<Permutation> batch_decode(const ModelParams<float>& params, const ModelConfig& cfg,
                                      std::span<const QapInstance> set, ExecPolicy policy) {
  std::vector<Permutation> out(set.size());
  for_each_index(set.size(), policy,
                 [&](std::size_t i) { out[i] = predict_assignment(params, cfg, set[i]); });
  return out;
}

double validate(const ModelParams<float>& params, const ModelConfig& cfg,
                std::span<const QapInstance> set, ExecPolicy policy) {
  if (set.empty()) throw DomainError("validate: empty validation set");
  const auto perms = batch_decode(params, cfg, set, policy);
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) total += objective(set[i], perms[i]);
  return total / static_cast<double>(set.size());
}

ModelCheckpoint train(std::span<const QapInstance> train_set, std::span<const QapInstance> val_set,
                      const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  if (train_set.empty()) throw DomainError("train: empty training set");
  if (val_set.empty()) throw DomainError("train: empty validation set");
  if (!(cfg.optim.lr >= 0.0)) throw DomainError("train: lr must be non-negative");
  if (cfg.epochs < 1) throw DomainError("train: epochs must be at least 1");
  if (cfg.batch_size < 1) throw DomainError("train: batch_size must be at least 1");
  cfg.model.validate();
  const std::size_t n = train_set.front().n;
  for (const auto& inst : train_set)
    if (inst.n != n) throw DimensionError("train: training instances have inconsistent n");

  std::vector<ModelInputs<float>> inputs;
  inputs.reserve(train_set.size());
  for (const auto& inst : train_set) inputs.push_back(ModelInputs<float>::from_instance(inst));

  ModelParams<float> params = init_params<float>(cfg.model, derive_seed(cfg.seed, {kInitTag}));
  AdamWState<float> state;

  ModelCheckpoint best;
  best.config = cfg.model;
  best.params = params;
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(cfg.seed, {kShuffleTag, epoch}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const ModelInputs<float>*> batch;
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = start; k < stop; ++k) {
        batch.push_back(&inputs[order[k]]);
        seeds.push_back(derive_seed(cfg.seed, {kNoiseTag, epoch, step, k - start}));
      }
      const BatchGradient bg = batch_gradient(params, cfg.model, batch, seeds, cfg.policy);
      loss_sum += bg.mean_loss * static_cast<double>(batch.size());
      adamw_step(params, bg.grads, state, cfg.optim);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(order.size());
    log.val_score = validate(params, cfg.model, val_set, cfg.policy);
    if (log.val_score < best_val) {
      best_val = log.val_score;
      best.params = params;
      best.meta.epoch = epoch;
      best.meta.train_loss = log.train_loss;
      best.meta.val_score = log.val_score;
      log.best = true;
    }
    if (on_epoch) on_epoch(log);
  }
  best.meta.seed = cfg.seed;
  best.meta.optim = cfg.optim;
  best.meta.batch_size = cfg.batch_size;
  best.meta.epochs = cfg.epochs;
  best.meta.train_n = n;
  best.meta.train_p = train_set.front().density;
  best.params.for_each([](nn::Parameter<float>& p) { p.zero_grad(); });
  return best;
}

}  // namespace plume
