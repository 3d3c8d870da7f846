#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "plume/matrix.hpp"
#include "plume/model.hpp"
#include "plume/parallel.hpp"
#include "plume/qap.hpp"

namespace plume {

// <T F Tᵀ, D> for a (soft) permutation matrix T.
double soft_loss(const Matrix& soft, const QapInstance& inst);

template <class T>
nn::Var soft_loss(nn::Graph<T>& g, nn::Var soft, const ModelInputs<T>& in);

struct AdamWConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <class T>
struct AdamWState {
  std::vector<nn::Tensor<T>> m;
  std::vector<nn::Tensor<T>> v;
  std::uint64_t step = 0;
};

// Decoupled weight decay Adam. `params[k]` is updated with `grads[k]`.
template <class T>
void adamw_step(std::span<nn::Tensor<T>* const> params, std::span<const nn::Tensor<T>> grads,
                AdamWState<T>& state, const AdamWConfig& cfg);

template <class T>
void adamw_step(ModelParams<T>& params, const GradBuffer<T>& grads, AdamWState<T>& state,
                const AdamWConfig& cfg);

struct TrainConfig {
  AdamWConfig optim{};
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  ModelConfig model{};
  ExecPolicy policy = ExecPolicy::parallel;
};

struct TrainMeta {
  std::size_t epoch = 0;       // epoch of the selected parameters (1-based)
  double train_loss = 0.0;     // mean soft loss over that epoch
  double val_score = 0.0;      // mean decoded objective on the validation set
  std::uint64_t seed = 0;
  AdamWConfig optim{};
  std::size_t batch_size = 0;
  std::size_t epochs = 0;
  std::size_t train_n = 0;
  double train_p = 0.0;
};

inline constexpr int kCheckpointVersion = 1;

struct ModelCheckpoint {
  ModelParams<float> params;
  ModelConfig config;
  TrainMeta meta;
  int format_version = kCheckpointVersion;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_score = 0.0;
  bool best = false;
};

// Mean soft loss and its gradient over a batch. Each instance gets its own
// graph and gradient buffer; buffers are summed in index order.
struct BatchGradient {
  double mean_loss = 0.0;
  GradBuffer<float> grads;
};

BatchGradient batch_gradient(const ModelParams<float>& params, const ModelConfig& cfg,
                             std::span<const ModelInputs<float>* const> inputs,
                             std::span<const std::uint64_t> noise_seeds, ExecPolicy policy);

// Mean objective of the deterministic decode over `set`.
double validate(const ModelParams<float>& params, const ModelConfig& cfg,
                std::span<const QapInstance> set, ExecPolicy policy = ExecPolicy::parallel);

// Decoded assignments for every instance, in order.
std::vector<Permutation> batch_decode(const ModelParams<float>& params, const ModelConfig& cfg,
                                      std::span<const QapInstance> set, ExecPolicy policy);

ModelCheckpoint train(std::span<const QapInstance> train_set, std::span<const QapInstance> val_set,
                      const TrainConfig& cfg,
                      const std::function<void(const EpochLog&)>& on_epoch = {});

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace plume
