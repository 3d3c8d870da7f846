#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "plume/nn/tensor.hpp"

namespace plume::nn {

struct Var {
  std::size_t id = 0;
};

// Tape-based reverse-mode differentiation over whole-tensor ops. Nodes are
// appended in evaluation order, so reverse id order is a valid topological
// order for backward. One graph belongs to one thread.
template <class T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor<T> value);
  // References `value` without copying; it must outlive the graph.
  Var constant_ref(const Tensor<T>& value);
  // Gradients accumulate into p.grad.
  Var parameter(Parameter<T>& p);
  // Gradients accumulate into `sink` (same shape as p.value).
  Var parameter(const Parameter<T>& p, Tensor<T>& sink);

  const Tensor<T>& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // x[..., in] · Wᵀ + b with W [out, in], b [out].
  Var linear(Var x, Var weight, Var bias);
  Var relu(Var x);
  Var tanh(Var x);
  Var scale(Var x, T s);
  Var add(Var a, Var b);
  // a [m, k] · b [k, n]
  Var matmul(Var a, Var b);
  // y [n, d] -> y yᵀ [n, n]
  Var gram(Var y);
  // Column-wise concatenation of [n, d_i] blocks.
  Var concat_cols(std::span<const Var> parts);
  // e [n, n, d] -> [n, 3d]: per row, [sum_j, mean_j, max_j] over the second
  // index. Max ties resolve to the first index.
  Var row_pool(Var e);
  // Each row divided by (row sum + eps); entries must be non-negative.
  Var row_normalize(Var m, T eps);
  // exp of `iters` alternating log-space row/column normalizations of the
  // n×n log matrix `logm`.
  Var sinkhorn(Var logm, int iters);
  // <t f tᵀ, d> for square t, f, d. Only t is differentiated.
  Var qap_bilinear(Var t, Var f, Var d);
  Var sum(Var x);

  // Seeds d(loss)/d(loss) = 1 and propagates to every parameter sink.
  void backward(Var loss);

 private:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* ext = nullptr;
    Tensor<T> grad;
    Tensor<T>* sink = nullptr;
    bool requires_grad = false;
    std::vector<T> saved;
    std::vector<std::uint32_t> saved_index;
    std::function<void(Graph&, std::size_t)> back;
  };

  const Tensor<T>& val(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.own;
  }
  Tensor<T>& grad(std::size_t id);
  Var push(Tensor<T> value, bool requires_grad);

  std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace plume::nn
