#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "plume/matrix.hpp"

namespace plume {

struct GumbelSinkhornConfig {
  double tau = 3.0;    // temperature
  int iters = 100;     // Sinkhorn sweeps, one row + one column normalization each
  double gamma = 0.01; // Gumbel noise scale

  void validate() const;
};

// Doubly-stochastic relaxation of a permutation matrix. Rows index
// locations, columns facilities (same convention as Permutation::to_matrix).
struct SoftPermutation {
  Matrix values;
};

inline constexpr double kGumbelClamp = 1e-12;

// -log(-log(u)) with u clamped into [kGumbelClamp, 1 - kGumbelClamp].
double gumbel_from_uniform(double u);

// n×n iid standard Gumbel draws, deterministic in seed.
Matrix gumbel_noise(std::size_t n, std::uint64_t seed);

// exp(logits / tau), normalized in log space by `iters` alternating
// row/column sweeps.
SoftPermutation sinkhorn(const Matrix& logits, const GumbelSinkhornConfig& cfg);

// sinkhorn(logits + gamma · gumbel_noise(n, seed)).
SoftPermutation gumbel_sinkhorn(const Matrix& logits, const GumbelSinkhornConfig& cfg,
                                std::uint64_t seed);

namespace detail {

// Log-space Sinkhorn kernel shared by the plain operator and the autodiff
// node. `logm` is an n×n row-major log matrix normalized in place. When
// `trace` is given, the softmax weights of every normalization step are
// appended to it (2·iters·n² values), which is what the backward pass needs.
//
// After a normalization step the softmax weights equal exp(logm), so the
// next step reuses them instead of exponentiating again. Every entry stays
// in (0, 1]; a sum below the smallest normal value triggers a fresh
// max-shifted exponentiation of that line.
template <class T>
void sinkhorn_log_forward(std::span<T> logm, std::size_t n, int iters, std::vector<T>* trace) {
  if (n == 0 || iters <= 0) return;
  if (trace) trace->reserve(trace->size() + 2 * static_cast<std::size_t>(iters) * n * n);
  constexpr T tiny = std::numeric_limits<T>::min();
  std::vector<T> e(n * n);
  std::vector<T> col_sum(n), col_lse(n);

  auto reexp_row = [&](std::size_t i) {
    T* row = logm.data() + i * n;
    T* erow = e.data() + i * n;
    const T m = *std::max_element(row, row + n);
    for (std::size_t j = 0; j < n; ++j) row[j] -= m;
    for (std::size_t j = 0; j < n; ++j) erow[j] = std::exp(row[j]);
  };
  auto reexp_col = [&](std::size_t j) {
    T m = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, logm[i * n + j]);
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      logm[i * n + j] -= m;
      e[i * n + j] = std::exp(logm[i * n + j]);
      s += e[i * n + j];
    }
    return s;
  };

  for (std::size_t i = 0; i < n; ++i) reexp_row(i);
  for (int it = 0; it < iters; ++it) {
    // rows
    for (std::size_t i = 0; i < n; ++i) {
      T* row = logm.data() + i * n;
      T* erow = e.data() + i * n;
      T s = 0;
      for (std::size_t j = 0; j < n; ++j) s += erow[j];
      if (!(s >= tiny)) {
        reexp_row(i);
        s = 0;
        for (std::size_t j = 0; j < n; ++j) s += erow[j];
      }
      const T lse = std::log(s);
      const T inv = T(1) / s;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] -= lse;
        erow[j] *= inv;
      }
    }
    if (trace) trace->insert(trace->end(), e.begin(), e.end());
    // columns
    std::fill(col_sum.begin(), col_sum.end(), T(0));
    for (std::size_t i = 0; i < n; ++i) {
      const T* erow = e.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) col_sum[j] += erow[j];
    }
    for (std::size_t j = 0; j < n; ++j)
      if (!(col_sum[j] >= tiny)) col_sum[j] = reexp_col(j);
    for (std::size_t j = 0; j < n; ++j) {
      col_lse[j] = std::log(col_sum[j]);
      col_sum[j] = T(1) / col_sum[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      T* row = logm.data() + i * n;
      T* erow = e.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] -= col_lse[j];
        erow[j] *= col_sum[j];
      }
    }
    if (trace) trace->insert(trace->end(), e.begin(), e.end());
  }
}

// Reverse of sinkhorn_log_forward: `grad` holds dL/d(normalized log matrix)
// on entry and dL/d(input log matrix) on exit. For y = x - lse(x) along an
// axis, dx = dy - softmax(x) · Σ dy along that axis.
template <class T>
void sinkhorn_log_backward(std::span<T> grad, std::size_t n, int iters, std::span<const T> trace) {
  std::vector<T> acc(n);
  const std::size_t nn = n * n;
  for (int it = iters - 1; it >= 0; --it) {
    const T* s_col = trace.data() + (2 * static_cast<std::size_t>(it) + 1) * nn;
    std::fill(acc.begin(), acc.end(), T(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) acc[j] += grad[i * n + j];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) grad[i * n + j] -= s_col[i * n + j] * acc[j];

    const T* s_row = trace.data() + 2 * static_cast<std::size_t>(it) * nn;
    for (std::size_t i = 0; i < n; ++i) {
      T* g = grad.data() + i * n;
      T s = 0;
      for (std::size_t j = 0; j < n; ++j) s += g[j];
      for (std::size_t j = 0; j < n; ++j) g[j] -= s_row[i * n + j] * s;
    }
  }
}

}  // namespace detail

}  // namespace plume
