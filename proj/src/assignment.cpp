#include "plume/assignment.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "plume/errors.hpp"
#include "plume/soft_perm.hpp"

namespace plume {

Permutation hungarian(const Matrix& cost) {
  if (!cost.square()) throw DomainError("hungarian: cost matrix must be square");
  for (double v : cost.data())
    if (!std::isfinite(v)) throw DomainError("hungarian: cost matrix has non-finite entries");
  const std::size_t n = cost.rows();
  if (n == 0) return Permutation{};

  // 1-based arrays; column 0 is the virtual source of each augmenting path.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      const auto row = cost.row(i0 - 1);
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> rows_to_cols(n);
  for (std::size_t j = 1; j <= n; ++j) rows_to_cols[match[j] - 1] = j - 1;
  return Permutation(std::move(rows_to_cols));
}

double assignment_cost(const Matrix& cost, const Permutation& rows_to_cols) {
  if (!cost.square() || cost.rows() != rows_to_cols.size())
    throw DimensionError("assignment_cost: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < rows_to_cols.size(); ++i) total += cost(i, rows_to_cols[i]);
  return total;
}

Permutation decode_permutation(const Matrix& logits, double gamma, double tau,
                               std::optional<std::uint64_t> seed) {
  if (!(tau > 0.0)) throw DomainError("decode_permutation: tau must be positive");
  if (!logits.square()) throw DomainError("decode_permutation: logits must be square");
  if (gamma < 0.0) throw DomainError("decode_permutation: gamma must be non-negative");
  const std::size_t n = logits.rows();
  Matrix cost(n, n);
  if (seed && gamma > 0.0) {
    const Matrix g = gumbel_noise(n, *seed);
    for (std::size_t k = 0; k < cost.data().size(); ++k)
      cost.data()[k] = -(logits.data()[k] + gamma * g.data()[k]) / tau;
  } else {
    for (std::size_t k = 0; k < cost.data().size(); ++k) cost.data()[k] = -logits.data()[k] / tau;
  }
  return hungarian(cost).inverse();
}

}  // namespace plume
