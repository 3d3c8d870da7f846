#include "plume/qap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "plume/errors.hpp"
#include "plume/rng.hpp"

namespace plume {

Permutation::Permutation(std::vector<std::size_t> mapping) : mapping_(std::move(mapping)) {
  if (!is_bijection(mapping_)) throw DomainError("mapping is not a bijection");
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  return Permutation(std::move(m));
}

bool Permutation::is_bijection(std::span<const std::size_t> mapping) {
  std::vector<bool> seen(mapping.size(), false);
  for (std::size_t v : mapping) {
    if (v >= mapping.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

Permutation Permutation::inverse() const {
  std::vector<std::size_t> inv(mapping_.size());
  for (std::size_t i = 0; i < mapping_.size(); ++i) inv[mapping_[i]] = i;
  return Permutation(std::move(inv));
}

Permutation Permutation::compose(const Permutation& other) const {
  if (other.size() != size()) throw DimensionError("compose: size mismatch");
  std::vector<std::size_t> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = mapping_[other[i]];
  return Permutation(std::move(out));
}

Matrix Permutation::to_matrix() const {
  Matrix p(size(), size());
  for (std::size_t i = 0; i < size(); ++i) p(mapping_[i], i) = 1.0;
  return p;
}

Matrix distance_matrix(const Matrix& coords) {
  const std::size_t n = coords.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = coords(i, 0) - coords(j, 0);
      const double dy = coords(i, 1) - coords(j, 1);
      const double v = std::sqrt(dx * dx + dy * dy);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

QapInstance QapInstance::from_parts(Matrix flow, Matrix coords, double density,
                                    std::uint64_t seed) {
  if (!flow.square() || coords.rows() != flow.rows() || coords.cols() != 2)
    throw DimensionError("flow must be n×n and coords n×2");
  QapInstance inst;
  inst.n = flow.rows();
  inst.dist = distance_matrix(coords);
  inst.flow = std::move(flow);
  inst.coords = std::move(coords);
  inst.density = density;
  inst.seed = seed;
  return inst;
}

QapInstance QapInstance::relabeled(const Permutation& relabel) const {
  if (relabel.size() != n) throw DimensionError("relabel: size mismatch");
  Matrix f(n, n);
  Matrix x(n, 2);
  for (std::size_t a = 0; a < n; ++a) {
    x(relabel[a], 0) = coords(a, 0);
    x(relabel[a], 1) = coords(a, 1);
    for (std::size_t b = 0; b < n; ++b) f(relabel[a], relabel[b]) = flow(a, b);
  }
  return from_parts(std::move(f), std::move(x), density, seed);
}

QapInstance generate_instance(std::size_t n, double p, std::uint64_t seed) {
  if (n < 2) throw SizeError("generate_instance: n must be at least 2, got " + std::to_string(n));
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("generate_instance: p must lie in [0,1]");
  Rng rng(seed);
  Matrix coords(n, 2);
  for (double& c : coords.data()) c = rng.uniform();
  Matrix flow(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.uniform() < p) {
        const double w = rng.uniform_open();
        flow(i, j) = w;
        flow(j, i) = w;
      }
    }
  }
  return QapInstance::from_parts(std::move(flow), std::move(coords), p, seed);
}

InstanceSet generate_instance_set(std::size_t n, double p, std::size_t count,
                                  std::uint64_t base_seed, ExecPolicy policy) {
  InstanceSet set;
  set.meta = {n, p, count, base_seed};
  set.instances.resize(count);
  // Child seeds are independent, so the order of generation does not matter.
  for_each_index(count, policy, [&](std::size_t k) {
    set.instances[k] = generate_instance(n, p, derive_seed(base_seed, {k}));
  });
  return set;
}

double objective(const QapInstance& inst, const Permutation& perm) {
  if (perm.size() != inst.n)
    throw DimensionError("objective: permutation has size " + std::to_string(perm.size()) +
                         ", instance has n=" + std::to_string(inst.n));
  const std::size_t n = inst.n;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto frow = inst.flow.row(i);
    const auto drow = inst.dist.row(perm[i]);
    for (std::size_t j = 0; j < n; ++j) total += frow[j] * drow[perm[j]];
  }
  return total;
}

double swap_delta(const QapInstance& inst, const Permutation& perm, std::size_t a, std::size_t b,
                  double /*current_cost*/) {
  if (a == b) throw InvalidMoveError("swap_delta: a and b must differ");
  if (perm.size() != inst.n || a >= inst.n || b >= inst.n)
    throw DimensionError("swap_delta: index out of range");
  const auto fa = inst.flow.row(a);
  const auto fb = inst.flow.row(b);
  const auto da = inst.dist.row(perm[a]);
  const auto db = inst.dist.row(perm[b]);
  double acc = 0.0;
  for (std::size_t k = 0; k < inst.n; ++k) {
    if (k == a || k == b) continue;
    const std::size_t pk = perm[k];
    acc += (fa[k] - fb[k]) * (db[pk] - da[pk]);
  }
  return 2.0 * acc;
}

double gap(double cost_pred, double cost_baseline) {
  if (!(cost_baseline > 0.0)) throw DomainError("gap: baseline cost must be positive");
  return 1.0 - cost_pred / cost_baseline;
}

std::pair<Permutation, double> brute_force_solve(const QapInstance& inst) {
  if (inst.n > 10)
    throw SizeError("brute_force_solve: n=" + std::to_string(inst.n) + " exceeds the limit of 10");
  std::vector<std::size_t> m(inst.n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  // next_permutation walks S_n in lexicographic order, so a strict
  // comparison keeps the smallest mapping among ties.
  Permutation best = Permutation::identity(inst.n);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    Permutation cand(m);
    const double c = objective(inst, cand);
    if (c < best_cost) {
      best_cost = c;
      best = std::move(cand);
    }
  } while (std::next_permutation(m.begin(), m.end()));
  return {best, best_cost};
}

}  // namespace plume
