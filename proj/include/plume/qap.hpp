#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "plume/matrix.hpp"
#include "plume/parallel.hpp"

namespace plume {

// A hard assignment: mapping[i] is the location of facility i.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> mapping);

  static Permutation identity(std::size_t n);

  std::size_t size() const { return mapping_.size(); }
  std::size_t operator[](std::size_t i) const { return mapping_[i]; }
  const std::vector<std::size_t>& mapping() const { return mapping_; }

  void swap_entries(std::size_t a, std::size_t b) { std::swap(mapping_[a], mapping_[b]); }

  Permutation inverse() const;
  // (*this ∘ other)(i) = (*this)[other[i]].
  Permutation compose(const Permutation& other) const;

  // P with P(σ(i), i) = 1, so that objective = <P F Pᵀ, D>.
  Matrix to_matrix() const;

  static bool is_bijection(std::span<const std::size_t> mapping);

  bool operator==(const Permutation&) const = default;
  auto operator<=>(const Permutation&) const = default;

 private:
  std::vector<std::size_t> mapping_;
};

struct QapInstance {
  std::size_t n = 0;
  Matrix flow;    // n×n, symmetric, zero diagonal, entries in [0,1)
  Matrix coords;  // n×2
  Matrix dist;    // n×n Euclidean distances between coordinate rows
  double density = 0.0;
  std::uint64_t seed = 0;

  // Builds an instance from explicit flow and coordinates; dist is derived.
  static QapInstance from_parts(Matrix flow, Matrix coords, double density = 0.0,
                                std::uint64_t seed = 0);

  // Applies a relabeling: facility/location i becomes relabel[i].
  QapInstance relabeled(const Permutation& relabel) const;
};

struct InstanceSetMeta {
  std::size_t n = 0;
  double p = 0.0;
  std::size_t count = 0;
  std::uint64_t base_seed = 0;
};

struct InstanceSet {
  std::vector<QapInstance> instances;
  InstanceSetMeta meta;
};

QapInstance generate_instance(std::size_t n, double p, std::uint64_t seed);

// Instance k is generated from derive_seed(base_seed, {k}).
InstanceSet generate_instance_set(std::size_t n, double p, std::size_t count,
                                  std::uint64_t base_seed,
                                  ExecPolicy policy = ExecPolicy::parallel);

Matrix distance_matrix(const Matrix& coords);

double objective(const QapInstance& inst, const Permutation& perm);

// Cost change of exchanging the locations of facilities a and b. Relies on
// symmetric flow/dist with zero diagonals, which every QapInstance has.
double swap_delta(const QapInstance& inst, const Permutation& perm, std::size_t a, std::size_t b,
                  double current_cost);

// 1 - cost_pred / cost_baseline.
double gap(double cost_pred, double cost_baseline);

// Exhaustive search over S_n, n <= 10. Ties resolve to the lexicographically
// smallest mapping.
std::pair<Permutation, double> brute_force_solve(const QapInstance& inst);

void write_instances(const InstanceSet& set, const std::filesystem::path& path);
InstanceSet read_instances(const std::filesystem::path& path);

}  // namespace plume
