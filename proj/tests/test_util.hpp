#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "plume/matrix.hpp"
#include "plume/qap.hpp"
#include "plume/rng.hpp"

namespace testutil {

inline plume::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                                   double hi = 1.0) {
  plume::Rng rng(seed);
  plume::Matrix m(rows, cols);
  for (double& v : m.data()) v = lo + (hi - lo) * rng.uniform();
  return m;
}

// Calls f(mapping) for every permutation of {0..n-1} in lexicographic order.
template <class F>
void for_each_permutation(std::size_t n, F&& f) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  do {
    f(m);
  } while (std::next_permutation(m.begin(), m.end()));
}

// Σ F_ij D_σ(i)σ(j) with plain loops.
inline double naive_objective(const plume::QapInstance& inst, const std::vector<std::size_t>& sigma) {
  double s = 0.0;
  for (std::size_t i = 0; i < inst.n; ++i)
    for (std::size_t j = 0; j < inst.n; ++j) s += inst.flow(i, j) * inst.dist(sigma[i], sigma[j]);
  return s;
}

inline plume::Permutation random_perm(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  plume::Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(m[i - 1], m[rng.below(i)]);
  return plume::Permutation(std::move(m));
}

inline std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "plume_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

inline double max_abs_diff(const plume::Matrix& a, const plume::Matrix& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
  return m;
}

}  // namespace testutil
