#pragma once

#include <cstdint>
#include <string_view>

#include "plume/qap.hpp"

namespace plume {

struct TabuConfig {
  std::uint64_t evaluations = 1000;    // budget of swap-delta evaluations
  std::size_t neighbourhood_size = 25; // swaps sampled per iteration
  std::size_t max_fails = 25;          // consecutive iterations without a new best
  std::size_t tenure_low = 1;
  std::size_t tenure_high = 1;
  std::uint64_t seed = 0;

  // Tenure range [ceil(0.05 n), ceil(0.5 n)].
  static TabuConfig for_size(std::size_t n, std::uint64_t evaluations,
                             std::size_t neighbourhood_size, std::size_t max_fails,
                             std::uint64_t seed);

  void validate() const;
};

enum class Termination { budget, max_fails, zero_budget };

std::string_view to_string(Termination t);

struct SearchResult {
  Permutation best_perm;
  double init_cost = 0.0;
  double best_cost = 0.0;
  std::uint64_t evaluations_used = 0;
  std::uint64_t iterations = 0;
  double wall_ms = 0.0;
  Termination termination = Termination::budget;
  std::uint64_t seed = 0;
};

// Swap-neighbourhood tabu search. Each iteration samples neighbourhood_size
// facility pairs without replacement, evaluates their deltas (one
// evaluation each, the initial objective is free), and applies the best
// admissible one even if it worsens the cost. A pair stays tabu for a
// tenure drawn uniformly from [tenure_low, tenure_high]; a tabu move is
// admissible when it produces a new global best. Stops when the budget is
// spent or max_fails consecutive iterations fail to improve the best.
SearchResult tabu_search(const QapInstance& inst, const Permutation& init, const TabuConfig& cfg);

// Uniform over S_n (Fisher-Yates).
Permutation random_permutation(std::size_t n, std::uint64_t seed);

}  // namespace plume
