#pragma once

#include <cstdint>
#include <optional>

#include "plume/matrix.hpp"
#include "plume/qap.hpp"

namespace plume {

// Exact linear assignment: returns σ minimizing Σ_i cost(i, σ(i)).
// O(n³) shortest augmenting paths with dual potentials; ties resolve to the
// lowest column index.
Permutation hungarian(const Matrix& cost);

// Total Σ_i cost(i, σ(i)).
double assignment_cost(const Matrix& cost, const Permutation& rows_to_cols);

// Hard permutation from model logits: solves the assignment on
// -(logits + gamma·G)/tau, G = gumbel_noise(n, seed). Without a seed the
// noise term is dropped. Rows of the logits index locations and columns
// facilities, so the returned facility→location map is the inverse of the
// row assignment.
Permutation decode_permutation(const Matrix& logits, double gamma, double tau,
                               std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace plume
