#include "plume/tabu.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "plume/errors.hpp"
#include "plume/rng.hpp"

namespace plume {

TabuConfig TabuConfig::for_size(std::size_t n, std::uint64_t evaluations,
                                std::size_t neighbourhood_size, std::size_t max_fails,
                                std::uint64_t seed) {
  TabuConfig c;
  c.evaluations = evaluations;
  c.neighbourhood_size = neighbourhood_size;
  c.max_fails = max_fails;
  c.tenure_low = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n))));
  c.tenure_high = std::max(c.tenure_low, static_cast<std::size_t>(std::ceil(0.5 * static_cast<double>(n))));
  c.seed = seed;
  return c;
}

void TabuConfig::validate() const {
  if (neighbourhood_size < 1) throw DomainError("tabu: neighbourhood_size must be at least 1");
  if (max_fails < 1) throw DomainError("tabu: max_fails must be at least 1");
  if (tenure_low < 1 || tenure_low > tenure_high)
    throw DomainError("tabu: tenure range must satisfy 1 <= low <= high");
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::budget: return "budget";
    case Termination::max_fails: return "max_fails";
    case Termination::zero_budget: return "zero_budget";
  }
  return "unknown";
}

Permutation random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(m[i - 1], m[rng.below(i)]);
  return Permutation(std::move(m));
}

SearchResult tabu_search(const QapInstance& inst, const Permutation& init, const TabuConfig& cfg) {
  cfg.validate();
  if (init.size() != inst.n)
    throw DimensionError("tabu_search: initial permutation has size " + std::to_string(init.size()) +
                         ", instance has n=" + std::to_string(inst.n));
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = inst.n;

  SearchResult res;
  res.seed = cfg.seed;
  res.best_perm = init;
  res.init_cost = objective(inst, init);
  res.best_cost = res.init_cost;

  const std::size_t pair_count = n * (n - (n > 0 ? 1 : 0)) / 2;
  if (cfg.evaluations == 0 || pair_count == 0) {
    res.termination = Termination::zero_budget;
    res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

  struct Move {
    std::uint32_t a, b;
  };
  std::vector<Move> pairs;
  pairs.reserve(pair_count);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      pairs.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)});
  const std::size_t sample = std::min(cfg.neighbourhood_size, pair_count);

  // tabu_until[a*n+b] (a < b): last iteration during which the pair is tabu.
  std::vector<std::uint64_t> tabu_until(n * n, 0);
  Rng rng(cfg.seed);
  Permutation perm = init;
  double cur = res.init_cost;
  double best = res.init_cost;
  std::size_t fails = 0;
  std::uint64_t evals = 0;
  std::uint64_t iter = 0;

  while (true) {
    if (evals >= cfg.evaluations) {
      res.termination = Termination::budget;
      break;
    }
    ++iter;
    // Partial Fisher-Yates: the first `sample` slots become a uniform
    // sample without replacement.
    for (std::size_t t = 0; t < sample; ++t) std::swap(pairs[t], pairs[t + rng.below(pair_count - t)]);

    bool found = false;
    Move chosen{0, 0};
    double chosen_delta = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < sample && evals < cfg.evaluations; ++t) {
      const Move mv = pairs[t];
      const double delta = swap_delta(inst, perm, mv.a, mv.b, cur);
      ++evals;
      const bool tabu = tabu_until[mv.a * n + mv.b] >= iter;
      if (tabu && !(cur + delta < best)) continue;
      if (!found || delta < chosen_delta ||
          (delta == chosen_delta && (mv.a < chosen.a || (mv.a == chosen.a && mv.b < chosen.b)))) {
        found = true;
        chosen = mv;
        chosen_delta = delta;
      }
    }

    bool improved = false;
    if (found) {
      perm.swap_entries(chosen.a, chosen.b);
      cur += chosen_delta;
      tabu_until[chosen.a * n + chosen.b] = iter + rng.between(cfg.tenure_low, cfg.tenure_high);
      if (cur < best) {
        best = cur;
        res.best_perm = perm;
        improved = true;
      }
    }
    if (improved) {
      fails = 0;
    } else if (++fails >= cfg.max_fails) {
      res.termination = Termination::max_fails;
      break;
    }
  }

  // The running cost accumulates rounding over many deltas; report the
  // exact objective of the best permutation.
  const double exact = objective(inst, res.best_perm);
  if (exact < res.init_cost) {
    res.best_cost = exact;
  } else {
    res.best_perm = init;
    res.best_cost = res.init_cost;
  }
  res.evaluations_used = evals;
  res.iterations = iter;
  res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace plume
