#include "plume/soft_perm.hpp"

#include <cmath>

#include "plume/errors.hpp"
#include "plume/rng.hpp"

namespace plume {

void GumbelSinkhornConfig::validate() const {
  if (!(tau > 0.0)) throw DomainError("Gumbel-Sinkhorn: tau must be positive");
  if (iters < 1) throw DomainError("Gumbel-Sinkhorn: iters must be at least 1");
  if (!(gamma >= 0.0)) throw DomainError("Gumbel-Sinkhorn: gamma must be non-negative");
}

double gumbel_from_uniform(double u) {
  u = std::clamp(u, kGumbelClamp, 1.0 - kGumbelClamp);
  return -std::log(-std::log(u));
}

Matrix gumbel_noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix g(n, n);
  for (double& v : g.data()) v = gumbel_from_uniform(rng.uniform());
  return g;
}

SoftPermutation sinkhorn(const Matrix& logits, const GumbelSinkhornConfig& cfg) {
  cfg.validate();
  if (!logits.square()) throw DomainError("sinkhorn: logits must be square");
  for (double v : logits.data())
    if (!std::isfinite(v)) throw DomainError("sinkhorn: logits must be finite");
  const std::size_t n = logits.rows();
  Matrix m = logits;
  for (double& v : m.data()) v /= cfg.tau;
  detail::sinkhorn_log_forward<double>(m.data(), n, cfg.iters, nullptr);
  for (double& v : m.data()) v = std::exp(v);
  return {std::move(m)};
}

SoftPermutation gumbel_sinkhorn(const Matrix& logits, const GumbelSinkhornConfig& cfg,
                                std::uint64_t seed) {
  cfg.validate();
  if (cfg.gamma == 0.0) return sinkhorn(logits, cfg);
  if (!logits.square()) throw DomainError("gumbel_sinkhorn: logits must be square");
  const Matrix g = gumbel_noise(logits.rows(), seed);
  Matrix noisy = logits;
  for (std::size_t k = 0; k < noisy.data().size(); ++k) noisy.data()[k] += cfg.gamma * g.data()[k];
  return sinkhorn(noisy, cfg);
}

}  // namespace plume
