#include <doctest.h>

#include <cmath>
#include <limits>

#include "plume/assignment.hpp"
#include "plume/errors.hpp"
#include "test_util.hpp"

using namespace plume;

namespace {

// Exhaustive minimum of Σ_i cost(i, σ(i)) and the number of permutations
// attaining it.
std::pair<double, std::size_t> exhaustive_min(const Matrix& c) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t hits = 0;
  testutil::for_each_permutation(c.rows(), [&](const std::vector<std::size_t>& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) s += c(i, m[i]);
    if (s < best) {
      best = s;
      hits = 1;
    } else if (s == best) {
      ++hits;
    }
  });
  return {best, hits};
}

}  // namespace

TEST_CASE("hungarian on 2x2") {
  Matrix a(2, 2);
  a(0, 1) = a(1, 0) = 1.0;
  CHECK(hungarian(a) == Permutation::identity(2));
  CHECK(assignment_cost(a, hungarian(a)) == 0.0);

  Matrix b(2, 2);
  b(0, 0) = b(1, 1) = 1.0;
  CHECK(hungarian(b) == Permutation({1, 0}));
  CHECK(assignment_cost(b, hungarian(b)) == 0.0);
}

TEST_CASE("hungarian rejects bad input") {
  CHECK_THROWS_AS(hungarian(Matrix(2, 3)), DomainError);
  Matrix nan(2, 2);
  nan(0, 1) = std::nan("");
  CHECK_THROWS_AS(hungarian(nan), DomainError);
  Matrix inf(2, 2);
  inf(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian(inf), DomainError);
}

TEST_CASE("hungarian handles n = 0 and n = 1") {
  CHECK(hungarian(Matrix(0, 0)).size() == 0);
  CHECK(hungarian(Matrix(1, 1, 7.0)) == Permutation::identity(1));
}

TEST_CASE("hungarian equals the exhaustive minimum on 6x6") {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Matrix c = testutil::random_matrix(6, 6, s, -5.0, 5.0);
    CHECK(assignment_cost(c, hungarian(c)) == doctest::Approx(exhaustive_min(c).first).epsilon(1e-12));
  }
}

TEST_CASE("hungarian beats random permutations") {
  const Matrix c = testutil::random_matrix(30, 30, 42, 0.0, 10.0);
  const double opt = assignment_cost(c, hungarian(c));
  for (std::uint64_t s = 0; s < 1000; ++s) CHECK(opt <= assignment_cost(c, testutil::random_perm(30, s)));
}

TEST_CASE("row constants do not change the assignment") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    Matrix c = testutil::random_matrix(6, 6, 500 + s, 0.0, 1.0);
    if (exhaustive_min(c).second != 1) continue;
    const Permutation base = hungarian(c);
    Rng rng(s);
    for (std::size_t i = 0; i < 6; ++i) {
      const double shift = 10.0 * rng.uniform() - 5.0;
      for (std::size_t j = 0; j < 6; ++j) c(i, j) += shift;
    }
    CHECK(hungarian(c) == base);
  }
}

TEST_CASE("decode_permutation") {
  Matrix diag(5, 5);
  for (std::size_t i = 0; i < 5; ++i) diag(i, i) = 40.0;
  CHECK(decode_permutation(diag, 0.0, 3.0) == Permutation::identity(5));
  CHECK_THROWS_AS(decode_permutation(diag, 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(decode_permutation(diag, 0.0, -1.0), DomainError);

  const Matrix logits = testutil::random_matrix(9, 9, 3, -40.0, 40.0);
  const Permutation at_one = decode_permutation(logits, 0.0, 1.0);
  for (double tau : {0.1, 0.5, 3.0, 17.0}) CHECK(decode_permutation(logits, 0.0, tau) == at_one);
  // No seed: noise is dropped whatever gamma says.
  CHECK(decode_permutation(logits, 5.0, 3.0) == at_one);
  // Seeded decode is reproducible.
  CHECK(decode_permutation(logits, 5.0, 3.0, 11) == decode_permutation(logits, 5.0, 3.0, 11));
}

TEST_CASE("decode maximizes the logit sum on 8x8") {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Matrix logits = testutil::random_matrix(8, 8, 900 + s, -40.0, 40.0);
    // Rows index locations, columns facilities: σ maps facility j to the
    // row chosen for column j.
    const Permutation sigma = decode_permutation(logits, 0.0, 3.0);
    double got = 0.0;
    for (std::size_t j = 0; j < 8; ++j) got += logits(sigma[j], j);
    double best = -std::numeric_limits<double>::infinity();
    testutil::for_each_permutation(8, [&](const std::vector<std::size_t>& m) {
      double v = 0.0;
      for (std::size_t j = 0; j < 8; ++j) v += logits(m[j], j);
      best = std::max(best, v);
    });
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}
