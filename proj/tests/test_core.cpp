#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flsim/core.hpp"

#include <algorithm>
#include <cmath>

using namespace flsim;

namespace {
ParamVector vec(std::initializer_list<double> xs) {
  ParamVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}
}  // namespace

TEST_CASE("axpy basic algebra") {
  CHECK(axpy(2.0, vec({1, 2}), vec({3, 4})) == vec({5, 8}));
  CHECK(axpy(0.0, vec({9, 9}), vec({3, 4})) == vec({3, 4}));
  CHECK(axpy(1.0, vec({0, 0}), vec({0, 0})) == vec({0, 0}));
}

TEST_CASE("axpy rejects dimension mismatch and non-finite results") {
  CHECK_THROWS_AS(axpy(1.0, vec({1, 2}), vec({1, 2, 3})),
                  std::invalid_argument);
  const double big = std::numeric_limits<double>::max();
  CHECK_THROWS_AS(axpy(2.0, vec({big}), vec({big})), NonFiniteError);
}

TEST_CASE("mean over lists") {
  CHECK(mean({vec({1, 1})}) == vec({1, 1}));
  CHECK(mean({vec({0, 2}), vec({2, 0})}) == vec({1, 1}));
  CHECK(mean({vec({1, 0}), vec({0, 1}), vec({-1, -1})}) == vec({0, 0}));
  CHECK_THROWS_AS(mean({}), std::invalid_argument);
}

TEST_CASE("sq_norm") {
  CHECK(sq_norm(vec({3, 4})) == 25.0);
  CHECK(sq_norm(vec({0, 0})) == 0.0);
  CHECK(sq_norm(vec({-1, -1, -1})) == 3.0);
  ParamVector bad = vec({1.0});
  bad(0) = std::nan("");
  CHECK_THROWS_AS(sq_norm(bad), NonFiniteError);
}

TEST_CASE("sq_norm(axpy(-1, x, x)) is exactly zero") {
  RngStream rng(7, RngPurpose::misc, 0, 0);
  for (int trial = 0; trial < 20; ++trial) {
    ParamVector x(37);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal() * 1e3;
    CHECK(sq_norm(axpy(-1.0, x, x)) == 0.0);
  }
}

TEST_CASE("mean is permutation invariant to 1e-12 relative") {
  RngStream rng(11, RngPurpose::misc, 0, 0);
  std::vector<ParamVector> vs;
  for (int i = 0; i < 9; ++i) {
    ParamVector v(13);
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = rng.uniform(-5, 5);
    vs.push_back(v);
  }
  const ParamVector base = mean(vs);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ParamVector> shuffled = vs;
    for (int i = static_cast<int>(shuffled.size()) - 1; i > 0; --i)
      std::swap(shuffled[i], shuffled[rng.uniform_int(i + 1)]);
    const ParamVector m = mean(shuffled);
    CHECK((m - base).norm() <= 1e-12 * std::max(1.0, base.norm()));
  }
  // and bit-exact when the order is identical
  CHECK(mean(vs) == base);
}

TEST_CASE("rng streams are reproducible and decoupled") {
  RngStream a(42, RngPurpose::local_sgd, 3, 17);
  RngStream b(42, RngPurpose::local_sgd, 3, 17);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // different client id gives a different sequence
  RngStream c(42, RngPurpose::local_sgd, 4, 17);
  int diffs = 0;
  RngStream a2(42, RngPurpose::local_sgd, 3, 17);
  for (int i = 0; i < 64; ++i) diffs += (a2.next_u64() != c.next_u64());
  CHECK(diffs > 60);

  // consuming one stream does not shift another
  RngStream d(42, RngPurpose::local_sgd, 5, 0);
  const auto d_first = d.next_u64();
  RngStream e(42, RngPurpose::local_sgd, 6, 0);
  (void)e.next_u64();
  RngStream d2(42, RngPurpose::local_sgd, 5, 0);
  CHECK(d2.next_u64() == d_first);
}

TEST_CASE("uniform and uniform_int ranges") {
  RngStream rng(5, RngPurpose::misc, 0, 0);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = rng.uniform_int(7);
    CHECK(k >= 0);
    CHECK(k < 7);
  }
  CHECK_THROWS_AS(rng.uniform_int(0), std::invalid_argument);
}

TEST_CASE("normal moments are sane") {
  RngStream rng(9, RngPurpose::misc, 0, 0);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("gamma mean matches shape") {
  RngStream rng(13, RngPurpose::misc, 0, 0);
  for (double shape : {0.5, 1.0, 3.5}) {
    double sum = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) sum += rng.gamma(shape);
    CHECK(sum / n == doctest::Approx(shape).epsilon(0.05));
  }
}
