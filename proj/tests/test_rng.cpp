#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtd/rng.hpp"

using namespace mtd;

TEST_CASE("same key gives the same value, different keys differ") {
  SplitMixSource a(42), b(42), c(43);
  CHECK(a.normal(1, 2, 3) == b.normal(1, 2, 3));
  CHECK(a.uniform(1, 2, 3) == b.uniform(1, 2, 3));
  CHECK(a.normal(1, 2, 3) != c.normal(1, 2, 3));
  CHECK(a.normal(1, 2, 3) != a.normal(1, 2, 4));
  CHECK(a.normal(1, 2, 3) != a.normal(1, 3, 3));
  CHECK(a.normal(1, 2, 3) != a.normal(2, 2, 3));
}

TEST_CASE("uniforms fill [0,1) evenly") {
  SplitMixSource src(7);
  const int N = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < N; ++i) {
    const double u = src.uniform(streams::kMisc, 0, i);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sumsq += u * u;
  }
  CHECK(std::abs(sum / N - 0.5) < 0.005);
  CHECK(std::abs(sumsq / N - 1.0 / 3.0) < 0.005);
}

TEST_CASE("normals have zero mean, unit variance, thin tails") {
  SplitMixSource src(11);
  const int N = 200000;
  double sum = 0.0, sumsq = 0.0, sum4 = 0.0;
  for (int i = 0; i < N; ++i) {
    const double z = src.normal(streams::kMisc, 0, i);
    sum += z;
    sumsq += z * z;
    sum4 += z * z * z * z;
  }
  CHECK(std::abs(sum / N) < 0.01);
  CHECK(std::abs(sumsq / N - 1.0) < 0.02);
  CHECK(std::abs(sum4 / N - 3.0) < 0.1);  // Gaussian kurtosis
}

TEST_CASE("trial seeds decorrelate") {
  const std::uint64_t master = 5;
  CHECK(derive_trial_seed(master, 0) != derive_trial_seed(master, 1));
  CHECK(derive_trial_seed(master, 0) != derive_trial_seed(master + 1, 0));
  CHECK(derive_child_seed(master, 1) != derive_child_seed(master, 2));
}
