#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtd/numeric.hpp"
#include "mtd/rng.hpp"

using namespace mtd;

TEST_CASE("matrix exponential matches the scalar and rotation cases") {
  Mat a(1, 1);
  a << 1.5;
  CHECK(expm(a)(0, 0) == doctest::Approx(std::exp(1.5)).epsilon(1e-12));

  Mat rot(2, 2);
  rot << 0, -1, 1, 0;  // exp = planar rotation by 1 rad
  const Mat e = expm(rot);
  CHECK(e(0, 0) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  CHECK(e(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
}

TEST_CASE("discrete Lyapunov solution satisfies its equation") {
  const auto src = make_source(3);
  Mat a = 0.4 * src->normal_matrix(streams::kMisc, 0, 3, 3);
  Mat q = src->normal_matrix(streams::kMisc, 1, 3, 3);
  q = (q * q.transpose()).eval();
  const Mat x = dlyap(a, q);
  CHECK((x - a * x * a.transpose() - q).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(is_psd(x));
}

TEST_CASE("null space and completion are orthonormal and consistent") {
  Mat a(2, 4);
  a << 1, 0, 1, 0, 0, 1, 0, 1;
  const Mat ns = null_space(a);
  CHECK(ns.cols() == 2);
  CHECK((a * ns).cwiseAbs().maxCoeff() < 1e-12);
  const Mat comp = orthogonal_complement(ns);
  Mat full(4, 4);
  full << ns, comp;
  CHECK((full.transpose() * full - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("pencil supremum reproduces generalized eigenvalues") {
  Mat m(2, 2), n(2, 2);
  m << 3, 0, 0, 2;
  n = Mat::Identity(2, 2);
  CHECK(psd_pencil_sup(m, n) == doctest::Approx(2.0).epsilon(1e-6));

  // singular weight: the unconstrained direction does not cap the supremum
  n << 1, 0, 0, 0;
  CHECK(psd_pencil_sup(m, n) == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("observability matrix stacks powers") {
  Mat a(2, 2), c(1, 2);
  a << 1, 1, 0, 1;
  c << 1, 0;
  const Mat obs = observability_matrix(c, a, 3);
  CHECK(obs.rows() == 3);
  CHECK(obs(1, 1) == 1.0);
  CHECK(obs(2, 1) == 2.0);
}

TEST_CASE("gaussian log density matches the scalar formula") {
  Vec x(1), mu(1);
  x << 1.3;
  mu << 0.5;
  Mat cov(1, 1);
  cov << 2.0;
  const double expect =
      -0.5 * std::log(2 * M_PI * 2.0) - 0.5 * 0.8 * 0.8 / 2.0;
  CHECK(gaussian_logpdf(x, mu, cov) == doctest::Approx(expect).epsilon(1e-12));
}
