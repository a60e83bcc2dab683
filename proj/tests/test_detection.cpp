#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "mtd/detection.hpp"
#include "mtd/estimation.hpp"

using namespace mtd;

namespace {

/// Quadrature oracle for the chi-square CDF: adaptive Simpson on the density.
double chi2_cdf_oracle(int dof, double x) {
  const double k2 = dof / 2.0;
  const double log_norm = -k2 * std::log(2.0) - std::lgamma(k2);
  auto pdf = [&](double t) {
    if (t <= 0) return 0.0;
    return std::exp(log_norm + (k2 - 1.0) * std::log(t) - t / 2.0);
  };
  std::function<double(double, double, double, double, double, double)> simpson =
      [&](double a, double b, double fa, double fb, double fm,
          double whole) -> double {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = pdf(lm), frm = pdf(rm);
    const double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
    if (std::abs(left + right - whole) < 1e-12)
      return left + right;
    return simpson(a, m, fa, fm, flm, left) + simpson(m, b, fm, fb, frm, right);
  };
  const double m = 0.5 * x;
  const double whole = x / 6.0 * (pdf(0) + 4 * pdf(m) + pdf(x));
  return simpson(0, x, pdf(0), pdf(x), pdf(m), whole);
}

}  // namespace

TEST_CASE("residue is the one-step output surprise") {
  Vec y(1), xhat(1);
  y << 3.0;
  xhat << 1.0;
  Mat C = Mat::Ones(1, 1);
  CHECK(residue(y, C, xhat)(0) == doctest::Approx(2.0));
  CHECK(residue(C * xhat, C, xhat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("nonlinear residue subtracts the predicted curvature") {
  NonlinearitySpec nl;
  nl.kind = NonlinearitySpec::Kind::Power;
  nl.power_c = 2;
  nl.dist_G = {Vec::Zero(1), Mat::Identity(1, 1), {}, Axis::Columns, 1};
  Vec y(2), xhat(2);
  y << 10.0, 0.0;
  xhat << 1.0, 3.0;  // [aux; plant]
  Mat C(2, 2);
  C << 1.0, 0.0, 0.0, 0.0;  // aux row picks the aux state: C*xhat = (1, 0)
  Mat G = Mat::Ones(1, 1);  // predicted curvature 9
  const Vec z = residue(y, C, xhat, G, nl, 1);
  CHECK(z(0) == doctest::Approx(0.0));
}

TEST_CASE("windowed statistic sums whitened squares") {
  ChiSquaredDetector det(1, 100.0);
  Vec z(2);
  z << 3.0, 4.0;
  const auto u = det.update(z, Mat::Identity(2, 2));
  CHECK(u.statistic == doctest::Approx(25.0));
  CHECK_FALSE(u.alarm);

  ChiSquaredDetector quiet(5, 1.0);
  for (int i = 0; i < 10; ++i) {
    const auto q = quiet.update(Vec::Zero(2), Mat::Identity(2, 2));
    CHECK(q.statistic == 0.0);
    CHECK_FALSE(q.alarm);
  }
}

TEST_CASE("healthy windows match the reference statistic mean") {
  // window 10 over 4 whitened channels: the settled statistic averages 40
  const int T = 10, m = 4;
  const auto src = make_source(12);
  ChiSquaredDetector det(T, 1e9);
  double acc = 0.0;
  int count = 0;
  const int N = 4000;
  for (int k = 0; k < N; ++k) {
    const Vec z = src->normal_vector(streams::kMisc, k, m);
    const auto u = det.update(z, Mat::Identity(m, m));
    if (k >= T) {
      acc += u.statistic;
      ++count;
    }
  }
  const double mean = acc / count;
  CHECK(std::abs(mean - T * m) < 0.05 * T * m);
}

TEST_CASE("statistic is invariant to joint orthogonal rotation") {
  const auto src = make_source(9);
  const Mat raw = src->normal_matrix(streams::kMisc, 0, 3, 3);
  const Eigen::HouseholderQR<Mat> qr(raw);
  const Mat rot = qr.householderQ();
  Mat S = src->normal_matrix(streams::kMisc, 1, 3, 3);
  S = (S * S.transpose() + Mat::Identity(3, 3)).eval();

  ChiSquaredDetector a(4, 1e9), b(4, 1e9);
  double ga = 0, gb = 0;
  for (int k = 0; k < 4; ++k) {
    const Vec z = src->normal_vector(streams::kMisc, 10 + k, 3);
    ga = a.update(z, S).statistic;
    gb = b.update(rot * z, rot * S * rot.transpose()).statistic;
  }
  CHECK(ga == doctest::Approx(gb).epsilon(1e-10));
}

TEST_CASE("threshold inversion agrees with the quadrature oracle") {
  const double eta1 = threshold_for_far(1, 0.05);
  CHECK(eta1 == doctest::Approx(3.8415).epsilon(1e-4));
  CHECK(chi2_cdf_oracle(1, eta1) == doctest::Approx(0.95).epsilon(1e-9));

  const double eta40 = threshold_for_far(40, 0.001);
  CHECK(eta40 == doctest::Approx(73.40).epsilon(1e-3));
  CHECK(chi2_cdf_oracle(40, eta40) == doctest::Approx(0.999).epsilon(1e-9));

  // the threshold collapses as every window is allowed to alarm
  CHECK(threshold_for_far(5, 0.999999) < 1e-3);
  CHECK_THROWS_AS(threshold_for_far(5, 0.0), DetectionError);
  CHECK_THROWS_AS(threshold_for_far(5, 1.0), DetectionError);
}

TEST_CASE("empirical false alarm rate tracks the configured rate") {
  const int T = 10, m = 2;
  const double rate = 0.05;
  const double eta = threshold_for_far(T * m, rate);
  const auto src = make_source(77);
  ChiSquaredDetector det(T, eta);
  int alarms = 0, windows = 0;
  const int N = 12000;
  for (int k = 0; k < N; ++k) {
    const Vec z = src->normal_vector(streams::kMisc, k, m);
    const auto u = det.update(z, Mat::Identity(m, m));
    if (k >= T) {
      windows++;
      alarms += u.alarm;
    }
  }
  const double empirical = static_cast<double>(alarms) / windows;
  CHECK(empirical > rate * 0.7);
  CHECK(empirical < rate * 1.3);
}

TEST_CASE("scalar detector counts a run of alarms before flagging") {
  SensorDetector det(3, 8.0, 2);
  CHECK(det.update(1.0).statistic == doctest::Approx(1.0));
  CHECK(det.update(2.0).statistic == doctest::Approx(5.0));
  auto u = det.update(2.0);
  CHECK(u.statistic == doctest::Approx(9.0));
  CHECK(u.alarm);
  CHECK_FALSE(u.flagged);
  u = det.update(3.0);
  CHECK(u.alarm);
  CHECK(u.flagged);
}

TEST_CASE("healthy scalar statistic has mean near its window length") {
  const int T = 10;
  SensorDetector det(T, 1e9, 1000000);
  const auto src = make_source(5);
  double acc = 0.0;
  int count = 0;
  for (int k = 0; k < 20000; ++k) {
    const auto u = det.update(src->normal(streams::kMisc, k, 0));
    if (k >= T) {
      acc += u.statistic;
      ++count;
    }
  }
  CHECK(std::abs(acc / count - T) < 0.05 * T);
}

TEST_CASE("divergence measure matches the closed-form Gaussian distance") {
  // one window term: between N(M phi, S) and N(0, S) the distance is
  // 1/2 (M phi)' S^{-1} (M phi)
  CHECK(kl_divergence(Vec::Zero(2), {Mat::Identity(1, 2)},
                      {Mat::Identity(1, 1)}) == 0.0);

  Mat M(1, 1);
  M << 2.0;
  Vec phi = Vec::Ones(1);
  CHECK(kl_divergence(phi, {M}, {Mat::Identity(1, 1)}) ==
        doctest::Approx(2.0));

  const auto src = make_source(15);
  const Mat Mr = src->normal_matrix(streams::kMisc, 0, 3, 4);
  Mat S = src->normal_matrix(streams::kMisc, 1, 3, 3);
  S = (S * S.transpose() + 0.5 * Mat::Identity(3, 3)).eval();
  const Vec phir = src->normal_vector(streams::kMisc, 2, 4);
  const Vec shift = Mr * phir;
  const double oracle = 0.5 * shift.dot(S.ldlt().solve(shift));
  CHECK(kl_divergence(phir, {Mr}, {S}) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("divergence is a nonnegative quadratic form") {
  const auto src = make_source(16);
  const Mat M1 = src->normal_matrix(streams::kMisc, 0, 2, 5);
  const Mat M2 = src->normal_matrix(streams::kMisc, 1, 2, 5);
  Mat S = src->normal_matrix(streams::kMisc, 2, 2, 2);
  S = (S * S.transpose() + 0.1 * Mat::Identity(2, 2)).eval();
  for (int i = 0; i < 1000; ++i) {
    const Vec phi = src->normal_vector(streams::kMisc, 100 + i, 5);
    CHECK(kl_divergence(phi, {M1, M2}, {S, S}) >= 0.0);
  }
}
