#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtd/model_core.hpp"

using namespace mtd;

namespace {

ExtendedModel scalar_blocks_model() {
  // every block 1x1 and equal to one, noiseless
  ExtendedModel em;
  em.base.A = Mat::Ones(1, 1);
  em.base.B = Mat::Ones(1, 1);
  em.base.C = Mat::Ones(1, 1);
  em.base.Q = Mat::Zero(1, 1);
  em.base.R = 1e-12 * Mat::Identity(1, 1);
  em.A_tilde = 0.99 * Mat::Ones(1, 1);
  em.C_tilde = Mat::Ones(1, 1);
  em.Q_tilde = Mat::Zero(1, 1);
  em.R_full = 1e-12 * Mat::Identity(2, 2);
  em.dist_Abar = {Vec::Ones(1), Mat::Zero(1, 1), {}, Axis::Rows,
                  streams::kCouplingA};
  em.dist_Btilde = {Vec::Ones(1), Mat::Zero(1, 1), {}, Axis::Rows,
                    streams::kActuatorB};
  em.dist_Cbar = {Vec::Zero(1), Mat::Zero(1, 1), {}, Axis::Rows,
                  streams::kCouplingC};
  return em;
}

}  // namespace

TEST_CASE("zero covariance reproduces the mean matrix") {
  MatrixDistribution d{Vec::Ones(2), Mat::Zero(2, 2), {}, Axis::Rows, 3};
  const auto src = make_source(1);
  const Mat m = sample_time_varying(d, 2, 2, 0, *src);
  CHECK((m - Mat::Ones(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("draws are a pure function of seed and step") {
  MatrixDistribution d{Vec::Zero(3), Mat::Identity(3, 3), {}, Axis::Rows, 5};
  const auto src = make_source(9);
  const Mat a = sample_time_varying(d, 4, 3, 7, *src);
  const Mat b = sample_time_varying(d, 4, 3, 7, *src);
  const Mat c = sample_time_varying(d, 4, 3, 8, *src);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("row-law sample mean converges to the mean vector") {
  Vec mu(2);
  mu << 1.0, -2.0;
  Mat cov(2, 2);
  cov << 0.8, 0.3, 0.3, 0.5;
  MatrixDistribution d{mu, cov, {}, Axis::Rows, 6};
  const auto src = make_source(21);
  const int N = 100000;
  Vec acc = Vec::Zero(2);
  for (int k = 0; k < N; ++k)
    acc += sample_time_varying(d, 1, 2, k, *src).row(0).transpose();
  acc /= N;
  // three standard errors per entry
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs(acc(i) - mu(i)) < 3.0 * std::sqrt(cov(i, i) / N));
}

TEST_CASE("column-law draws fill columns") {
  Vec mu(3);
  mu << 1, 2, 3;
  MatrixDistribution d{mu, Mat::Zero(3, 3), {}, Axis::Columns, 6};
  const auto src = make_source(2);
  const Mat m = sample_time_varying(d, 3, 2, 0, *src);
  CHECK(m(2, 1) == 3.0);
  CHECK(m(0, 0) == 1.0);
}

TEST_CASE("extended step: zero everything stays at zero") {
  ExtendedModel em = scalar_blocks_model();
  em.dist_Abar.mean = Vec::Zero(1);
  em.dist_Btilde.mean = Vec::Zero(1);
  em.R_full = Mat::Identity(2, 2) * 1e-12;
  const auto src = make_source(4);
  ExtendedModel noiseless = em;
  noiseless.base.Q = Mat::Zero(1, 1);
  noiseless.Q_tilde = Mat::Zero(1, 1);
  auto res = step_extended(noiseless, Vec::Zero(2), Vec::Zero(1), std::nullopt,
                           0, *src);
  CHECK(res.next_state.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("an all-zero attack leaves the trajectory bit-identical") {
  ExtendedModel em = scalar_blocks_model();
  em.base.Q = 0.1 * Mat::Identity(1, 1);
  em.Q_tilde = 0.1 * Mat::Identity(1, 1);
  em.R_full = 0.1 * Mat::Identity(2, 2);
  const auto src = make_source(17);

  Vec x1 = Vec::Zero(2), x2 = Vec::Zero(2);
  AttackInput zero{Vec::Zero(1), Vec::Zero(2)};
  for (int k = 0; k < 25; ++k) {
    const auto a = step_extended(em, x1, Vec::Ones(1), std::nullopt, k, *src);
    const auto b = step_extended(em, x2, Vec::Ones(1), zero, k, *src);
    CHECK((a.next_state - b.next_state).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.y_operator - b.y_operator).cwiseAbs().maxCoeff() == 0.0);
    x1 = a.next_state;
    x2 = b.next_state;
  }
}

TEST_CASE("scalar blocks of one advance (1,1) to (2,1)") {
  ExtendedModel em = scalar_blocks_model();
  em.A_tilde = Mat::Ones(1, 1);  // stability not needed for a single step
  const auto src = make_source(4);
  Vec x0(2);
  x0 << 1.0, 1.0;
  ExtendedModel noiseless = em;
  noiseless.R_full = 1e-15 * Mat::Identity(2, 2);
  const auto res =
      step_extended(noiseless, x0, Vec::Zero(1), std::nullopt, 0, *src);
  CHECK(res.next_state(0) == doctest::Approx(2.0));
  CHECK(res.next_state(1) == doctest::Approx(1.0));
}

TEST_CASE("nonlinearity vanishes at the origin and under zero direction") {
  ExtendedModel em = scalar_blocks_model();
  NonlinearitySpec nl;
  nl.kind = NonlinearitySpec::Kind::Power;
  nl.power_c = 2;
  nl.dist_G = {Vec::Ones(1), Mat::Zero(1, 1), {}, Axis::Columns,
               streams::kNonlinearG};
  const auto src = make_source(12);

  // state at the origin: identical to the plain step
  const auto plain =
      step_extended(em, Vec::Zero(2), Vec::Ones(1), std::nullopt, 3, *src);
  const auto curved =
      step_nonlinear(em, nl, Vec::Zero(2), Vec::Ones(1), std::nullopt, 3, *src);
  CHECK((plain.y_operator - curved.y_operator).cwiseAbs().maxCoeff() == 0.0);

  // zero direction matrix: identical on any state
  NonlinearitySpec zero_dir = nl;
  zero_dir.dist_G.mean = Vec::Zero(1);
  Vec x(2);
  x << 0.5, 2.0;
  const auto p2 = step_extended(em, x, Vec::Ones(1), std::nullopt, 4, *src);
  const auto c2 = step_nonlinear(em, zero_dir, x, Vec::Ones(1), std::nullopt,
                                 4, *src);
  CHECK((p2.y_operator - c2.y_operator).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar nonlinearity arithmetic: G=2, h(3)=9, no linear part") {
  ExtendedModel em = scalar_blocks_model();
  em.C_tilde = Mat::Zero(1, 1);
  em.dist_Cbar.mean = Vec::Zero(1);
  em.R_full = 1e-18 * Mat::Identity(2, 2);
  NonlinearitySpec nl;
  nl.kind = NonlinearitySpec::Kind::Power;
  nl.power_c = 2;
  nl.dist_G = {2.0 * Vec::Ones(1), Mat::Zero(1, 1), {}, Axis::Columns,
               streams::kNonlinearG};
  Vec x(2);
  x << 0.0, 3.0;
  const auto src = make_source(5);
  const auto res = step_nonlinear(em, nl, x, Vec::Zero(1), std::nullopt, 0,
                                  *src);
  CHECK(res.y_operator(0) == doctest::Approx(18.0).epsilon(1e-6));
}

TEST_CASE("single-mode hybrid reduces to the plain plant") {
  HybridModeSet hs;
  HybridModeSet::Mode m;
  m.A = 0.9 * Mat::Identity(2, 2);
  m.B = Mat::Zero(2, 1);
  m.C = Mat::Identity(2, 2);
  hs.modes = {m};
  hs.dwell = 3;
  const auto src = make_source(8);
  Vec x(2);
  x << 1.0, -1.0;
  const auto res =
      step_hybrid(hs, Mat(), Mat(), x, Vec(), {}, std::nullopt, 0, *src);
  CHECK(res.mode == 0);
  CHECK((res.next_state - 0.9 * x).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sensor selection places the bias on the targeted sensor") {
  HybridModeSet hs;
  HybridModeSet::Mode m;
  m.A = Mat::Identity(3, 3);
  m.B = Mat::Zero(3, 1);
  m.C = Mat::Identity(3, 3);
  hs.modes = {m};
  const auto src = make_source(8);
  Vec d(1);
  d << 5.0;
  const auto res = step_hybrid(hs, Mat(), Mat(), Vec::Zero(3), Vec(), {1},
                               std::optional<Vec>(d), 0, *src);
  CHECK(res.y_operator(0) == 0.0);
  CHECK(res.y_operator(1) == 5.0);
  CHECK(res.y_operator(2) == 0.0);
}

TEST_CASE("dwell blocks hold the mode and reseeding changes the path") {
  HybridModeSet hs;
  HybridModeSet::Mode m1, m2;
  m1.A = Mat::Identity(2, 2);
  m1.B = Mat::Zero(2, 1);
  m1.C = Mat::Identity(2, 2);
  m2 = m1;
  hs.modes = {m1, m2};
  hs.dwell = 4;

  const auto src = make_source(100);
  std::vector<int> seq;
  for (int k = 0; k < 40; ++k) seq.push_back(hs.mode_at(k, *src));
  for (int k = 0; k < 40; ++k) CHECK(seq[k] == seq[(k / 4) * 4]);

  const auto src2 = make_source(100);
  for (int k = 0; k < 40; ++k) CHECK(hs.mode_at(k, *src2) == seq[k]);

  const auto src3 = make_source(101);
  bool any_diff = false;
  for (int k = 0; k < 40; ++k) any_diff |= hs.mode_at(k, *src3) != seq[k];
  CHECK(any_diff);
}

TEST_CASE("realized stacked process noise matches its covariance") {
  ExtendedModel em = scalar_blocks_model();
  em.base.Q = 0.7 * Mat::Identity(1, 1);
  em.Q_tilde = 0.3 * Mat::Identity(1, 1);
  const auto src = make_source(33);
  const int N = 10000;
  Mat acc = Mat::Zero(2, 2);
  for (int k = 0; k < N; ++k) {
    const Vec w = draw_process_noise(em, k, *src);
    acc += w * w.transpose();
  }
  acc /= N;
  const Mat q = em.stacked_Q();
  CHECK((acc - q).norm() < 0.05 * q.norm());
}

TEST_CASE("the divergence guard trips on runaway signals") {
  Vec huge(1);
  huge << 1e13;
  CHECK_THROWS_AS(guard_divergence(huge, 3, "state"), DivergenceError);
}
