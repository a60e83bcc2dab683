#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtd/attacks.hpp"
#include "mtd/estimation.hpp"

using namespace mtd;

TEST_CASE("no actuation bias means no sensor bias") {
  ZeroDynamicsAttacker att(Mat::Identity(2, 2), Mat::Identity(2, 2),
                           Mat::Identity(2, 2));
  for (int k = 0; k < 5; ++k)
    CHECK(att.step(Vec::Zero(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar self-subtraction arithmetic") {
  // A = B = C = 1, a unit bias at step 0 shows up negated one step later
  const auto d = zero_dynamics_attack(Mat::Ones(1, 1), Mat::Ones(1, 1),
                                      Mat::Ones(1, 1),
                                      {Vec::Ones(1), Vec::Zero(1)});
  CHECK(d[0](0) == 0.0);
  CHECK(d[1](0) == doctest::Approx(-1.0));
}

TEST_CASE("self-subtraction leaves the static plant's residues untouched") {
  const auto src = make_source(31);
  Mat A = 0.6 * src->normal_matrix(streams::kMisc, 0, 2, 2);
  Mat B = src->normal_matrix(streams::kMisc, 1, 2, 1);
  Mat C = src->normal_matrix(streams::kMisc, 2, 2, 2);
  const Mat Q = 0.1 * Mat::Identity(2, 2);
  const Mat R = 0.1 * Mat::Identity(2, 2);

  auto run = [&](bool attacked) {
    std::vector<Vec> residues;
    Vec x = Vec::Zero(2);
    Vec xa = Vec::Zero(2);
    ZeroDynamicsAttacker att(A, B, C);
    FilterState fs = FilterState::init(Vec::Zero(2), Mat::Identity(2, 2));
    for (int k = 0; k < 60; ++k) {
      const Vec w = psd_sqrt(Q) * src->normal_vector(streams::kProcessNoise, k, 2);
      const Vec v = psd_sqrt(R) * src->normal_vector(streams::kSensorNoise, k, 2);
      Vec ua = Vec::Zero(1);
      if (attacked && k >= 10) ua.setConstant(0.5);
      const Vec d = attacked ? att.step(ua) : Vec(Vec::Zero(2));
      const Vec y = C * x + v + d;
      residues.push_back(y - C * fs.x_prior);
      fs = kf_step(A, B, C, Q, R, fs, Vec::Zero(1), y);
      x = A * x + B * (attacked ? ua : Vec(Vec::Zero(1))) + w;
    }
    return residues;
  };

  const auto nominal = run(false);
  const auto attacked = run(true);
  for (std::size_t k = 0; k < nominal.size(); ++k)
    CHECK((nominal[k] - attacked[k]).cwiseAbs().maxCoeff() < 1e-9);
}

// ---------------------------------------------------------------------------

namespace {

/// Small time-varying loop used to validate the residue-bias algebra.
struct Loop {
  std::vector<StepMatrices> steps;
  Mat Q, R;
};

Loop random_loop(int n, int p, int m, int len, std::uint64_t seed) {
  Loop loop;
  const auto src = make_source(seed);
  loop.Q = 0.1 * Mat::Identity(n, n);
  loop.R = 0.1 * Mat::Identity(m, m);
  Mat P = Mat::Identity(n, n);
  for (int t = 0; t < len; ++t) {
    StepMatrices sm;
    sm.A = 0.5 * src->normal_matrix(streams::kMisc, 10 * t, n, n);
    sm.B = src->normal_matrix(streams::kMisc, 10 * t + 1, n, p);
    sm.C = src->normal_matrix(streams::kMisc, 10 * t + 2, m, n);
    const Mat S = sm.C * P * sm.C.transpose() + loop.R;
    sm.K = S.ldlt().solve(sm.C * P).transpose();
    P = sm.A * (Mat::Identity(n, n) - sm.K * sm.C) * P * sm.A.transpose() +
        loop.Q;
    loop.steps.push_back(sm);
  }
  return loop;
}

}  // namespace

TEST_CASE("empty propagator product is the identity") {
  const Loop loop = random_loop(2, 1, 2, 4, 5);
  const Mat d = bias_propagator(loop.steps, 0, 0, 1);
  CHECK((d - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("current-step sensor bias feeds through with a unit block") {
  const Loop loop = random_loop(2, 1, 2, 5, 6);
  const BiasMaps maps = build_bias_maps(loop.steps, 0, 2, 4);
  CHECK((maps.M_sensor.middleCols(2, 2) - Mat::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  // blocks after the residue step are zero
  CHECK(maps.M_sensor.rightCols(4).cwiseAbs().maxCoeff() == 0.0);
  CHECK(maps.M_input.rightCols(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bias maps reproduce the paired noise-free residue difference") {
  const int n = 2, p = 1, m = 2;
  const int j = 0, k = 6;
  const Loop loop = random_loop(n, p, m, k + 1, 7);
  const auto src = make_source(8);

  // arbitrary bias profile: inputs at j..k-1, sensor biases at j+1..k
  std::vector<Vec> u_bias(k + 1, Vec::Zero(p));
  std::vector<Vec> d_bias(k + 1, Vec::Zero(m));
  for (int t = j; t <= k - 1; ++t)
    u_bias[t] = src->normal_vector(streams::kMisc, t, p);
  for (int t = j + 1; t <= k; ++t)
    d_bias[t] = src->normal_vector(streams::kMisc, 100 + t, m);

  Vec phi(p * (k - j) + m * (k - j));
  for (int t = j; t <= k - 1; ++t) phi.segment((t - j) * p, p) = u_bias[t];
  for (int t = j + 1; t <= k; ++t)
    phi.segment(p * (k - j) + (t - j - 1) * m, m) = d_bias[t];

  // paired noise-free closed loops sharing the same gains
  auto run = [&](bool attacked) {
    std::vector<Vec> residues;
    Vec x = Vec::Zero(n);
    Vec xhat = Vec::Zero(n);
    for (int t = j; t <= k; ++t) {
      const StepMatrices& sm = loop.steps[t];
      Vec y = sm.C * x;
      if (attacked) y += d_bias[t];
      residues.push_back(y - sm.C * xhat);
      const Vec post = xhat + sm.K * (y - sm.C * xhat);
      Vec u_eff = Vec::Zero(p);
      if (attacked) u_eff += u_bias[t];
      x = sm.A * x + sm.B * u_eff;
      xhat = sm.A * post;
    }
    return residues;
  };
  const auto nominal = run(false);
  const auto attacked = run(true);

  for (int i = j + 1; i <= k; ++i) {
    const BiasMaps maps = build_bias_maps(loop.steps, j, i, k);
    const Vec predicted = maps.stacked() * phi;
    const Vec actual = attacked[i] - nominal[i];
    CHECK((predicted - actual).cwiseAbs().maxCoeff() < 1e-8);
  }
}

// ---------------------------------------------------------------------------

namespace {

ExtendedModel deterministic_extended() {
  ExtendedModel em;
  em.base.A = (Mat(1, 1) << 0.8).finished();
  em.base.B = Mat::Ones(1, 1);
  em.base.C = Mat::Ones(1, 1);
  em.base.Q = Mat::Zero(1, 1);
  em.base.R = 1e-10 * Mat::Identity(1, 1);
  em.A_tilde = (Mat(1, 1) << 0.5).finished();
  em.C_tilde = Mat::Ones(1, 1);
  em.Q_tilde = Mat::Zero(1, 1);
  em.R_full = 1e-10 * Mat::Identity(2, 2);
  em.dist_Abar = {0.3 * Vec::Ones(1), Mat::Zero(1, 1), {}, Axis::Rows,
                  streams::kCouplingA};
  em.dist_Btilde = {0.2 * Vec::Ones(1), Mat::Zero(1, 1), {}, Axis::Rows,
                    streams::kActuatorB};
  em.dist_Cbar = {0.4 * Vec::Ones(1), Mat::Zero(1, 1), {}, Axis::Rows,
                  streams::kCouplingC};
  return em;
}

}  // namespace

TEST_CASE("one deterministic hypothesis reproduces the closed-form bias") {
  // zero covariances, zero noise: the single particle carries the exact
  // operator estimate, so the emitted bias is the expected-output recipe
  const ExtendedModel em = deterministic_extended();
  AttackSpec spec;
  spec.kind = AttackKind::EstimateTracking;
  spec.start_step = 0;
  spec.magnitude = 0.1;
  spec.particles = 1;

  EstimateTrackingAttacker att(em, nullptr, spec, Mat::Zero(2, 2), 99);

  // defender loop, noise-free
  Vec xbar = Vec::Zero(2);
  FilterState fs = FilterState::init(Vec::Zero(2), Mat::Zero(2, 2));
  const Mat A = em.stacked_A(0.3 * Mat::Ones(1, 1));
  const Mat B = em.stacked_B(0.2 * Mat::Ones(1, 1));
  const Mat C = em.stacked_C(0.4 * Mat::Ones(1, 1));

  for (int k = 0; k < 15; ++k) {
    const Vec y_true = C * xbar;
    FilterSideInfo side;
    side.C = C;
    side.P = fs.P_prior;
    const Mat S = C * fs.P_prior * C.transpose() + em.R_full;
    side.K = S.ldlt().solve(C * fs.P_prior).transpose();

    const auto out = att.observe(k, y_true, side);
    const Vec expected = C * fs.x_prior - y_true;
    CHECK((out.d_bias - expected).cwiseAbs().maxCoeff() < 1e-7);

    const Vec y_op = y_true + out.d_bias;
    fs = kf_measurement(C, em.R_full, fs, y_op);
    const Vec u = Vec::Zero(1);
    att.advance(k, u, y_op, side);
    xbar = A * xbar + B * (u + out.u_bias);
    fs = kf_time(A, B, em.stacked_Q(), fs, u);
  }
}

TEST_CASE("the emitted bias minimizes the expected window term") {
  // quadratic in the bias: the cloud mean is the exact minimizer, and any
  // perturbation increases the expected quadratic form
  const auto src = make_source(17);
  const int L = 50;
  std::vector<Vec> xhat(L);
  std::vector<double> w(L, 1.0 / L);
  const Mat C = src->normal_matrix(streams::kMisc, 0, 2, 3);
  Mat S = src->normal_matrix(streams::kMisc, 1, 2, 2);
  S = (S * S.transpose() + Mat::Identity(2, 2)).eval();
  const Vec y = src->normal_vector(streams::kMisc, 2, 2);
  Vec mean = Vec::Zero(3);
  for (int j = 0; j < L; ++j) {
    xhat[j] = src->normal_vector(streams::kMisc, 10 + j, 3);
    mean += w[j] * xhat[j];
  }
  auto expected_term = [&](const Vec& d) {
    double acc = 0.0;
    for (int j = 0; j < L; ++j) {
      const Vec z = y + d - C * xhat[j];
      acc += w[j] * z.dot(S.ldlt().solve(z));
    }
    return acc;
  };
  const Vec d_star = C * mean - y;
  const double f_star = expected_term(d_star);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec delta = 0.3 * src->normal_vector(streams::kMisc, 200 + trial, 2);
    CHECK(expected_term(d_star + delta) >= f_star - 1e-12);
  }
}

TEST_CASE("window bounds are enforced") {
  const Loop loop = random_loop(2, 1, 2, 5, 9);
  CHECK_THROWS(build_bias_maps(loop.steps, 0, 0, 4));
  CHECK_THROWS(build_bias_maps(loop.steps, 0, 5, 4));
}
