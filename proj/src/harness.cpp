#include "mtd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "mtd/csv.hpp"

namespace mtd {
namespace {

Mat mean_matrix_rows(const MatrixDistribution& d, int rows) {
  return Vec::Ones(rows) * d.mean.transpose();
}

Mat identity_or(const Mat& m, int dim) {
  return m.size() ? m : Mat(Mat::Identity(dim, dim));
}

/// Steady filter data of the mean system: transition/gain/residue
/// covariance once the covariance recursion has settled.
struct MeanLoop {
  StepMatrices step;
  Mat Sigma;  // residue covariance
  Mat P;      // settled prior covariance
};

MeanLoop settle_mean_loop(const ExtendedModel& model, const Mat& P0,
                          int iterations = 400) {
  MeanLoop loop;
  const Mat A = model.stacked_A(mean_matrix_rows(model.dist_Abar, model.n_aux()));
  const Mat B = model.stacked_B(mean_matrix_rows(model.dist_Btilde, model.n_aux()));
  const Mat C = model.stacked_C(mean_matrix_rows(model.dist_Cbar, model.m_aux()));
  const Mat Q = model.stacked_Q();
  const int nt = model.n_total();
  Mat P = P0;
  Mat K;
  for (int it = 0; it < iterations; ++it) {
    const Mat S = symmetrize(C * P * C.transpose() + model.R_full);
    K = S.ldlt().solve(C * P).transpose();
    P = symmetrize(A * (Mat::Identity(nt, nt) - K * C) * P * A.transpose() + Q);
  }
  loop.step = {A, B, C, K};
  loop.P = P;
  loop.Sigma = symmetrize(C * P * C.transpose() + model.R_full);
  return loop;
}

/// Rolls the mean loop forward from a given prior covariance; returns the
/// per-step matrices and residue covariances for a window of length T+1.
void roll_mean_window(const ExtendedModel& model, const Mat& P_start, int T,
                      std::vector<StepMatrices>* steps,
                      std::vector<Mat>* covs) {
  const Mat A = model.stacked_A(mean_matrix_rows(model.dist_Abar, model.n_aux()));
  const Mat B = model.stacked_B(mean_matrix_rows(model.dist_Btilde, model.n_aux()));
  const Mat C = model.stacked_C(mean_matrix_rows(model.dist_Cbar, model.m_aux()));
  const Mat Q = model.stacked_Q();
  const int nt = model.n_total();
  Mat P = P_start;
  for (int i = 0; i <= T; ++i) {
    const Mat S = symmetrize(C * P * C.transpose() + model.R_full);
    const Mat K = S.ldlt().solve(C * P).transpose();
    steps->push_back({A, B, C, K});
    covs->push_back(S);
    P = symmetrize(A * (Mat::Identity(nt, nt) - K * C) * P * A.transpose() + Q);
  }
}

std::vector<Mat> default_floor_sequence(const DesignBounds& bounds, int T,
                                        int p) {
  if (!bounds.N_t.empty()) return bounds.N_t;
  std::vector<Mat> nt;
  for (int t = 0; t < T; ++t)
    nt.push_back((t + 1) * Mat::Identity(p, p));
  return nt;
}

std::vector<Mat> default_theta_sequence(const DesignBounds& bounds, int T,
                                        int n) {
  if (!bounds.Theta_i.empty()) return bounds.Theta_i;
  return std::vector<Mat>(T, Mat::Identity(n, n));
}

}  // namespace

Mat build_noise_like_paper(int dim, std::uint64_t seed) {
  if (dim < 1) throw ModelError("dimension must be positive");
  const auto src = make_source(seed);
  Mat u(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      u(i, j) = src->uniform(streams::kMisc, 0,
                             static_cast<std::uint64_t>(i) * dim + j);
  return u * u.transpose() / 100.0;
}

ScenarioConfig preset_quadtank(std::uint64_t seed) {
  // Minimum-phase quadruple-tank linearization (levels in cm, pump inputs
  // in V, level sensors in V), sampled at 1 s.
  const double A1 = 28, A2 = 32, A3 = 28, A4 = 32;
  const double a1 = 0.071, a2 = 0.057, a3 = 0.071, a4 = 0.057;
  const double g = 981.0;
  const double k1 = 3.33, k2 = 3.35;
  const double g1 = 0.70, g2 = 0.60;
  const double kc = 0.50;
  const Vec h0 = (Vec(4) << 12.4, 12.7, 1.8, 1.4).finished();

  Vec T(4);
  const double areas[4] = {A1, A2, A3, A4};
  const double outlets[4] = {a1, a2, a3, a4};
  for (int i = 0; i < 4; ++i)
    T(i) = areas[i] / outlets[i] * std::sqrt(2.0 * h0(i) / g);

  Mat Ac = Mat::Zero(4, 4);
  Ac(0, 0) = -1.0 / T(0);
  Ac(1, 1) = -1.0 / T(1);
  Ac(2, 2) = -1.0 / T(2);
  Ac(3, 3) = -1.0 / T(3);
  Ac(0, 2) = A3 / (A1 * T(2));
  Ac(1, 3) = A4 / (A2 * T(3));
  Mat Bc = Mat::Zero(4, 2);
  Bc(0, 0) = g1 * k1 / A1;
  Bc(1, 1) = g2 * k2 / A2;
  Bc(2, 1) = (1.0 - g2) * k2 / A3;
  Bc(3, 0) = (1.0 - g1) * k1 / A4;

  // exact zero-order-hold discretization through the augmented exponential
  Mat aug = Mat::Zero(6, 6);
  aug.topLeftCorner(4, 4) = Ac;
  aug.topRightCorner(4, 2) = Bc;
  const Mat augd = expm(aug);

  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.plant.A = augd.topLeftCorner(4, 4);
  cfg.plant.B = augd.topRightCorner(4, 2);
  cfg.plant.C = Mat::Zero(2, 4);
  cfg.plant.C(0, 0) = kc;
  cfg.plant.C(1, 1) = kc;

  const std::uint64_t noise_seed = derive_child_seed(seed, 1);
  cfg.plant.Q = build_noise_like_paper(4, derive_child_seed(noise_seed, 1));

  ExtendedModel em;
  em.base = cfg.plant;
  em.Q_tilde = build_noise_like_paper(4, derive_child_seed(noise_seed, 2));
  em.R_full = build_noise_like_paper(4, derive_child_seed(noise_seed, 3));
  cfg.plant.R = em.R_full.bottomRightCorner(2, 2);
  em.base.R = cfg.plant.R;

  // sparse random auxiliary dynamics, redrawn until stable
  const auto src = make_source(derive_child_seed(seed, 2));
  auto sparse_normal = [&](int rows, int cols, std::uint64_t attempt) {
    Mat m = Mat::Zero(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const std::uint64_t idx =
            attempt * 1024 + static_cast<std::uint64_t>(i) * cols + j;
        if (src->uniform(streams::kMisc, 1, idx) < 0.5)
          m(i, j) = src->normal(streams::kMisc, 2, idx);
      }
    return m;
  };
  for (std::uint64_t attempt = 0;; ++attempt) {
    em.A_tilde = sparse_normal(4, 4, attempt);
    if (spectral_radius(em.A_tilde) < 1.0) break;
    if (attempt > 10000)
      throw ModelError("could not draw a stable auxiliary block");
  }
  em.C_tilde = sparse_normal(2, 4, 99991);

  em.dist_Abar = {Vec::Ones(4), Mat::Identity(4, 4), {}, Axis::Rows,
                  streams::kCouplingA};
  em.dist_Btilde = {Vec::Zero(2), Mat::Identity(2, 2), {}, Axis::Rows,
                    streams::kActuatorB};
  em.dist_Cbar = {Vec::Ones(4), Mat::Identity(4, 4), {}, Axis::Rows,
                  streams::kCouplingC};
  cfg.extended = em;

  NonlinearitySpec nl;
  nl.kind = NonlinearitySpec::Kind::Power;
  nl.power_c = 2;
  nl.dist_G = {Vec::Zero(2), Mat::Identity(2, 2), {}, Axis::Columns,
               streams::kNonlinearG};
  cfg.nonlinearity = nl;

  const Mat ones_half_2 =
      Vec::Ones(2) * Vec::Ones(2).transpose() + 0.5 * Mat::Identity(2, 2);
  const Mat ones_half_4 =
      Vec::Ones(4) * Vec::Ones(4).transpose() + 0.5 * Mat::Identity(4, 4);
  cfg.design.bounds.N_B = ones_half_2;
  cfg.design.bounds.Theta_A = ones_half_4;
  cfg.design.bounds.Theta_C = ones_half_4;
  cfg.design.bounds.M_cal = ones_half_2;

  cfg.mtd = MtdKind::Extended;
  cfg.attack.kind = AttackKind::CovertSubtract;
  cfg.attack.start_step = 200;
  cfg.attack.magnitude = 0.2;
  cfg.horizon = 400;
  cfg.warmup = 50;
  cfg.trials = 1000;
  cfg.detector.window = 10;
  cfg.controller.Q_lqr = Mat::Identity(4, 4);
  cfg.controller.R_lqr = Mat::Identity(2, 2);
  cfg.controller.setpoint = Vec::Zero(4);
  return cfg;
}

ScenarioConfig preset_hybrid_demo(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.mtd = MtdKind::Hybrid;

  HybridModeSet hs;
  HybridModeSet::Mode m1, m2;
  m1.A = (Mat(2, 2) << 0.55, 0.20, 0.10, 0.65).finished();
  m2.A = (Mat(2, 2) << 0.50, -0.15, 0.20, 0.90).finished();
  m1.B = Mat::Zero(2, 1);
  m2.B = Mat::Zero(2, 1);
  Mat C(3, 2);
  C << 1.0, 0.0, 0.0, 1.0, 1.0, 1.0;
  m1.C = C;
  m2.C = C;
  hs.modes = {m1, m2};
  hs.dwell = 4;
  cfg.hybrid = hs;

  cfg.hybrid_Q = 0.005 * Mat::Identity(2, 2);
  cfg.hybrid_R = 0.01 * Mat::Identity(3, 3);
  cfg.plant.A = m1.A;
  cfg.plant.B = m1.B;
  cfg.plant.C = C;
  cfg.plant.Q = cfg.hybrid_Q;
  cfg.plant.R = cfg.hybrid_R;

  cfg.attack.kind = AttackKind::FdiConstant;
  cfg.attack.sensor_set = {1};
  cfg.attack.sensor_magnitude = 1.0;
  cfg.attack.start_step = 100;
  cfg.horizon = 300;
  cfg.warmup = 20;
  cfg.trials = 200;
  cfg.detector.window = 10;
  cfg.detector.false_alarm_rate = 0.01;
  cfg.detector.exclusion_alarms = 5;
  return cfg;
}

// ---------------------------------------------------------------------------

CompiledScenario compile_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  CompiledScenario sc;
  sc.cfg = cfg;
  const int T = cfg.detector.window;

  if (cfg.mtd == MtdKind::Hybrid) {
    sc.dof = T;
    sc.threshold = threshold_for_far(T, cfg.detector.false_alarm_rate);
    sc.P0_plant = cfg.P0_scale * Mat::Identity(cfg.hybrid->n(), cfg.hybrid->n());
    return sc;
  }

  const int n = cfg.plant.n();
  sc.P0_plant = cfg.P0_scale * Mat::Identity(n, n);
  sc.controller = LqgController::design(
      cfg.plant.A, cfg.plant.B, identity_or(cfg.controller.Q_lqr, n),
      identity_or(cfg.controller.R_lqr, cfg.plant.p()),
      cfg.controller.setpoint.size() ? cfg.controller.setpoint
                                     : Vec(Vec::Zero(n)));

  if (cfg.mtd == MtdKind::None) {
    sc.dof = T * cfg.plant.m();
    sc.threshold = threshold_for_far(sc.dof, cfg.detector.false_alarm_rate);
    return sc;
  }

  sc.model = *cfg.extended;
  if (cfg.mtd == MtdKind::Nonlinear) sc.nl = *cfg.nonlinearity;
  sc.P0_full = cfg.P0_scale * Mat::Identity(sc.model.n_total(), sc.model.n_total());
  sc.dof = T * sc.model.m_total();
  sc.threshold = threshold_for_far(sc.dof, cfg.detector.false_alarm_rate);

  // resolve the covariance designs
  const DesignBounds& bounds = cfg.design.bounds;
  if (cfg.design.source == DesignSource::Explicit) {
    if (!cfg.design.load_file.empty())
      throw ConfigError("loading persisted designs happens in the CLI layer");
    sc.model.dist_Btilde.cov = cfg.design.Sigma_Btilde;
    sc.model.dist_Abar.cov = cfg.design.Sigma_Abar;
    sc.model.dist_Cbar.cov = cfg.design.Sigma_Cbar;
    if (sc.nl && cfg.design.Sigma_G.size())
      sc.nl->dist_G.cov = cfg.design.Sigma_G;
    sc.model.validate();
    return sc;
  }

  if (!bounds.Theta_A.size() || !bounds.Theta_C.size() || !bounds.N_B.size())
    throw ConfigError("optimal/baseline design needs bound matrices");

  const DefenderStacks stacks = build_defender_stacks(sc.model, T - 1);
  const InformationBlocks info = information_blocks(stacks);
  const auto theta_seq = default_theta_sequence(bounds, T, n);

  sc.coupling_sol = solve_coupling_design(
      info, sc.model.dist_Abar.mean, sc.model.dist_Cbar.mean, bounds.Theta_A,
      bounds.Theta_C, theta_seq);
  if (sc.coupling_sol.status != SdpStatus::Optimal)
    throw ExperimentError("coupling design failed: " +
                          to_string(sc.coupling_sol.status));

  // actuator program on the settled mean loop
  {
    std::vector<StepMatrices> steps;
    std::vector<Mat> covs;
    const MeanLoop loop = settle_mean_loop(sc.model, sc.P0_full);
    for (int i = 0; i <= T; ++i) {
      steps.push_back(loop.step);
      covs.push_back(loop.Sigma);
    }
    const ActuatorBlocks blocks = actuator_blocks_time_invariant(
        steps, covs, sc.model.dist_Btilde.mean, sc.model.n_aux(), 0, T);
    sc.actuator_sol = solve_actuator_design(
        blocks, bounds.N_B, default_floor_sequence(bounds, T, sc.model.p()));
    if (sc.actuator_sol.status != SdpStatus::Optimal)
      throw ExperimentError("actuator design failed: " +
                            to_string(sc.actuator_sol.status));
  }

  if (sc.nl) {
    if (!bounds.M_cal.size())
      throw ConfigError("nonlinear design needs the covariance cap");
    sc.nonlin_sol = solve_nonlinearity_design(info.S, sc.nl->dist_G.mean,
                                              bounds.M_cal);
    if (sc.nonlin_sol.status != SdpStatus::Optimal)
      throw ExperimentError("nonlinearity design failed: " +
                            to_string(sc.nonlin_sol.status));
  }

  if (cfg.design.source == DesignSource::Baseline) {
    sc.baseline_coupling = baseline_iid_coupling(
        sc.coupling_sol.objective, info, sc.model.dist_Abar.mean,
        sc.model.dist_Cbar.mean, bounds.Theta_A, bounds.Theta_C, theta_seq);
    if (sc.baseline_coupling.status != SdpStatus::Optimal)
      throw ExperimentError("isotropic coupling baseline is infeasible");
    const int nn = n;
    sc.model.dist_Abar.cov = sc.baseline_coupling.xi1 * Mat::Identity(nn, nn);
    sc.model.dist_Cbar.cov = sc.baseline_coupling.xi2 * Mat::Identity(nn, nn);
    sc.model.dist_Btilde.cov = sc.actuator_sol.Sigma1;
    if (sc.nl) {
      sc.baseline_phi = baseline_iid_nonlinearity(bounds.M_cal);
      sc.nl->dist_G.cov =
          sc.baseline_phi * Mat::Identity(sc.model.m_aux(), sc.model.m_aux());
    }
  } else {
    sc.model.dist_Abar.cov = sc.coupling_sol.Sigma1;
    sc.model.dist_Cbar.cov = sc.coupling_sol.Sigma2;
    sc.model.dist_Btilde.cov = sc.actuator_sol.Sigma1;
    if (sc.nl) sc.nl->dist_G.cov = sc.nonlin_sol.Sigma1;
  }
  sc.model.validate();
  return sc;
}

// ---------------------------------------------------------------------------

namespace {

struct ExtendedLoopState {
  ExtendedModel model;  // trial copy (per-step actuator redesign mutates it)
  std::optional<NonlinearitySpec> nl;
};

Mat per_step_actuator_cov(const ExtendedModel& model, const Mat& P_now, int T,
                          const DesignBounds& bounds) {
  std::vector<StepMatrices> steps;
  std::vector<Mat> covs;
  roll_mean_window(model, P_now, T, &steps, &covs);
  const ActuatorBlocks blocks = actuator_blocks_per_step(
      steps, covs, model.dist_Btilde.mean, model.n_aux(), 0, T);
  const DesignSolution sol = solve_actuator_design(
      blocks, bounds.N_B, default_floor_sequence(bounds, T, model.p()));
  if (sol.status != SdpStatus::Optimal) return model.dist_Btilde.cov;
  return sol.Sigma1;
}

TrialOutput run_extended_trial(const CompiledScenario& sc,
                               std::uint64_t trial_index, bool record) {
  const ScenarioConfig& cfg = sc.cfg;
  const std::uint64_t trial_seed = derive_trial_seed(cfg.seed, trial_index);
  const auto src = make_source(trial_seed);

  ExtendedLoopState ls{sc.model, sc.nl};
  ExtendedModel& model = ls.model;
  const int n = model.n();
  const int nt = model.n_total();
  const int mt = model.m_total();
  const bool nonlinear = ls.nl.has_value();
  const int T = cfg.detector.window;

  TrialOutput out;
  out.recorded = record;

  Vec xbar = draw_initial_state(model, sc.P0_full, *src);
  FilterState fs = FilterState::init(Vec::Zero(nt), sc.P0_full);
  ChiSquaredDetector detector(T, sc.threshold);

  std::optional<CovertSubtractAttacker> covert;
  std::optional<EstimateTrackingAttacker> tracking;
  const std::uint64_t attacker_seed = derive_child_seed(trial_seed, 77);
  if (cfg.attack.kind == AttackKind::CovertSubtract)
    covert.emplace(model, cfg.attack, attacker_seed);
  if (cfg.attack.kind == AttackKind::EstimateTracking && !cfg.attack.oracle)
    tracking.emplace(model, nonlinear ? &*ls.nl : nullptr, cfg.attack,
                     sc.P0_full, attacker_seed);

  try {
    for (int k = 0; k < cfg.horizon; ++k) {
      if (cfg.design.time_varying_actuator)
        model.dist_Btilde.cov =
            per_step_actuator_cov(model, fs.P_prior, T, cfg.design.bounds);

      Mat Abar, Btilde, Cbar, G;
      model.realize(k, *src, &Abar, &Btilde, &Cbar);
      if (nonlinear) G = ls.nl->realize_G(k, model.m_aux(), n, *src);
      const Mat A = model.stacked_A(Abar);
      const Mat B = model.stacked_B(Btilde);
      const Mat C = model.stacked_C(Cbar);

      Vec y_true = C * xbar + draw_sensor_noise(model, k, *src);
      if (nonlinear)
        y_true.head(model.m_aux()) += G * ls.nl->h_vec(xbar.tail(n));

      // the linearization the operator's filter uses this step
      const Mat C_lin =
          nonlinear ? ekf_output_matrix(C, *ls.nl, G, n, fs.x_prior) : C;
      Vec predicted = C * fs.x_prior;
      if (nonlinear)
        predicted.head(model.m_aux()) += G * ls.nl->h_vec(fs.x_prior.tail(n));

      std::optional<FilterSideInfo> side;
      if (cfg.attack.kind == AttackKind::EstimateTracking) {
        FilterSideInfo info;
        info.C = C;
        info.P = fs.P_prior;
        const Mat S = symmetrize(C_lin * fs.P_prior * C_lin.transpose() +
                                 model.R_full);
        info.K = S.ldlt().solve(C_lin * fs.P_prior).transpose();
        side = info;
      }

      // attacker turn
      Vec u_bias = Vec::Zero(model.p());
      Vec d_bias = Vec::Zero(mt);
      switch (cfg.attack.kind) {
        case AttackKind::None:
          break;
        case AttackKind::FdiConstant:
          if (k >= cfg.attack.start_step) {
            u_bias.setConstant(cfg.attack.magnitude);
            d_bias.setConstant(cfg.attack.sensor_magnitude);
          }
          break;
        case AttackKind::ZeroDynamics:
          throw ExperimentError(
              "self-subtraction with exact knowledge applies to the static "
              "plant scenario");
        case AttackKind::CovertSubtract: {
          const auto o = covert->step(k);
          u_bias = o.u_bias;
          d_bias = o.d_bias;
          break;
        }
        case AttackKind::EstimateTracking: {
          if (cfg.attack.oracle) {
            if (k >= cfg.attack.start_step) {
              u_bias.setConstant(cfg.attack.magnitude);
              d_bias = predicted - y_true;
            }
          } else {
            const auto o = tracking->observe(k, y_true, side);
            u_bias = o.u_bias;
            d_bias = o.d_bias;
          }
          break;
        }
      }

      const Vec y_op = y_true + d_bias;

      // detection on the one-step-ahead residue
      const Vec z = y_op - predicted;
      const Mat S_res =
          symmetrize(C_lin * fs.P_prior * C_lin.transpose() + model.R_full);
      const auto det = detector.update(z, S_res);
      out.g.push_back(det.statistic);
      out.alarm.push_back(det.alarm ? 1 : 0);

      // operator: measurement update, control, bookkeeping
      fs = kf_measurement(C_lin, model.R_full, fs, y_op, &predicted);
      const Vec u = sc.controller.control(fs.x_post.tail(n));
      out.deviation.push_back(
          (xbar.tail(n) - sc.controller.setpoint).cwiseAbs().mean());

      if (record) {
        TrialRecording& r = out.rec;
        r.x_true.push_back(xbar);
        r.u_nominal.push_back(u);
        r.u_applied.push_back(u + u_bias);
        r.u_bias.push_back(u_bias);
        r.d_bias.push_back(d_bias);
        r.y_operator.push_back(y_op);
        r.y_attacker.push_back(y_true);
        r.Abar.push_back(Abar);
        r.Btilde.push_back(Btilde);
        r.Cbar.push_back(Cbar);
        if (nonlinear) r.G.push_back(G);
        r.C.push_back(C);
        r.K.push_back(fs.gain);
        r.P.push_back(fs.P_prior);
        r.residue.push_back(z);
        r.residue_cov.push_back(S_res);
        r.xhat_prior.push_back(fs.x_prior);
        r.trace_P.push_back(fs.P_prior.trace());
        r.gain_norm.push_back(fs.gain.norm());
        r.mode.push_back(0);
      }

      if (tracking) tracking->advance(k, u, y_op, side);

      // plant transition with the (possibly biased) actuation
      xbar = A * xbar + B * (u + u_bias) + draw_process_noise(model, k, *src);
      guard_divergence(xbar, k, "closed-loop state");
      fs = kf_time(A, B, model.stacked_Q(), fs, u);
    }
  } catch (const DivergenceError& e) {
    out.diverged = true;
    out.divergence_reason = e.what();
  }
  return out;
}

TrialOutput run_plain_trial(const CompiledScenario& sc,
                            std::uint64_t trial_index, bool record) {
  const ScenarioConfig& cfg = sc.cfg;
  const std::uint64_t trial_seed = derive_trial_seed(cfg.seed, trial_index);
  const auto src = make_source(trial_seed);
  const LTIModel& plant = cfg.plant;
  const int n = plant.n();
  const int m = plant.m();
  const int T = cfg.detector.window;

  TrialOutput out;
  out.recorded = record;
  const Mat Lq = psd_sqrt(plant.Q);
  const Mat Lr = psd_sqrt(plant.R);

  Vec x = psd_sqrt(sc.P0_plant) * src->normal_vector(streams::kInitialState, 0, n);
  FilterState fs = FilterState::init(Vec::Zero(n), sc.P0_plant);
  ChiSquaredDetector detector(T, sc.threshold);
  std::optional<ZeroDynamicsAttacker> zero_dyn;
  if (cfg.attack.kind == AttackKind::ZeroDynamics)
    zero_dyn.emplace(plant.A, plant.B, plant.C);

  try {
    for (int k = 0; k < cfg.horizon; ++k) {
      const Vec v = Lr * src->normal_vector(streams::kSensorNoise, k, m);
      const Vec y_true = plant.C * x + v;

      Vec u_bias = Vec::Zero(plant.p());
      Vec d_bias = Vec::Zero(m);
      if (cfg.attack.kind == AttackKind::FdiConstant &&
          k >= cfg.attack.start_step) {
        u_bias.setConstant(cfg.attack.magnitude);
        d_bias.setConstant(cfg.attack.sensor_magnitude);
      } else if (cfg.attack.kind == AttackKind::ZeroDynamics) {
        Vec ua = Vec::Zero(plant.p());
        if (k >= cfg.attack.start_step) ua.setConstant(cfg.attack.magnitude);
        d_bias = zero_dyn->step(ua);
        u_bias = ua;
      }
      const Vec y_op = y_true + d_bias;

      const Vec z = y_op - plant.C * fs.x_prior;
      const Mat S_res =
          symmetrize(plant.C * fs.P_prior * plant.C.transpose() + plant.R);
      const auto det = detector.update(z, S_res);
      out.g.push_back(det.statistic);
      out.alarm.push_back(det.alarm ? 1 : 0);

      fs = kf_measurement(plant.C, plant.R, fs, y_op);
      const Vec u = sc.controller.control(fs.x_post);
      out.deviation.push_back(
          (x - sc.controller.setpoint).cwiseAbs().mean());

      if (record) {
        TrialRecording& r = out.rec;
        r.x_true.push_back(x);
        r.u_nominal.push_back(u);
        r.u_applied.push_back(u + u_bias);
        r.u_bias.push_back(u_bias);
        r.d_bias.push_back(d_bias);
        r.y_operator.push_back(y_op);
        r.y_attacker.push_back(y_true);
        r.C.push_back(plant.C);
        r.K.push_back(fs.gain);
        r.P.push_back(fs.P_prior);
        r.residue.push_back(z);
        r.residue_cov.push_back(S_res);
        r.xhat_prior.push_back(fs.x_prior);
        r.trace_P.push_back(fs.P_prior.trace());
        r.gain_norm.push_back(fs.gain.norm());
        r.mode.push_back(0);
      }

      x = plant.A * x + plant.B * (u + u_bias) +
          Lq * src->normal_vector(streams::kProcessNoise, k, n);
      guard_divergence(x, k, "closed-loop state");
      fs = kf_time(plant.A, plant.B, plant.Q, fs, u);
    }
  } catch (const DivergenceError& e) {
    out.diverged = true;
    out.divergence_reason = e.what();
  }
  return out;
}

TrialOutput run_hybrid_trial(const CompiledScenario& sc,
                             std::uint64_t trial_index, bool record) {
  const ScenarioConfig& cfg = sc.cfg;
  HybridScenario hsc;
  hsc.modes = *cfg.hybrid;
  hsc.Q = cfg.hybrid_Q.size() ? cfg.hybrid_Q : cfg.plant.Q;
  hsc.R = cfg.hybrid_R.size() ? cfg.hybrid_R : cfg.plant.R;
  hsc.P0 = sc.P0_plant;
  hsc.attack = cfg.attack;
  hsc.horizon = cfg.horizon;
  hsc.window = cfg.detector.window;
  hsc.false_alarm_rate = cfg.detector.false_alarm_rate;
  hsc.exclusion_alarms = cfg.detector.exclusion_alarms;
  hsc.fusion_sigma = cfg.fusion_sigma;
  hsc.seed = derive_trial_seed(cfg.seed, trial_index);

  TrialOutput out;
  out.recorded = record;
  const IdentifyResult res = identify_run(hsc);
  out.flagged_sensors = res.flagged;
  out.g.assign(cfg.horizon, 0.0);
  out.alarm.assign(cfg.horizon, 0);
  out.deviation.assign(cfg.horizon, 0.0);
  // peak statistics act as the aggregate trace for the switched pipeline
  if (!res.peak_statistic.empty())
    out.g.assign(cfg.horizon,
                 *std::max_element(res.peak_statistic.begin(),
                                   res.peak_statistic.end()));
  return out;
}

}  // namespace

TrialOutput run_trial(const CompiledScenario& sc, std::uint64_t trial_index,
                      bool record) {
  switch (sc.cfg.mtd) {
    case MtdKind::None:
      return run_plain_trial(sc, trial_index, record);
    case MtdKind::Hybrid:
      return run_hybrid_trial(sc, trial_index, record);
    case MtdKind::Extended:
    case MtdKind::Nonlinear:
      return run_extended_trial(sc, trial_index, record);
  }
  throw ExperimentError("unreachable scenario kind");
}

// ---------------------------------------------------------------------------

ExperimentResult run_experiment(const ScenarioConfig& cfg_in) {
  ScenarioConfig cfg = cfg_in;
  if (cfg.ci_mode) cfg.trials = std::min(cfg.trials, 100);
  const CompiledScenario sc = compile_scenario(cfg);

  std::vector<TrialOutput> outputs(cfg.trials);
  const unsigned workers =
      std::max(1u, std::min(std::thread::hardware_concurrency(), 8u));
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int t = next.fetch_add(1);
        if (t >= cfg.trials) return;
        outputs[t] = run_trial(sc, t, t == 0);
      }
    });
  }
  for (auto& th : pool) th.join();

  ExperimentResult res;
  res.threshold = sc.threshold;
  res.dof = sc.dof;
  res.actuator_sol = sc.actuator_sol;
  res.coupling_sol = sc.coupling_sol;
  res.nonlin_sol = sc.nonlin_sol;
  res.baseline_coupling = sc.baseline_coupling;
  res.baseline_phi = sc.baseline_phi;

  res.mean_g.assign(cfg.horizon, 0.0);
  res.alarm_rate.assign(cfg.horizon, 0.0);
  res.mean_deviation.assign(cfg.horizon, 0.0);
  if (cfg.mtd == MtdKind::Hybrid && cfg.hybrid)
    res.sensor_flag_rate.assign(cfg.hybrid->m(), 0.0);

  int exact = 0;
  for (int t = 0; t < cfg.trials; ++t) {
    const TrialOutput& o = outputs[t];
    if (o.diverged) {
      ++res.diverged;
      continue;
    }
    ++res.completed;
    for (int k = 0; k < cfg.horizon; ++k) {
      res.mean_g[k] += o.g[k];
      res.alarm_rate[k] += o.alarm[k];
      res.mean_deviation[k] += o.deviation[k];
    }
    if (cfg.mtd == MtdKind::Hybrid) {
      for (int s : o.flagged_sensors) res.sensor_flag_rate[s] += 1.0;
      if (o.flagged_sensors == cfg.attack.sensor_set) ++exact;
    }
  }
  if (res.completed == 0)
    throw ExperimentError("every trial diverged");
  if (res.diverged > 0.05 * cfg.trials)
    throw ExperimentError("more than 5% of trials diverged (" +
                          std::to_string(res.diverged) + "/" +
                          std::to_string(cfg.trials) + ")");
  for (int k = 0; k < cfg.horizon; ++k) {
    res.mean_g[k] /= res.completed;
    res.alarm_rate[k] /= res.completed;
    res.mean_deviation[k] /= res.completed;
  }
  for (double& r : res.sensor_flag_rate) r /= res.completed;
  if (cfg.mtd == MtdKind::Hybrid)
    res.exact_identification_rate =
        static_cast<double>(exact) / res.completed;

  const int first_full = std::max(cfg.warmup, cfg.detector.window);
  double alarms = 0.0;
  int steps = 0;
  for (int k = first_full; k < cfg.horizon; ++k) {
    alarms += res.alarm_rate[k];
    ++steps;
  }
  res.overall_alarm_rate = steps ? alarms / steps : 0.0;

  if (cfg.bound.enabled && outputs[0].recorded && !outputs[0].diverged &&
      (cfg.mtd == MtdKind::Extended || cfg.mtd == MtdKind::Nonlinear))
    res.bound = bound_trace(sc, outputs[0].rec, derive_child_seed(cfg.seed, 5));

  if (cfg.fim.enabled && outputs[0].recorded && !outputs[0].diverged &&
      (cfg.mtd == MtdKind::Extended || cfg.mtd == MtdKind::Nonlinear)) {
    const FimTrace ft = fim_trace(sc, outputs[0].rec);
    res.fim_steps = ft.steps;
    res.fim_nl = ft.norm_nl;
    res.fim_l = ft.norm_l;
    res.fim_delta = ft.norm_delta;
    res.fim_psd = ft.psd_ok;
  }
  return res;
}

std::vector<double> bound_trace(const CompiledScenario& sc,
                                const TrialRecording& rec,
                                std::uint64_t replay_seed) {
  const int steps = static_cast<int>(rec.y_attacker.size());
  auto model = std::make_shared<ExtendedTrackingModel>(
      sc.model, sc.nl ? &*sc.nl : nullptr, sc.P0_full);
  model->set_recorded(rec.u_applied, rec.u_nominal, rec.y_operator);
  model->set_side_info(rec.C, rec.K);

  ParticleFilterConfig pcfg;
  pcfg.count = sc.cfg.bound.particles;
  pcfg.jitter = sc.cfg.bound.jitter;
  ParticleFilter pf(model, pcfg, make_source(replay_seed));

  std::vector<Mat> Z(steps);
  for (int k = 0; k < steps; ++k) {
    Z[k] = posterior_info_step(pf, k, pcfg.jitter).Z;
    pf.update_weights(rec.y_attacker[k], k);
    pf.maybe_resample(k);
    if (k + 1 < steps) pf.propagate(k);
  }

  const int T = sc.cfg.detector.window;
  std::vector<double> bound(steps, 0.0);
  for (int k = 0; k < steps; ++k) {
    std::vector<Mat> Cw, Sw, Zw;
    for (int i = std::max(0, k - T + 1); i <= k; ++i) {
      Cw.push_back(rec.C[i]);
      Sw.push_back(rec.residue_cov[i]);
      Zw.push_back(Z[i]);
    }
    bound[k] = detection_bound(Cw, Sw, Zw);
  }
  return bound;
}

FimTrace fim_trace(const CompiledScenario& sc, const TrialRecording& rec) {
  const int T = sc.cfg.detector.window;
  const int steps = static_cast<int>(rec.x_true.size());
  const int n = sc.model.n();
  const DefenderStacks stacks = build_defender_stacks(sc.model, T - 1);

  const Mat Sigma_A = sc.model.dist_Abar.cov;
  const Mat Sigma_B = sc.model.dist_Btilde.cov;
  const Mat Sigma_C = sc.model.dist_Cbar.cov;
  const Mat Sigma_G = sc.nl ? sc.nl->dist_G.cov : Mat();

  FimTrace out;
  const auto& powers = sc.cfg.fim.powers;
  out.norm_nl.assign(powers.size(), {});

  for (int k = T - 1; k < steps; k += std::max(1, sc.cfg.fim.stride)) {
    std::vector<Vec> xs, us;
    for (int i = k - T + 1; i <= k; ++i) {
      xs.push_back(rec.x_true[i].tail(n));
      us.push_back(rec.u_applied[i]);
    }
    out.steps.push_back(k);
    bool psd = true;
    double delta = 0.0;
    double lin = 0.0;
    for (std::size_t pi = 0; pi < powers.size(); ++pi) {
      AttackerFim fim;
      if (sc.nl) {
        NonlinearitySpec nl = *sc.nl;
        nl.power_c = powers[pi];
        fim = attacker_fim(stacks, &nl, xs, us, Sigma_A, Sigma_B, Sigma_C,
                           Sigma_G);
      } else {
        fim = attacker_fim(stacks, nullptr, xs, us, Sigma_A, Sigma_B, Sigma_C,
                           Mat::Zero(sc.model.m_aux(), sc.model.m_aux()));
      }
      out.norm_nl[pi].push_back(fim.norm_nonlinear);
      lin = fim.norm_linear;
      if (!sc.nl || powers[pi] == (sc.nl ? sc.nl->power_c : powers[0]) ||
          pi == 0)
        delta = fim.norm_difference;
      psd = psd && min_eigenvalue(fim.difference) >=
                       -1e-9 * (1.0 + fim.norm_difference);
    }
    out.norm_l.push_back(lin);
    out.norm_delta.push_back(delta);
    out.psd_ok.push_back(psd ? 1 : 0);
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_experiment_outputs(const ScenarioConfig& cfg,
                              const ExperimentResult& result,
                              const TrialOutput* sample, bool svg) {
  ensure_directory(cfg.out_dir);
  const std::string dir = cfg.out_dir + "/";

  {
    CsvWriter w(dir + "detection_mean.csv", {"k", "g_mean", "alarm_rate", "eta"});
    for (std::size_t k = 0; k < result.mean_g.size(); ++k)
      w.row({static_cast<double>(k), result.mean_g[k], result.alarm_rate[k],
             result.threshold});
  }

  if (!result.bound.empty()) {
    CsvWriter w(dir + "bound.csv", {"k", "g_mean", "bound"});
    for (std::size_t k = 0; k < result.bound.size(); ++k)
      w.row({static_cast<double>(k), result.mean_g[k], result.bound[k]});
    if (svg)
      write_svg_chart(dir + "bound.svg", "detection statistic vs floor",
                      {"g_mean", "bound"}, {result.mean_g, result.bound});
  }

  if (!result.fim_steps.empty()) {
    {
      CsvWriter w(dir + "fim.csv",
                  {"k", "norm_I_NL", "norm_I_L", "norm_delta", "psd_ok"});
      for (std::size_t i = 0; i < result.fim_steps.size(); ++i)
        w.row({static_cast<double>(result.fim_steps[i]),
               result.fim_nl.empty() ? result.fim_l[i] : result.fim_nl[0][i],
               result.fim_l[i], result.fim_delta[i],
               static_cast<double>(result.fim_psd[i])});
    }
    std::vector<std::string> header{"k"};
    for (int c : cfg.fim.powers)
      header.push_back("norm_I_NL_p" + std::to_string(c));
    header.push_back("norm_I_L");
    CsvWriter w(dir + "fim_powers.csv", header);
    for (std::size_t i = 0; i < result.fim_steps.size(); ++i) {
      std::vector<double> row{static_cast<double>(result.fim_steps[i])};
      for (const auto& series : result.fim_nl) row.push_back(series[i]);
      row.push_back(result.fim_l[i]);
      w.row(row);
    }
  }

  if (!result.sensor_flag_rate.empty()) {
    CsvWriter w(dir + "identified.csv", {"sensor", "flag_rate"});
    for (std::size_t s = 0; s < result.sensor_flag_rate.size(); ++s)
      w.row({static_cast<double>(s + 1), result.sensor_flag_rate[s]});
  }

  if (sample && sample->recorded && !sample->rec.x_true.empty()) {
    const TrialRecording& r = sample->rec;
    const int n = cfg.plant.n();
    const bool stacked = cfg.mtd == MtdKind::Extended ||
                         cfg.mtd == MtdKind::Nonlinear;
    const int n_aux = stacked ? static_cast<int>(r.x_true[0].size()) - n : 0;
    const int m = cfg.plant.m();
    const int m_aux =
        stacked ? static_cast<int>(r.y_operator[0].size()) - m : 0;

    {
      std::vector<std::string> header{"k"};
      for (const auto& h : numbered("x", n)) header.push_back(h);
      for (const auto& h : numbered("xtilde", n_aux)) header.push_back(h);
      for (const auto& h : numbered("u", static_cast<int>(r.u_nominal[0].size())))
        header.push_back(h);
      for (const auto& h : numbered("y", m)) header.push_back(h);
      for (const auto& h : numbered("ytilde", m_aux)) header.push_back(h);
      header.push_back("mode");
      CsvWriter w(dir + "trajectory.csv", header);
      for (std::size_t k = 0; k < r.x_true.size(); ++k) {
        std::vector<double> row{static_cast<double>(k)};
        const Vec& x = r.x_true[k];
        for (int i = 0; i < n; ++i) row.push_back(stacked ? x(n_aux + i) : x(i));
        for (int i = 0; i < n_aux; ++i) row.push_back(x(i));
        for (int i = 0; i < r.u_nominal[k].size(); ++i)
          row.push_back(r.u_nominal[k](i));
        const Vec& y = r.y_operator[k];
        for (int i = 0; i < m; ++i) row.push_back(stacked ? y(m_aux + i) : y(i));
        for (int i = 0; i < m_aux; ++i) row.push_back(y(i));
        row.push_back(r.mode[k]);
        w.row(row);
      }
    }
    {
      std::vector<std::string> header{"k"};
      for (const auto& h :
           numbered("xhat_prior", static_cast<int>(r.xhat_prior[0].size())))
        header.push_back(h);
      header.push_back("trace_P");
      header.push_back("gain_fro_norm");
      CsvWriter w(dir + "filter.csv", header);
      for (std::size_t k = 0; k < r.xhat_prior.size(); ++k) {
        std::vector<double> row{static_cast<double>(k)};
        for (int i = 0; i < r.xhat_prior[k].size(); ++i)
          row.push_back(r.xhat_prior[k](i));
        row.push_back(r.trace_P[k]);
        row.push_back(r.gain_norm[k]);
        w.row(row);
      }
    }
    {
      std::vector<std::string> header{"k"};
      for (const auto& h : numbered("ua", static_cast<int>(r.u_bias[0].size())))
        header.push_back(h);
      for (const auto& h : numbered("da", static_cast<int>(r.d_bias[0].size())))
        header.push_back(h);
      CsvWriter w(dir + "attack.csv", header);
      for (std::size_t k = 0; k < r.u_bias.size(); ++k) {
        std::vector<double> row{static_cast<double>(k)};
        for (int i = 0; i < r.u_bias[k].size(); ++i)
          row.push_back(r.u_bias[k](i));
        for (int i = 0; i < r.d_bias[k].size(); ++i)
          row.push_back(r.d_bias[k](i));
        w.row(row);
      }
    }
    {
      CsvWriter w(dir + "detection.csv", {"k", "g", "eta", "alarm"});
      for (std::size_t k = 0; k < sample->g.size(); ++k)
        w.row({static_cast<double>(k), sample->g[k], result.threshold,
               static_cast<double>(sample->alarm[k])});
    }
  }

  if (svg) {
    write_svg_chart(dir + "detection_mean.svg", "mean detection statistic",
                    {"g_mean"}, {result.mean_g});
    write_svg_chart(dir + "deviation.svg", "mean state deviation",
                    {"deviation"}, {result.mean_deviation});
  }
}

}  // namespace mtd
