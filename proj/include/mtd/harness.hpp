#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtd/attacks.hpp"
#include "mtd/bounds.hpp"
#include "mtd/config.hpp"
#include "mtd/design_opt.hpp"
#include "mtd/detection.hpp"
#include "mtd/estimation.hpp"
#include "mtd/hybrid_mtd.hpp"
#include "mtd/lqg.hpp"

namespace mtd {

struct ExperimentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Random PSD matrix of the benchmark's noise scale: U uniform(0,1),
/// M = U U' / 100.
Mat build_noise_like_paper(int dim, std::uint64_t seed);

/// The four-tank benchmark scenario with the authenticating extension:
/// four plant states, two pumps, two level sensors, four auxiliary states,
/// two auxiliary sensors, window-10 detector, self-subtracting input attack.
ScenarioConfig preset_quadtank(std::uint64_t seed = 1);

/// Small three-sensor switched-plant scenario for the identification
/// pipeline (two modes with disjoint spectra, dwell 2n).
ScenarioConfig preset_hybrid_demo(std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Compiled scenario and per-trial execution
// ---------------------------------------------------------------------------

/// Scenario with all design programs resolved; immutable across trials.
struct CompiledScenario {
  ScenarioConfig cfg;
  ExtendedModel model;  // covariances replaced by the resolved design
  std::optional<NonlinearitySpec> nl;
  LqgController controller;
  Mat P0_full;   // stacked initial/filter covariance
  Mat P0_plant;  // plant block (plain-plant scenarios)
  double threshold = 0.0;
  int dof = 0;
  DesignSolution actuator_sol, coupling_sol, nonlin_sol;
  IidCouplingSolution baseline_coupling;
  double baseline_phi = 0.0;
};

CompiledScenario compile_scenario(const ScenarioConfig& cfg);

/// Everything a replay (bound, information traces, oracles) needs from a
/// recorded trial.
struct TrialRecording {
  std::vector<Vec> x_true;      // stacked true state per step
  std::vector<Vec> u_nominal;   // operator's control
  std::vector<Vec> u_applied;   // control plus actuation bias
  std::vector<Vec> u_bias, d_bias;
  std::vector<Vec> y_operator, y_attacker;
  std::vector<Mat> Abar, Btilde, Cbar, G;
  std::vector<Mat> C, K, P;     // realized filter-side matrices
  std::vector<Mat> residue_cov;
  std::vector<Vec> residue;
  std::vector<Vec> xhat_prior;
  std::vector<double> trace_P, gain_norm;
  std::vector<int> mode;
};

struct TrialOutput {
  std::vector<double> g;
  std::vector<std::uint8_t> alarm;
  std::vector<double> deviation;
  bool diverged = false;
  std::string divergence_reason;
  TrialRecording rec;  // populated only when recording was requested
  bool recorded = false;
  // hybrid pipeline results
  std::vector<int> flagged_sensors;
};

TrialOutput run_trial(const CompiledScenario& sc, std::uint64_t trial_index,
                      bool record);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ExperimentResult {
  std::vector<double> mean_g;
  std::vector<double> alarm_rate;
  std::vector<double> mean_deviation;
  double overall_alarm_rate = 0.0;  // over post-warmup full-window steps
  double threshold = 0.0;
  int dof = 0;
  int completed = 0;
  int diverged = 0;

  std::vector<double> bound;  // per step, when the bound pass is enabled

  std::vector<int> fim_steps;
  std::vector<std::vector<double>> fim_nl;  // one row per configured power
  std::vector<double> fim_l;
  std::vector<double> fim_delta;
  std::vector<std::uint8_t> fim_psd;

  std::vector<double> sensor_flag_rate;  // hybrid: per-sensor flag frequency
  double exact_identification_rate = 0.0;

  DesignSolution actuator_sol, coupling_sol, nonlin_sol;
  IidCouplingSolution baseline_coupling;
  double baseline_phi = 0.0;
};

/// Runs the configured number of trials in parallel (deterministic per-trial
/// seeds, aggregation in trial order) and aggregates the traces. Throws
/// ExperimentError when more than 5% of trials diverge.
ExperimentResult run_experiment(const ScenarioConfig& cfg);

/// Bound replay on a recorded trial: the interceptor's particle cloud with
/// the granted filter-side information, one floor value per step.
std::vector<double> bound_trace(const CompiledScenario& sc,
                                const TrialRecording& rec,
                                std::uint64_t replay_seed);

/// Information traces along a recorded trial, one window every `stride`
/// steps, for each configured nonlinearity power.
struct FimTrace {
  std::vector<int> steps;
  std::vector<std::vector<double>> norm_nl;  // [power][window]
  std::vector<double> norm_l;
  std::vector<double> norm_delta;            // for the first power
  std::vector<std::uint8_t> psd_ok;
};

FimTrace fim_trace(const CompiledScenario& sc, const TrialRecording& rec);

/// Writes the experiment CSV outputs (and optional SVG charts) to
/// cfg.out_dir; `sample` is an optional recorded trial for the trajectory,
/// filter, attack and detection traces.
void write_experiment_outputs(const ScenarioConfig& cfg,
                              const ExperimentResult& result,
                              const TrialOutput* sample, bool svg = false);

}  // namespace mtd
