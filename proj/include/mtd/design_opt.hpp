#pragma once

#include <string>
#include <vector>

#include "mtd/attacks.hpp"
#include "mtd/information.hpp"
#include "mtd/sdp.hpp"

namespace mtd {

/// PSD bound matrices of the three covariance design programs.
struct DesignBounds {
  Mat N_B;                  // actuator covariance cap
  std::vector<Mat> N_t;     // actuator constraint floors, one per window slot
  Mat Theta_A, Theta_C;     // coupling covariance caps
  std::vector<Mat> Theta_i; // coupling constraint floors
  Mat M_cal;                // nonlinearity covariance cap
};

struct DesignSolution {
  SdpStatus status = SdpStatus::NumericalFailure;
  double objective = 0.0;
  Mat Sigma1;  // actuator / coupling-A / nonlinearity covariance
  Mat Sigma2;  // coupling-C covariance (when applicable)
  std::vector<double> slacks;
  double min_slack = 0.0;
};

// ---------------------------------------------------------------------------
// Actuator covariance program
// ---------------------------------------------------------------------------

/// Per-window-slot data of the actuator program: the objective-side
/// constraint for slot t reads  trace_coeff[t] * Sigma + constant[t]
/// >= eps * N_{t+1}.
struct ActuatorBlocks {
  std::vector<double> trace_coeff;
  std::vector<Mat> constant;
  int p = 0;
};

/// Blocks for a window-anchored design: the bias slot t covers an injection
/// at step j+t acting on residues j+t+1..k of the realized window.
ActuatorBlocks actuator_blocks_time_invariant(
    const std::vector<StepMatrices>& steps, const std::vector<Mat>& residue_cov,
    const Vec& mu_B, int n_aux, int j, int k);

/// Blocks for the step-k design: the injection is fixed at step k and the
/// slot-t constraint covers residues k+1..k+T-t (future matrices are
/// supplied by the caller, typically at the law's mean).
ActuatorBlocks actuator_blocks_per_step(const std::vector<StepMatrices>& steps,
                                        const std::vector<Mat>& residue_cov,
                                        const Vec& mu_B, int n_aux, int k,
                                        int T);

struct ActuatorProgram {
  SdpProblem sdp;
  SdpProblem::MatrixVar sigma;
  int eps = 0;
};

ActuatorProgram build_actuator_design(const ActuatorBlocks& blocks,
                                      const Mat& N_B,
                                      const std::vector<Mat>& N_t);

DesignSolution solve_actuator_design(const ActuatorBlocks& blocks,
                                     const Mat& N_B,
                                     const std::vector<Mat>& N_t,
                                     const SdpOptions& opts = {});

// ---------------------------------------------------------------------------
// Coupling covariance program
// ---------------------------------------------------------------------------

struct CouplingProgram {
  SdpProblem sdp;
  SdpProblem::MatrixVar sigma_A, sigma_C;
  int gamma = 0;
};

CouplingProgram build_coupling_design(const InformationBlocks& blocks,
                                      const Vec& mu_A, const Vec& mu_C,
                                      const Mat& Theta_A, const Mat& Theta_C,
                                      const std::vector<Mat>& Theta_i);

DesignSolution solve_coupling_design(const InformationBlocks& blocks,
                                     const Vec& mu_A, const Vec& mu_C,
                                     const Mat& Theta_A, const Mat& Theta_C,
                                     const std::vector<Mat>& Theta_i,
                                     const SdpOptions& opts = {});

// ---------------------------------------------------------------------------
// Nonlinearity covariance program
// ---------------------------------------------------------------------------

struct NonlinearityProgram {
  SdpProblem sdp;
  SdpProblem::MatrixVar sigma_G;
  int beta = 0;
};

NonlinearityProgram build_nonlinearity_design(const std::vector<Mat>& S_ii,
                                              const Vec& mu_G,
                                              const Mat& M_cal);

DesignSolution solve_nonlinearity_design(const std::vector<Mat>& S_ii,
                                         const Vec& mu_G, const Mat& M_cal,
                                         const SdpOptions& opts = {});

// ---------------------------------------------------------------------------
// Unintelligent baselines
// ---------------------------------------------------------------------------

struct IidCouplingSolution {
  SdpStatus status = SdpStatus::NumericalFailure;
  double xi1 = 0.0, xi2 = 0.0;
  std::vector<double> slacks;
};

/// Isotropic coupling covariances meeting the designed gamma level.
IidCouplingSolution baseline_iid_coupling(double gamma_star,
                                          const InformationBlocks& blocks,
                                          const Vec& mu_A, const Vec& mu_C,
                                          const Mat& Theta_A,
                                          const Mat& Theta_C,
                                          const std::vector<Mat>& Theta_i,
                                          const SdpOptions& opts = {});

/// Largest isotropic nonlinearity covariance under the cap: phi* is the
/// smallest eigenvalue of the cap.
double baseline_iid_nonlinearity(const Mat& M_cal);

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

std::string design_solution_to_json(const DesignSolution& sol,
                                    const std::string& kind);
DesignSolution design_solution_from_json(const std::string& text,
                                         std::string* kind = nullptr);

}  // namespace mtd
