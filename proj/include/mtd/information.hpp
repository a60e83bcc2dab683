#pragma once

#include <vector>

#include "mtd/model_core.hpp"

namespace mtd {

/// Stacked response maps of the auxiliary sensor chain over a horizon:
/// block-Toeplitz powers of the auxiliary dynamics feeding the delayed
/// (H_D) and noise (H_W) channels, plus the stacked noise covariances.
struct DefenderStacks {
  Mat H_D;       // (k+1)m_aux x (k+1)n_aux, strictly delayed chain response
  Mat H_W;       // (k+1)m_aux x (k+1)n_aux, noise-to-output response
  Mat Sigma_Q;   // BlkDiag(P0_aux, Q_aux, ..., Q_aux)
  Mat Sigma_R;   // BlkDiag(R_aux, ..., R_aux)
  Mat Sigma_N;   // H_W Sigma_Q H_W' + Sigma_R
  int horizon = 0;  // number of steps minus one (blocks 0..horizon)
  int n = 0, n_aux = 0, m_aux = 0, p = 0;
};

/// Builds the stacks for steps 0..horizon_k. P0_aux defaults (empty) to the
/// stationary covariance of the auxiliary state.
DefenderStacks build_defender_stacks(const ExtendedModel& model, int horizon_k,
                                     const Mat& P0_aux = Mat());

struct FimReport {
  Mat value;
  double norm = 0.0;  // spectral norm
  bool psd = false;
  int horizon = 0;
};

/// Information the auxiliary measurements carry about the plant-state
/// window, for one realized draw of the coupling matrices.
FimReport defender_fim_linear(const DefenderStacks& stacks,
                              const std::vector<Mat>& Abar,
                              const std::vector<Mat>& Cbar);

/// Closed-form expectation of the same matrix over the coupling laws.
FimReport defender_fim_linear_expected(const DefenderStacks& stacks,
                                       const MatrixDistribution& dist_Abar,
                                       const MatrixDistribution& dist_Cbar);

/// Diagonal blocks of the quadratic forms behind the expected information
/// matrix; these drive the covariance design programs.
struct InformationBlocks {
  std::vector<Mat> J;  // n_aux x n_aux blocks of H_D' Sigma_N^{-1} H_D
  std::vector<Mat> S;  // m_aux x m_aux blocks of Sigma_N^{-1}
  std::vector<Mat> F;  // n_aux x m_aux blocks of H_D' Sigma_N^{-1}
};

InformationBlocks information_blocks(const DefenderStacks& stacks);

/// Parameter priors of the time-varying matrices over the horizon, one
/// block per step and family (row laws for the couplings/actuators).
Mat stacked_parameter_prior(const DefenderStacks& stacks, const Mat& Sigma_A,
                            const Mat& Sigma_B, const Mat& Sigma_C);

struct AttackerFim {
  Mat nonlinear;   // information with the output nonlinearity active
  Mat linear;      // information without it
  Mat difference;  // linear - nonlinear (PSD)
  double norm_nonlinear = 0.0;
  double norm_linear = 0.0;
  double norm_difference = 0.0;
};

/// Bayesian information an interceptor gains about the stacked time-varying
/// parameters from the auxiliary measurements along a known attacked
/// trajectory, with and without the nonlinearity.
AttackerFim attacker_fim(const DefenderStacks& stacks,
                         const NonlinearitySpec* nl,
                         const std::vector<Vec>& x_attacked,
                         const std::vector<Vec>& u_attacked,
                         const Mat& Sigma_A, const Mat& Sigma_B,
                         const Mat& Sigma_C, const Mat& Sigma_G);

struct NonlinearDefenderFim {
  FimReport report;
  double omega_g_trace = 0.0;  // realized trace of the nonlinearity term
  double omega_g_trace_expected = 0.0;  // closed-form expectation
};

/// Information the defender gains about the attacked state window when the
/// nonlinearity is active, for realized draws, plus the nonlinearity-term
/// trace and its closed-form expectation under the G law.
NonlinearDefenderFim defender_fim_nonlinear(
    const DefenderStacks& stacks, const NonlinearitySpec& nl,
    const std::vector<Mat>& Abar, const std::vector<Mat>& Cbar,
    const std::vector<Mat>& G, const std::vector<Vec>& x_attacked);

}  // namespace mtd
