#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtd/numeric.hpp"
#include "mtd/rng.hpp"

namespace mtd {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a simulated signal leaves the numeric safety envelope.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Magnitude above which a trajectory is considered diverged.
constexpr double kDivergenceGuard = 1e12;

// ---------------------------------------------------------------------------
// Plant descriptions
// ---------------------------------------------------------------------------

/// Discrete-time LTI plant with Gaussian process and sensor noise.
struct LTIModel {
  Mat A, B, C, Q, R;

  int n() const { return static_cast<int>(A.rows()); }
  int p() const { return static_cast<int>(B.cols()); }
  int m() const { return static_cast<int>(C.rows()); }

  /// Checks dimensions and noise definiteness (throws), then runs advisory
  /// detectability/stabilizability checks and returns any warnings.
  std::vector<std::string> validate() const;
};

enum class Axis { Rows, Columns };

/// Law of a time-varying random matrix whose rows (or columns) are IID
/// Gaussian, independent across time. `cov_seq`, when non-empty, overrides
/// `cov` per step (clamped at the last entry).
struct MatrixDistribution {
  Vec mean;
  Mat cov;
  std::vector<Mat> cov_seq;
  Axis axis = Axis::Rows;
  std::uint64_t stream = streams::kMisc;

  const Mat& cov_at(int k) const {
    if (cov_seq.empty()) return cov;
    const std::size_t i = std::min<std::size_t>(k, cov_seq.size() - 1);
    return cov_seq[i];
  }
  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;
};

/// Auxiliary authenticating subsystem stacked on top of an LTI plant.
/// The upper (auxiliary) block evolves with stable dynamics A_tilde and is
/// coupled to the plant through randomly drawn matrices each step.
struct ExtendedModel {
  LTIModel base;
  Mat A_tilde;             // aux dynamics, spectral radius < 1
  Mat C_tilde;             // aux output map
  MatrixDistribution dist_Abar;    // rows in R^n, one per aux state
  MatrixDistribution dist_Btilde;  // rows in R^p
  MatrixDistribution dist_Cbar;    // rows in R^n, one per aux sensor
  Mat Q_tilde;             // aux process noise covariance
  Mat R_full;              // (m_aux+m) x (m_aux+m), may carry a cross block

  int n() const { return base.n(); }
  int p() const { return base.p(); }
  int m() const { return base.m(); }
  int n_aux() const { return static_cast<int>(A_tilde.rows()); }
  int m_aux() const { return static_cast<int>(C_tilde.rows()); }
  int n_total() const { return n() + n_aux(); }
  int m_total() const { return m() + m_aux(); }

  void validate() const;

  Mat stacked_Q() const;  // BlkDiag(Q_tilde, Q)
  /// Assembles the stacked matrices for given realized draws.
  Mat stacked_A(const Mat& Abar) const;
  Mat stacked_B(const Mat& Btilde) const;
  Mat stacked_C(const Mat& Cbar) const;
  /// Draws the (Abar, Btilde, Cbar) triple for step k.
  void realize(int k, const NormalSource& src, Mat* Abar, Mat* Btilde,
               Mat* Cbar) const;
};

/// Element-wise output nonlinearity with a random direction matrix.
struct NonlinearitySpec {
  enum class Kind { Power, Custom };

  MatrixDistribution dist_G;  // columns in R^{m_aux}
  Kind kind = Kind::Power;
  int power_c = 2;
  std::function<double(double)> h_custom;
  std::function<double(double)> dh_custom;

  double h(double x) const;
  double dh(double x) const;
  Vec h_vec(const Vec& x) const;
  Vec dh_vec(const Vec& x) const;
  void validate() const;

  Mat realize_G(int k, int m_aux, int n, const NormalSource& src) const;
};

/// Finite family of plant modes switched on a secret dwell schedule.
struct HybridModeSet {
  struct Mode {
    Mat A, B, C;
  };
  std::vector<Mode> modes;
  int dwell = 1;  // steps per mode
  std::uint64_t schedule_stream = streams::kModeSchedule;

  int n() const { return static_cast<int>(modes.at(0).A.rows()); }
  int m() const { return static_cast<int>(modes.at(0).C.rows()); }
  int size() const { return static_cast<int>(modes.size()); }

  void validate() const;

  /// Active mode index at step k (constant over each dwell block).
  int mode_at(int k, const NormalSource& src) const;
};

// ---------------------------------------------------------------------------
// Sampling and stepping
// ---------------------------------------------------------------------------

/// Draws the random matrix of the given shape for step k. Rows (or columns)
/// are IID N(mean, cov_at(k)); the result is a pure function of
/// (source seed, stream, k).
Mat sample_time_varying(const MatrixDistribution& dist, int rows, int cols,
                        int k, const NormalSource& src);

/// Sensor-side attack matrix: column i selects targeted sensor sensors[i].
Mat sensor_selection_matrix(const std::vector<int>& sensors, int m);

struct AttackInput {
  Vec u_bias;  // added to the actuation
  Vec d_bias;  // added to the measurements handed to the operator
};

/// Stacked process-noise draw for step k. Each block has its own stream, so
/// the plant block reproduces the standalone plant's draws.
Vec draw_process_noise(const ExtendedModel& model, int k,
                       const NormalSource& src);

/// Stacked sensor-noise draw for step k; a block-diagonal R_full keeps the
/// plant block identical to the standalone plant's draws.
Vec draw_sensor_noise(const ExtendedModel& model, int k,
                      const NormalSource& src);

/// Stacked initial state from the per-block initial-state streams.
Vec draw_initial_state(const ExtendedModel& model, const Mat& P0_full,
                       const NormalSource& src);

struct ExtendedStepResult {
  Vec next_state;   // stacked [aux; plant]
  Vec y_operator;   // measurements received by the operator
  Vec y_attacker;   // true measurements available to an interceptor
  Mat Abar, Btilde, Cbar;  // realized draws for this step
  Mat G;                   // realized nonlinearity direction (nonlinear only)
};

/// One step of the extended plant. With `attack` absent (or zero) this is the
/// nominal closed-loop plant; otherwise the actuation bias perturbs the state
/// and the sensor bias perturbs only the operator's copy of the output.
ExtendedStepResult step_extended(const ExtendedModel& model, const Vec& state,
                                 const Vec& u, const std::optional<AttackInput>& attack,
                                 int k, const NormalSource& src);

/// Same as step_extended with the random nonlinearity added to the auxiliary
/// measurements (both copies; the nonlinearity acts on the true plant state).
ExtendedStepResult step_nonlinear(const ExtendedModel& model,
                                  const NonlinearitySpec& nl, const Vec& state,
                                  const Vec& u, const std::optional<AttackInput>& attack,
                                  int k, const NormalSource& src);

struct HybridStepResult {
  Vec next_state;
  Vec y_operator;
  Vec y_attacker;
  int mode = 0;
};

/// One step of the hybrid plant; `d_bias` (if any) enters through the
/// selection matrix of `sensors`. Pass empty Q or R for a noiseless block.
HybridStepResult step_hybrid(const HybridModeSet& modes, const Mat& Q,
                             const Mat& R, const Vec& state, const Vec& u,
                             const std::vector<int>& sensors,
                             const std::optional<Vec>& d_bias, int k,
                             const NormalSource& src);

// ---------------------------------------------------------------------------
// Trajectory recording
// ---------------------------------------------------------------------------

/// Per-step record of a simulated trial; all vectors share the same length.
struct TrajectoryRecord {
  std::vector<Vec> state;        // true (attacked) stacked state
  std::vector<Vec> input;        // applied control
  std::vector<Vec> attack_u;     // actuation bias (may be empty vectors)
  std::vector<Vec> attack_d;     // sensor bias
  std::vector<Vec> y_operator;
  std::vector<Vec> y_attacker;
  std::vector<Mat> Abar, Btilde, Cbar, G;
  std::vector<int> mode;

  std::size_t size() const { return state.size(); }
};

void guard_divergence(const Vec& v, int k, const char* what);

}  // namespace mtd
