#pragma once

#include <optional>
#include <vector>

#include "mtd/estimation.hpp"
#include "mtd/model_core.hpp"

namespace mtd {

enum class AttackKind {
  None,
  FdiConstant,       // constant actuation and/or sensor bias, no hiding
  ZeroDynamics,      // exact self-subtraction using true model knowledge
  CovertSubtract,    // self-subtraction using matrices sampled from the law
  EstimateTracking,  // tracks the operator's estimate with a particle cloud
};

struct AttackSpec {
  AttackKind kind = AttackKind::None;
  int start_step = 0;
  double magnitude = 0.0;          // actuation bias per input channel
  double sensor_magnitude = 0.0;   // direct sensor bias (FDI on sensors)
  std::vector<int> sensor_set;     // targeted sensors (hybrid identification)
  int particles = 2000;            // estimate-tracking cloud size
  bool oracle = false;             // grant exact realizations (testing limit)

  void validate() const;
};

// ---------------------------------------------------------------------------
// Self-subtraction attacks
// ---------------------------------------------------------------------------

/// Covert attack on a static plant: drives a private copy of the attack
/// dynamics and emits the sensor bias cancelling its own output signature.
class ZeroDynamicsAttacker {
 public:
  ZeroDynamicsAttacker(const Mat& A, const Mat& Ba, const Mat& C);

  /// Sensor bias for the current step, then advances the private state
  /// with this step's actuation bias.
  Vec step(const Vec& u_bias);

  const Vec& bias_state() const { return xa_; }

 private:
  Mat A_, Ba_, C_;
  Vec xa_;
};

/// Batch form: the emitted sensor-bias sequence for a given actuation-bias
/// sequence (d[k] cancels the influence accumulated before step k).
std::vector<Vec> zero_dynamics_attack(const Mat& A, const Mat& Ba,
                                      const Mat& C,
                                      const std::vector<Vec>& u_bias);

/// Self-subtraction against the extended/nonlinear plant. The attacker does
/// not know the realized draws and instead samples the time-varying matrices
/// from their published law with its own private stream.
class CovertSubtractAttacker {
 public:
  CovertSubtractAttacker(const ExtendedModel& model, const AttackSpec& spec,
                         std::uint64_t attacker_seed);

  struct Output {
    Vec u_bias;
    Vec d_bias;
  };

  /// Attack inputs for step k (zero before the start step).
  Output step(int k);

 private:
  ExtendedModel model_;
  AttackSpec spec_;
  SourcePtr src_;
  Vec xbar_bias_;  // attacker's model of its own influence on the state
};

// ---------------------------------------------------------------------------
// Residue-bias algebra
// ---------------------------------------------------------------------------

/// Realized step matrices of the operator's filter loop.
struct StepMatrices {
  Mat A, B, C, K;
};

/// Linear maps from the stacked attack inputs to the bias they leave on the
/// residue at one step: delta_z[i] = M_input * [u_bias stack] +
/// M_sensor * [d_bias stack]. The stack covers inputs u[j..k-1] and sensor
/// biases d[j+1..k].
struct BiasMaps {
  Mat M_input;
  Mat M_sensor;
  int i = 0;

  Mat stacked() const {
    Mat m(M_input.rows(), M_input.cols() + M_sensor.cols());
    m << M_input, M_sensor;
    return m;
  }
};

/// Closed-loop transition product over steps t+1..i-1 (identity when empty).
Mat bias_propagator(const std::vector<StepMatrices>& steps, int j_abs, int t,
                    int i);

/// Bias maps for residue step i given the realized window steps[j..k]
/// (absolute indices j..j+steps.size()-1).
BiasMaps build_bias_maps(const std::vector<StepMatrices>& steps, int j, int i,
                         int k);

// ---------------------------------------------------------------------------
// Estimate-tracking attack
// ---------------------------------------------------------------------------

/// Step-wise knowledge granted to a strong adversary (realized output matrix,
/// gain and prior covariance of the operator's filter).
struct FilterSideInfo {
  Mat C;
  Mat K;
  Mat P;
};

/// Attacker that follows the operator's state estimate with a weighted
/// particle cloud over the joint (attacked state, operator estimate) and
/// emits the sensor bias minimizing the expected detection statistic.
class EstimateTrackingAttacker {
 public:
  EstimateTrackingAttacker(const ExtendedModel& model,
                           const NonlinearitySpec* nl, const AttackSpec& spec,
                           const Mat& P0, std::uint64_t attacker_seed);

  struct Output {
    Vec u_bias;
    Vec d_bias;
    double ess = 0.0;
  };

  /// Consumes the intercepted measurement (cloud reweighting) and emits this
  /// step's attack inputs. `side` carries the strong-adversary grant of the
  /// realized output matrix and gain, when the premise is on.
  Output observe(int k, const Vec& y_intercepted,
                 const std::optional<FilterSideInfo>& side);

  /// Propagates the cloud once the applied control and the operator-bound
  /// measurement for step k are known.
  void advance(int k, const Vec& u, const Vec& y_operator,
               const std::optional<FilterSideInfo>& side);

  /// Cloud mean of the operator-estimate block (diagnostics / tests).
  Vec estimate_mean() const;

 private:
  struct Particle {
    Vec x;    // [attacked stacked state; operator prior estimate]
    Mat P;    // per-particle filter covariance (sampled-history mode)
    double w = 0.0;
  };

  void normalize_and_maybe_resample();

  ExtendedModel model_;
  const NonlinearitySpec* nl_;
  AttackSpec spec_;
  SourcePtr src_;
  std::vector<Particle> particles_;
  Mat mean_C_;  // stacked output matrix at the law's mean
  int nt_ = 0;
  std::uint64_t draw_epoch_ = 0;
};

}  // namespace mtd
