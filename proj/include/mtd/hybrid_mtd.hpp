#pragma once

#include <complex>
#include <string>
#include <vector>

#include "mtd/attacks.hpp"
#include "mtd/estimation.hpp"
#include "mtd/model_core.hpp"

namespace mtd {

// ---------------------------------------------------------------------------
// Eigenstructure
// ---------------------------------------------------------------------------

/// Generalized eigenvector chains of one (clustered) eigenvalue.
struct EigenvalueChains {
  std::complex<double> eigenvalue;
  /// chains[c][k] is the (k+1)-th vector of chain c; chains[c][0] is a true
  /// eigenvector and A v_{k+1} = lambda v_{k+1} + v_k along the chain.
  std::vector<std::vector<CVec>> chains;

  int max_chain_length() const;
  int algebraic_multiplicity() const;
};

struct EigenStructure {
  std::vector<EigenvalueChains> groups;
};

/// Numerical Jordan-chain computation: eigenvalues clustered within `tol`
/// (relative), chains obtained from the null-space ladder of (A - lambda I)^k
/// and verified against the chain relations.
EigenStructure jordan_chains(const Mat& A, double tol = 1e-8);

// ---------------------------------------------------------------------------
// Identifiability
// ---------------------------------------------------------------------------

struct IdentifiabilityVerdict {
  bool identifiable = true;   // no healthy initial state explains the output
  Vec x0_candidate;           // least-squares explanation when ambiguous
  double residual = 0.0;
};

/// Fits a healthy initial state to one sensor's output sequence along the
/// realized mode trajectory. `outputs[k]` is the sensor reading at step k;
/// `A_seq[k]` the realized dynamics applied between steps k and k+1;
/// `C_rows[k]` the sensor's realized output row at step k.
IdentifiabilityVerdict check_identifiable_t(const std::vector<double>& outputs,
                                            const std::vector<Mat>& A_seq,
                                            const std::vector<Mat>& C_rows,
                                            double tol = 1e-8);

/// Decides whether an attacker who commits to the guessed mode can produce a
/// sensor-s attack that no healthy initial state of the true mode can ever
/// be distinguished from. Matching eigenvalues between the two modes are
/// compared through the chain-output matrices of that sensor.
struct ModeGuessTest {
  bool exists_unidentifiable = false;
  std::complex<double> witness{0.0, 0.0};
};

ModeGuessTest unidentifiable_attack_exists(const HybridModeSet::Mode& truth,
                                           const HybridModeSet::Mode& guess,
                                           int sensor, double tol = 1e-8);

// ---------------------------------------------------------------------------
// Design recommendations
// ---------------------------------------------------------------------------

struct RecommendationReport {
  struct Item {
    std::string name;
    bool pass = false;
    std::string detail;
  };
  std::vector<Item> items;

  bool all_pass() const;
  std::string table() const;
};

/// Validates the switched design: pairwise-disjoint spectra, dwell of at
/// least 2n, a nondegenerate randomized schedule, per-mode observability and
/// nonsingular dynamics.
RecommendationReport validate_recommendations(const HybridModeSet& modes,
                                              double tol = 1e-8);

// ---------------------------------------------------------------------------
// Identification pipeline
// ---------------------------------------------------------------------------

struct HybridScenario {
  HybridModeSet modes;
  Mat Q, R, P0;
  AttackSpec attack;        // sensor-bias attack on attack.sensor_set
  int horizon = 500;
  int window = 10;
  double false_alarm_rate = 0.05;
  int exclusion_alarms = 5;
  double fusion_sigma = 1e-6;
  std::uint64_t seed = 1;
};

struct IdentifyResult {
  std::vector<int> flagged;          // sensors latched by the exclusion policy
  std::vector<double> peak_statistic;  // per sensor
  int alarms_total = 0;
};

/// Simulates the switched plant under the scenario's sensor attack, runs the
/// per-sensor reduced filters and scalar detectors, and reports the sensors
/// the exclusion policy identifies.
IdentifyResult identify_run(const HybridScenario& scenario);

}  // namespace mtd
