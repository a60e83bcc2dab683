#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtd/attacks.hpp"
#include "mtd/design_opt.hpp"
#include "mtd/model_core.hpp"

namespace mtd {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class MtdKind { None, Hybrid, Extended, Nonlinear };
enum class DesignSource { Optimal, Baseline, Explicit };

struct DetectorConfig {
  int window = 10;
  double false_alarm_rate = 0.05;
  int exclusion_alarms = 5;
};

struct ControllerConfig {
  Mat Q_lqr;  // defaults to identity when empty
  Mat R_lqr;
  Vec setpoint;
};

struct DesignConfig {
  DesignSource source = DesignSource::Optimal;
  bool time_varying_actuator = false;
  std::string load_file;  // persisted solutions (explicit source)
  DesignBounds bounds;
  // explicit covariances (explicit source without a file)
  Mat Sigma_Btilde, Sigma_Abar, Sigma_Cbar, Sigma_G;
};

struct BoundConfig {
  bool enabled = false;
  int particles = 2000;
  double jitter = 1e-9;
};

struct FimConfig {
  bool enabled = false;
  std::vector<int> powers{1, 2, 3};
  int stride = 10;
};

struct ScenarioConfig {
  MtdKind mtd = MtdKind::Extended;
  LTIModel plant;
  std::optional<ExtendedModel> extended;
  std::optional<NonlinearitySpec> nonlinearity;
  std::optional<HybridModeSet> hybrid;
  Mat hybrid_Q, hybrid_R;  // hybrid-plant noise (plant.Q/R used when empty)
  AttackSpec attack;
  ControllerConfig controller;
  DetectorConfig detector;
  DesignConfig design;
  BoundConfig bound;
  FimConfig fim;
  double P0_scale = 1.0;
  double fusion_sigma = 1e-6;
  int trials = 1000;
  int horizon = 400;
  int warmup = 0;  // steps excluded from aggregate statistics
  double dt = 1.0;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  bool ci_mode = false;

  /// Throws ConfigError on inconsistencies (exit code 2 semantics).
  void validate() const;
};

std::string scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const std::string& text);
ScenarioConfig load_scenario(const std::string& path);
void save_scenario(const ScenarioConfig& cfg, const std::string& path);

}  // namespace mtd
