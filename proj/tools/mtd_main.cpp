#include <iostream>

#include <CLI11.hpp>

#include "mtd/csv.hpp"
#include "mtd/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitExperiment = 3;

struct CommonFlags {
  std::string out_dir;
  std::uint64_t seed = 0;
  int trials = 0;
  bool ci = false;
  bool svg = false;
};

void apply_flags(mtd::ScenarioConfig* cfg, const CommonFlags& f) {
  if (!f.out_dir.empty()) cfg->out_dir = f.out_dir;
  if (f.seed) cfg->seed = f.seed;
  if (f.trials) cfg->trials = f.trials;
  if (f.ci) cfg->ci_mode = true;
}

int run_simulate(const std::string& path, const CommonFlags& flags,
                 bool with_bound) {
  mtd::ScenarioConfig cfg = mtd::load_scenario(path);
  apply_flags(&cfg, flags);
  if (with_bound) cfg.bound.enabled = true;
  cfg.validate();

  const mtd::ExperimentResult res = mtd::run_experiment(cfg);
  const mtd::CompiledScenario sc = mtd::compile_scenario(cfg);
  const mtd::TrialOutput sample = mtd::run_trial(sc, 0, true);
  mtd::write_experiment_outputs(cfg, res, &sample, flags.svg);

  std::cout << "trials completed: " << res.completed
            << " (diverged: " << res.diverged << ")\n";
  std::cout << "detector dof " << res.dof << ", threshold " << res.threshold
            << ", post-warmup alarm rate " << res.overall_alarm_rate << "\n";
  if (!res.bound.empty())
    std::cout << "bound trace written to " << cfg.out_dir << "/bound.csv\n";
  std::cout << "outputs in " << cfg.out_dir << "\n";
  return kExitOk;
}

int run_design(const std::string& kind, const std::string& path,
               const CommonFlags& flags, const std::string& out_file) {
  mtd::ScenarioConfig cfg = mtd::load_scenario(path);
  apply_flags(&cfg, flags);
  cfg.validate();
  if (cfg.mtd != mtd::MtdKind::Extended && cfg.mtd != mtd::MtdKind::Nonlinear)
    throw mtd::ConfigError("covariance design applies to the extended defenses");

  cfg.design.source = kind == "baseline" ? mtd::DesignSource::Baseline
                                         : mtd::DesignSource::Optimal;
  const mtd::CompiledScenario sc = mtd::compile_scenario(cfg);

  mtd::ensure_directory(cfg.out_dir);
  auto emit = [&](const mtd::DesignSolution& sol, const std::string& name) {
    const std::string file = out_file.empty()
                                 ? cfg.out_dir + "/design_" + name + ".json"
                                 : out_file;
    std::ofstream os(file);
    os << mtd::design_solution_to_json(sol, name) << "\n";
    std::cout << name << ": objective " << sol.objective << ", status "
              << mtd::to_string(sol.status) << ", min slack " << sol.min_slack
              << " -> " << file << "\n";
  };

  if (kind == "actuator") {
    emit(sc.actuator_sol, "actuator");
  } else if (kind == "coupling") {
    emit(sc.coupling_sol, "coupling");
  } else if (kind == "nonlinearity") {
    if (!sc.nl) throw mtd::ConfigError("scenario has no output nonlinearity");
    emit(sc.nonlin_sol, "nonlinearity");
  } else if (kind == "baseline") {
    std::cout << "isotropic coupling levels: xi1 " << sc.baseline_coupling.xi1
              << ", xi2 " << sc.baseline_coupling.xi2 << " (status "
              << mtd::to_string(sc.baseline_coupling.status) << ")\n";
    if (sc.nl)
      std::cout << "isotropic nonlinearity level: phi " << sc.baseline_phi
                << "\n";
    emit(sc.actuator_sol, "actuator");
  } else {
    throw mtd::ConfigError("unknown design kind: " + kind);
  }
  return kExitOk;
}

int run_hybrid_validate(const std::string& path) {
  const mtd::ScenarioConfig cfg = mtd::load_scenario(path);
  if (!cfg.hybrid)
    throw mtd::ConfigError("config carries no switched-mode section");
  const mtd::RecommendationReport rep =
      mtd::validate_recommendations(*cfg.hybrid);
  std::cout << rep.table();
  return rep.all_pass() ? kExitOk : kExitValidation;
}

int run_hybrid_identify(const std::string& path, const CommonFlags& flags) {
  mtd::ScenarioConfig cfg = mtd::load_scenario(path);
  apply_flags(&cfg, flags);
  if (cfg.mtd != mtd::MtdKind::Hybrid)
    throw mtd::ConfigError("identification runs on the switched defense");
  cfg.validate();
  const mtd::ExperimentResult res = mtd::run_experiment(cfg);
  mtd::write_experiment_outputs(cfg, res, nullptr, flags.svg);
  std::cout << "exact identification rate: " << res.exact_identification_rate
            << "\n";
  for (std::size_t s = 0; s < res.sensor_flag_rate.size(); ++s)
    std::cout << "sensor " << (s + 1) << " flagged in "
              << 100.0 * res.sensor_flag_rate[s] << "% of trials\n";
  std::cout << "outputs in " << cfg.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moving-target defense simulation and design laboratory"};
  app.require_subcommand(1);

  CommonFlags flags;
  app.add_option("--seed", flags.seed, "override the master seed");
  app.add_option("--trials", flags.trials, "override the trial count");
  app.add_option("--out-dir", flags.out_dir, "override the output directory");
  app.add_flag("--ci", flags.ci, "cap trials at 100 for fast runs");
  app.add_flag("--svg", flags.svg, "emit static SVG charts");

  std::string cfg_path, design_kind, preset_name, out_file;

  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo experiment");
  sim->add_option("config", cfg_path, "scenario config file")->required();

  auto* design = app.add_subcommand("design", "solve the covariance programs");
  design->add_option("kind", design_kind,
                     "actuator | coupling | nonlinearity | baseline")
      ->required();
  design->add_option("config", cfg_path, "scenario config file")->required();
  design->add_option("--out", out_file, "solution file to write");

  auto* bound = app.add_subcommand("bound", "detection-statistic floor trace");
  bound->add_option("config", cfg_path, "scenario config file")->required();

  auto* hybrid = app.add_subcommand("hybrid", "switched-defense tools");
  hybrid->require_subcommand(1);
  auto* hvalidate =
      hybrid->add_subcommand("validate", "check the design recommendations");
  hvalidate->add_option("config", cfg_path, "scenario config file")->required();
  auto* hidentify =
      hybrid->add_subcommand("identify", "sensor identification experiment");
  hidentify->add_option("config", cfg_path, "scenario config file")->required();

  auto* preset = app.add_subcommand("preset", "print a bundled scenario");
  preset->add_option("name", preset_name, "quadtank | hybrid")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(cfg_path, flags, false);
    if (design->parsed())
      return run_design(design_kind, cfg_path, flags, out_file);
    if (bound->parsed()) return run_simulate(cfg_path, flags, true);
    if (hybrid->parsed()) {
      if (hvalidate->parsed()) return run_hybrid_validate(cfg_path);
      return run_hybrid_identify(cfg_path, flags);
    }
    if (preset->parsed()) {
      const std::uint64_t seed = flags.seed ? flags.seed : 1;
      if (preset_name == "quadtank")
        std::cout << mtd::scenario_to_json(mtd::preset_quadtank(seed)) << "\n";
      else if (preset_name == "hybrid")
        std::cout << mtd::scenario_to_json(mtd::preset_hybrid_demo(seed))
                  << "\n";
      else
        throw mtd::ConfigError("unknown preset: " + preset_name);
      return kExitOk;
    }
  } catch (const mtd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const mtd::ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const mtd::ExperimentError& e) {
    std::cerr << "experiment error: " << e.what() << "\n";
    return kExitExperiment;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitExperiment;
  }
  return kExitOk;
}
