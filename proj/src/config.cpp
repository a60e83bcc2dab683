#include "mtd/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mtd {
namespace {

using nlohmann::json;

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Mat mat_from_json(const json& j) {
  const int r = static_cast<int>(j.size());
  if (r == 0) return Mat();
  const int c = static_cast<int>(j.at(0).size());
  Mat m(r, c);
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(j.at(i).size()) != c)
      throw ConfigError("ragged matrix in config");
    for (int k = 0; k < c; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

Vec vec_from_json(const json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

Mat opt_mat(const json& j, const char* key) {
  return j.contains(key) ? mat_from_json(j.at(key)) : Mat();
}

Vec opt_vec(const json& j, const char* key) {
  return j.contains(key) ? vec_from_json(j.at(key)) : Vec();
}

json dist_to_json(const MatrixDistribution& d) {
  json j;
  j["mean"] = vec_to_json(d.mean);
  j["cov"] = mat_to_json(d.cov);
  j["axis"] = d.axis == Axis::Rows ? "rows" : "columns";
  j["stream"] = d.stream;
  return j;
}

MatrixDistribution dist_from_json(const json& j, std::uint64_t default_stream) {
  MatrixDistribution d;
  d.mean = vec_from_json(j.at("mean"));
  d.cov = mat_from_json(j.at("cov"));
  d.axis = j.value("axis", "rows") == std::string("columns") ? Axis::Columns
                                                             : Axis::Rows;
  d.stream = j.value("stream", default_stream);
  return d;
}

std::string kind_name(MtdKind k) {
  switch (k) {
    case MtdKind::None: return "none";
    case MtdKind::Hybrid: return "hybrid";
    case MtdKind::Extended: return "extended";
    case MtdKind::Nonlinear: return "nonlinear";
  }
  return "none";
}

MtdKind kind_from(const std::string& s) {
  if (s == "none") return MtdKind::None;
  if (s == "hybrid") return MtdKind::Hybrid;
  if (s == "extended") return MtdKind::Extended;
  if (s == "nonlinear") return MtdKind::Nonlinear;
  throw ConfigError("unknown mtd kind: " + s);
}

std::string attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::None: return "none";
    case AttackKind::FdiConstant: return "fdi_constant";
    case AttackKind::ZeroDynamics: return "zero_dynamics";
    case AttackKind::CovertSubtract: return "covert_subtract";
    case AttackKind::EstimateTracking: return "estimate_tracking";
  }
  return "none";
}

AttackKind attack_from(const std::string& s) {
  if (s == "none") return AttackKind::None;
  if (s == "fdi_constant") return AttackKind::FdiConstant;
  if (s == "zero_dynamics") return AttackKind::ZeroDynamics;
  if (s == "covert_subtract") return AttackKind::CovertSubtract;
  if (s == "estimate_tracking") return AttackKind::EstimateTracking;
  throw ConfigError("unknown attack kind: " + s);
}

}  // namespace

void ScenarioConfig::validate() const {
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  if (detector.window < 1) throw ConfigError("detector window must be >= 1");
  if (!(detector.false_alarm_rate > 0 && detector.false_alarm_rate < 1))
    throw ConfigError("false alarm rate must lie in (0, 1)");
  try {
    attack.validate();
    if (mtd == MtdKind::Hybrid) {
      if (!hybrid) throw ConfigError("hybrid scenario needs a mode set");
      hybrid->validate();
    } else {
      plant.validate();
    }
    if (mtd == MtdKind::Extended || mtd == MtdKind::Nonlinear) {
      if (!extended) throw ConfigError("extended scenario needs the auxiliary block");
      extended->validate();
    }
    if (mtd == MtdKind::Nonlinear) {
      if (!nonlinearity) throw ConfigError("nonlinear scenario needs the nonlinearity");
      nonlinearity->validate();
    }
  } catch (const ModelError& e) {
    throw ConfigError(e.what());
  }
  if (design.source == DesignSource::Explicit && design.load_file.empty() &&
      mtd != MtdKind::None && mtd != MtdKind::Hybrid) {
    if (!design.Sigma_Btilde.size() || !design.Sigma_Abar.size() ||
        !design.Sigma_Cbar.size())
      throw ConfigError("explicit design needs covariances or a file");
  }
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  j["mtd"] = kind_name(cfg.mtd);
  j["plant"] = {{"A", mat_to_json(cfg.plant.A)}, {"B", mat_to_json(cfg.plant.B)},
                {"C", mat_to_json(cfg.plant.C)}, {"Q", mat_to_json(cfg.plant.Q)},
                {"R", mat_to_json(cfg.plant.R)}};
  if (cfg.extended) {
    const ExtendedModel& e = *cfg.extended;
    j["extended"] = {{"A_tilde", mat_to_json(e.A_tilde)},
                     {"C_tilde", mat_to_json(e.C_tilde)},
                     {"Q_tilde", mat_to_json(e.Q_tilde)},
                     {"R_full", mat_to_json(e.R_full)},
                     {"dist_Abar", dist_to_json(e.dist_Abar)},
                     {"dist_Btilde", dist_to_json(e.dist_Btilde)},
                     {"dist_Cbar", dist_to_json(e.dist_Cbar)}};
  }
  if (cfg.nonlinearity) {
    const NonlinearitySpec& nl = *cfg.nonlinearity;
    j["nonlinearity"] = {{"power", nl.power_c},
                         {"dist_G", dist_to_json(nl.dist_G)}};
  }
  if (cfg.hybrid) {
    json modes = json::array();
    for (const auto& m : cfg.hybrid->modes)
      modes.push_back({{"A", mat_to_json(m.A)},
                       {"B", mat_to_json(m.B)},
                       {"C", mat_to_json(m.C)}});
    j["hybrid"] = {{"modes", modes},
                   {"dwell", cfg.hybrid->dwell},
                   {"Q", mat_to_json(cfg.hybrid_Q)},
                   {"R", mat_to_json(cfg.hybrid_R)}};
  }
  j["attack"] = {{"kind", attack_name(cfg.attack.kind)},
                 {"start_step", cfg.attack.start_step},
                 {"magnitude", cfg.attack.magnitude},
                 {"sensor_magnitude", cfg.attack.sensor_magnitude},
                 {"sensor_set", cfg.attack.sensor_set},
                 {"particles", cfg.attack.particles},
                 {"oracle", cfg.attack.oracle}};
  j["controller"] = {{"Q_lqr", mat_to_json(cfg.controller.Q_lqr)},
                     {"R_lqr", mat_to_json(cfg.controller.R_lqr)},
                     {"setpoint", vec_to_json(cfg.controller.setpoint)}};
  j["detector"] = {{"window", cfg.detector.window},
                   {"false_alarm_rate", cfg.detector.false_alarm_rate},
                   {"exclusion_alarms", cfg.detector.exclusion_alarms}};
  json bounds;
  bounds["N_B"] = mat_to_json(cfg.design.bounds.N_B);
  bounds["Theta_A"] = mat_to_json(cfg.design.bounds.Theta_A);
  bounds["Theta_C"] = mat_to_json(cfg.design.bounds.Theta_C);
  bounds["M"] = mat_to_json(cfg.design.bounds.M_cal);
  json nts = json::array();
  for (const Mat& m : cfg.design.bounds.N_t) nts.push_back(mat_to_json(m));
  bounds["N_t"] = nts;
  json thetas = json::array();
  for (const Mat& m : cfg.design.bounds.Theta_i)
    thetas.push_back(mat_to_json(m));
  bounds["Theta_i"] = thetas;
  j["design"] = {{"source", cfg.design.source == DesignSource::Optimal
                                ? "optimal"
                                : cfg.design.source == DesignSource::Baseline
                                      ? "baseline"
                                      : "explicit"},
                 {"time_varying_actuator", cfg.design.time_varying_actuator},
                 {"load_file", cfg.design.load_file},
                 {"bounds", bounds},
                 {"Sigma_Btilde", mat_to_json(cfg.design.Sigma_Btilde)},
                 {"Sigma_Abar", mat_to_json(cfg.design.Sigma_Abar)},
                 {"Sigma_Cbar", mat_to_json(cfg.design.Sigma_Cbar)},
                 {"Sigma_G", mat_to_json(cfg.design.Sigma_G)}};
  j["bound"] = {{"enabled", cfg.bound.enabled},
                {"particles", cfg.bound.particles},
                {"jitter", cfg.bound.jitter}};
  j["fim"] = {{"enabled", cfg.fim.enabled},
              {"powers", cfg.fim.powers},
              {"stride", cfg.fim.stride}};
  j["P0_scale"] = cfg.P0_scale;
  j["fusion_sigma"] = cfg.fusion_sigma;
  j["trials"] = cfg.trials;
  j["horizon"] = cfg.horizon;
  j["warmup"] = cfg.warmup;
  j["dt"] = cfg.dt;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["ci_mode"] = cfg.ci_mode;
  return j.dump(2);
}

ScenarioConfig scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    ScenarioConfig cfg;
    cfg.mtd = kind_from(j.value("mtd", "extended"));
    if (j.contains("plant")) {
      const json& p = j.at("plant");
      cfg.plant.A = opt_mat(p, "A");
      cfg.plant.B = opt_mat(p, "B");
      cfg.plant.C = opt_mat(p, "C");
      cfg.plant.Q = opt_mat(p, "Q");
      cfg.plant.R = opt_mat(p, "R");
    }
    if (j.contains("extended")) {
      const json& e = j.at("extended");
      ExtendedModel em;
      em.base = cfg.plant;
      em.A_tilde = mat_from_json(e.at("A_tilde"));
      em.C_tilde = mat_from_json(e.at("C_tilde"));
      em.Q_tilde = mat_from_json(e.at("Q_tilde"));
      em.R_full = mat_from_json(e.at("R_full"));
      em.dist_Abar = dist_from_json(e.at("dist_Abar"), streams::kCouplingA);
      em.dist_Btilde = dist_from_json(e.at("dist_Btilde"), streams::kActuatorB);
      em.dist_Cbar = dist_from_json(e.at("dist_Cbar"), streams::kCouplingC);
      cfg.extended = em;
    }
    if (j.contains("nonlinearity")) {
      NonlinearitySpec nl;
      nl.kind = NonlinearitySpec::Kind::Power;
      nl.power_c = j.at("nonlinearity").value("power", 2);
      nl.dist_G = dist_from_json(j.at("nonlinearity").at("dist_G"),
                                 streams::kNonlinearG);
      nl.dist_G.axis = Axis::Columns;
      cfg.nonlinearity = nl;
    }
    if (j.contains("hybrid")) {
      HybridModeSet hs;
      for (const json& m : j.at("hybrid").at("modes")) {
        HybridModeSet::Mode mode;
        mode.A = mat_from_json(m.at("A"));
        mode.B = opt_mat(m, "B");
        if (!mode.B.size()) mode.B = Mat::Zero(mode.A.rows(), 1);
        mode.C = mat_from_json(m.at("C"));
        hs.modes.push_back(mode);
      }
      hs.dwell = j.at("hybrid").value("dwell", 2 * static_cast<int>(hs.n()));
      cfg.hybrid = hs;
      cfg.hybrid_Q = opt_mat(j.at("hybrid"), "Q");
      cfg.hybrid_R = opt_mat(j.at("hybrid"), "R");
    }
    if (j.contains("attack")) {
      const json& a = j.at("attack");
      cfg.attack.kind = attack_from(a.value("kind", "none"));
      cfg.attack.start_step = a.value("start_step", 0);
      cfg.attack.magnitude = a.value("magnitude", 0.0);
      cfg.attack.sensor_magnitude = a.value("sensor_magnitude", 0.0);
      cfg.attack.sensor_set = a.value("sensor_set", std::vector<int>{});
      cfg.attack.particles = a.value("particles", 2000);
      cfg.attack.oracle = a.value("oracle", false);
    }
    if (j.contains("controller")) {
      const json& c = j.at("controller");
      cfg.controller.Q_lqr = opt_mat(c, "Q_lqr");
      cfg.controller.R_lqr = opt_mat(c, "R_lqr");
      cfg.controller.setpoint = opt_vec(c, "setpoint");
    }
    if (j.contains("detector")) {
      const json& d = j.at("detector");
      cfg.detector.window = d.value("window", 10);
      cfg.detector.false_alarm_rate = d.value("false_alarm_rate", 0.05);
      cfg.detector.exclusion_alarms = d.value("exclusion_alarms", 5);
    }
    if (j.contains("design")) {
      const json& d = j.at("design");
      const std::string src = d.value("source", "optimal");
      cfg.design.source = src == "baseline" ? DesignSource::Baseline
                          : src == "explicit" ? DesignSource::Explicit
                                              : DesignSource::Optimal;
      cfg.design.time_varying_actuator = d.value("time_varying_actuator", false);
      cfg.design.load_file = d.value("load_file", "");
      if (d.contains("bounds")) {
        const json& b = d.at("bounds");
        cfg.design.bounds.N_B = opt_mat(b, "N_B");
        cfg.design.bounds.Theta_A = opt_mat(b, "Theta_A");
        cfg.design.bounds.Theta_C = opt_mat(b, "Theta_C");
        cfg.design.bounds.M_cal = opt_mat(b, "M");
        if (b.contains("N_t"))
          for (const json& m : b.at("N_t"))
            cfg.design.bounds.N_t.push_back(mat_from_json(m));
        if (b.contains("Theta_i"))
          for (const json& m : b.at("Theta_i"))
            cfg.design.bounds.Theta_i.push_back(mat_from_json(m));
      }
      cfg.design.Sigma_Btilde = opt_mat(d, "Sigma_Btilde");
      cfg.design.Sigma_Abar = opt_mat(d, "Sigma_Abar");
      cfg.design.Sigma_Cbar = opt_mat(d, "Sigma_Cbar");
      cfg.design.Sigma_G = opt_mat(d, "Sigma_G");
    }
    if (j.contains("bound")) {
      cfg.bound.enabled = j.at("bound").value("enabled", false);
      cfg.bound.particles = j.at("bound").value("particles", 2000);
      cfg.bound.jitter = j.at("bound").value("jitter", 1e-9);
    }
    if (j.contains("fim")) {
      cfg.fim.enabled = j.at("fim").value("enabled", false);
      cfg.fim.powers = j.at("fim").value("powers", std::vector<int>{1, 2, 3});
      cfg.fim.stride = j.at("fim").value("stride", 10);
    }
    cfg.P0_scale = j.value("P0_scale", 1.0);
    cfg.fusion_sigma = j.value("fusion_sigma", 1e-6);
    cfg.trials = j.value("trials", 1000);
    cfg.horizon = j.value("horizon", 400);
    cfg.warmup = j.value("warmup", 0);
    cfg.dt = j.value("dt", 1.0);
    cfg.seed = j.value("seed", std::uint64_t(1));
    cfg.out_dir = j.value("out_dir", "out");
    cfg.ci_mode = j.value("ci_mode", false);
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return scenario_from_json(os.str());
}

void save_scenario(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path);
  out << scenario_to_json(cfg) << "\n";
}

}  // namespace mtd
