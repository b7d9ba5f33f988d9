#include "dsfpo/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "dsfpo/errors.hpp"

namespace dsfpo {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number '" + s + "' for " + key);
  }
}

long parse_long(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer '" + s + "' for " + key);
  }
}

template <class T>
std::string join_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>)
      out += fmt_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

struct Field {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

Field make_field(const char* name, double RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return fmt_double(c.*m); },
          [m, n = std::string(name)](RunConfig& c, const std::string& v) {
            c.*m = parse_double(v, n);
          }};
}
Field make_field(const char* name, int RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, n = std::string(name)](RunConfig& c, const std::string& v) {
            c.*m = int(parse_long(v, n));
          }};
}
Field make_field(const char* name, uint64_t RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, n = std::string(name)](RunConfig& c, const std::string& v) {
            try {
              c.*m = std::stoull(v);
            } catch (const std::exception&) {
              throw ConfigError("config: bad integer '" + v + "' for " + n);
            }
          }};
}
Field make_field(const char* name, std::string RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return c.*m; },
          [m](RunConfig& c, const std::string& v) { c.*m = v; }};
}
Field make_field(const char* name, std::vector<int> RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return join_list(c.*m); },
          [m, n = std::string(name)](RunConfig& c, const std::string& v) {
            std::vector<int> out;
            for (const auto& item : split_commas(v)) out.push_back(int(parse_long(item, n)));
            c.*m = std::move(out);
          }};
}
Field make_field(const char* name, std::vector<double> RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return join_list(c.*m); },
          [m, n = std::string(name)](RunConfig& c, const std::string& v) {
            std::vector<double> out;
            for (const auto& item : split_commas(v)) out.push_back(parse_double(item, n));
            c.*m = std::move(out);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      make_field("seed", &RunConfig::seed),
      make_field("algo", &RunConfig::algo),
      make_field("num_envs", &RunConfig::num_envs),
      make_field("horizon", &RunConfig::horizon),
      make_field("iterations", &RunConfig::iterations),
      make_field("checkpoint_every", &RunConfig::checkpoint_every),
      make_field("num_threads", &RunConfig::num_threads),
      make_field("log_every", &RunConfig::log_every),
      make_field("out_dir", &RunConfig::out_dir),
      make_field("clip_epsilon", &RunConfig::clip_epsilon),
      make_field("gamma", &RunConfig::gamma),
      make_field("gae_lambda", &RunConfig::gae_lambda),
      make_field("epochs", &RunConfig::epochs),
      make_field("minibatches", &RunConfig::minibatches),
      make_field("entropy_coef", &RunConfig::entropy_coef),
      make_field("value_coef", &RunConfig::value_coef),
      make_field("learning_rate", &RunConfig::learning_rate),
      make_field("max_grad_norm", &RunConfig::max_grad_norm),
      make_field("sfe_widths", &RunConfig::sfe_widths),
      make_field("critic_widths", &RunConfig::critic_widths),
      make_field("estimator_widths", &RunConfig::estimator_widths),
      make_field("estimator_window", &RunConfig::estimator_window),
      make_field("init_std", &RunConfig::init_std),
      make_field("estimator_lr", &RunConfig::estimator_lr),
      make_field("estimator_minibatches", &RunConfig::estimator_minibatches),
      make_field("episode_steps", &RunConfig::episode_steps),
      make_field("dt", &RunConfig::dt),
      make_field("substeps", &RunConfig::substeps),
      make_field("zone_order", &RunConfig::zone_order),
      make_field("zone_length", &RunConfig::zone_length),
      make_field("arena_half_width", &RunConfig::arena_half_width),
      make_field("v_scale", &RunConfig::v_scale),
      make_field("omega_scale", &RunConfig::omega_scale),
      make_field("command_clip", &RunConfig::command_clip),
      make_field("kick_radius", &RunConfig::kick_radius),
      make_field("control_point_offset", &RunConfig::control_point_offset),
      make_field("track_gain", &RunConfig::track_gain),
      make_field("turn_rate", &RunConfig::turn_rate),
      make_field("ball_spawn_radius", &RunConfig::ball_spawn_radius),
      make_field("kick_gains", &RunConfig::kick_gains),
      make_field("kick_caps", &RunConfig::kick_caps),
      make_field("dribble_speeds", &RunConfig::dribble_speeds),
      make_field("loco_speeds", &RunConfig::loco_speeds),
      make_field("rough_sens", &RunConfig::rough_sens),
      make_field("slope_accel_per_level", &RunConfig::slope_accel_per_level),
      make_field("stair_slope_fraction", &RunConfig::stair_slope_fraction),
      make_field("rough_noise_per_level", &RunConfig::rough_noise_per_level),
      make_field("ramp_noise_per_level", &RunConfig::ramp_noise_per_level),
      make_field("stair_noise_per_level", &RunConfig::stair_noise_per_level),
      make_field("friction_base", &RunConfig::friction_base),
      make_field("rough_friction_per_level", &RunConfig::rough_friction_per_level),
      make_field("stair_period", &RunConfig::stair_period),
      make_field("stair_drop_per_level", &RunConfig::stair_drop_per_level),
      make_field("stair_impulse_gain", &RunConfig::stair_impulse_gain),
      make_field("stair_riser_damping", &RunConfig::stair_riser_damping),
      make_field("delta_p", &RunConfig::delta_p),
      make_field("delta_psi", &RunConfig::delta_psi),
      make_field("delta_n", &RunConfig::delta_n),
      make_field("delta_v", &RunConfig::delta_v),
      make_field("d_max", &RunConfig::d_max),
      make_field("consistency_window", &RunConfig::consistency_window),
      make_field("w_distance", &RunConfig::w_distance),
      make_field("w_yaw", &RunConfig::w_yaw),
      make_field("w_consistent", &RunConfig::w_consistent),
      make_field("w_change", &RunConfig::w_change),
      make_field("w_vel_norm", &RunConfig::w_vel_norm),
      make_field("w_vel_angle", &RunConfig::w_vel_angle),
      make_field("w_vel_err", &RunConfig::w_vel_err),
      make_field("w_drib_near", &RunConfig::w_drib_near),
      make_field("cmd_range", &RunConfig::cmd_range),
      make_field("cmd_cell", &RunConfig::cmd_cell),
      make_field("init_cmd_range", &RunConfig::init_cmd_range),
      make_field("max_difficulty", &RunConfig::max_difficulty),
      make_field("init_difficulty_max", &RunConfig::init_difficulty_max),
      make_field("d_th1", &RunConfig::d_th1),
      make_field("d_th2", &RunConfig::d_th2),
      make_field("gate_kernel_threshold", &RunConfig::gate_kernel_threshold),
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.name + " = " + f.get(cfg) + "\n";
  return out;
}

void set_config_field(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (f.name == key) {
      f.set(cfg, value);
      return;
    }
  throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    set_config_field(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

uint64_t config_hash(const RunConfig& cfg) {
  const std::string text = serialize_config(cfg);
  uint64_t h = 1469598103934665603ull;
  for (char c : text) {
    h ^= uint64_t(uint8_t(c));
    h *= 1099511628211ull;
  }
  return h;
}

WorldConfig make_world_config(const RunConfig& cfg) {
  WorldConfig w;
  w.dt = cfg.dt;
  w.substeps = cfg.substeps;
  w.episode_steps = cfg.episode_steps;
  w.zone_length = cfg.zone_length;
  w.arena_half_width = cfg.arena_half_width;
  w.zone_order.clear();
  for (const auto& name : split_commas(cfg.zone_order)) w.zone_order.push_back(zone_kind_from_string(trim(name)));
  w.v_scale = cfg.v_scale;
  w.omega_scale = cfg.omega_scale;
  w.command_clip = cfg.command_clip;
  w.kick_radius = cfg.kick_radius;
  w.control_point_offset = cfg.control_point_offset;
  w.track_gain = cfg.track_gain;
  w.turn_rate = cfg.turn_rate;
  w.ball_spawn_radius = cfg.ball_spawn_radius;
  if (cfg.kick_gains.size() != 2 || cfg.kick_caps.size() != 2 || cfg.dribble_speeds.size() != 2 ||
      cfg.loco_speeds.size() != 2 || cfg.rough_sens.size() != 4)
    throw ConfigError("config: skill parameter lists need 2 dribble and 2 locomotion entries");
  w.skills = {
      {SkillKind::dribble, cfg.kick_gains[0], cfg.kick_caps[0], cfg.dribble_speeds[0],
       cfg.rough_sens[0]},
      {SkillKind::dribble, cfg.kick_gains[1], cfg.kick_caps[1], cfg.dribble_speeds[1],
       cfg.rough_sens[1]},
      {SkillKind::locomotion, 0.0, 0.0, cfg.loco_speeds[0], cfg.rough_sens[2]},
      {SkillKind::locomotion, 0.0, 0.0, cfg.loco_speeds[1], cfg.rough_sens[3]},
  };
  if (!(cfg.kick_gains[1] > cfg.kick_gains[0]) || !(cfg.kick_caps[1] > cfg.kick_caps[0]))
    throw ConfigError("config: the second dribbling skill must kick harder");
  if (!(cfg.loco_speeds[0] > cfg.loco_speeds[1]) || !(cfg.rough_sens[2] > cfg.rough_sens[3]))
    throw ConfigError("config: locomotion skill 3 must be faster and more noise-prone than 4");
  w.slope_accel_per_level = cfg.slope_accel_per_level;
  w.stair_slope_fraction = cfg.stair_slope_fraction;
  w.rough_noise_per_level = cfg.rough_noise_per_level;
  w.ramp_noise_per_level = cfg.ramp_noise_per_level;
  w.stair_noise_per_level = cfg.stair_noise_per_level;
  w.friction_base = cfg.friction_base;
  w.rough_friction_per_level = cfg.rough_friction_per_level;
  w.stair_period = cfg.stair_period;
  w.stair_drop_per_level = cfg.stair_drop_per_level;
  w.stair_impulse_gain = cfg.stair_impulse_gain;
  w.stair_riser_damping = cfg.stair_riser_damping;
  w.feature_history = cfg.estimator_window;
  w.reward.delta_p = cfg.delta_p;
  w.reward.delta_psi = cfg.delta_psi;
  w.reward.delta_n = cfg.delta_n;
  w.reward.delta_v = cfg.delta_v;
  w.reward.d_max = cfg.d_max;
  w.reward.consistency_window = cfg.consistency_window;
  w.reward.w_distance = cfg.w_distance;
  w.reward.w_yaw = cfg.w_yaw;
  w.reward.w_consistent = cfg.w_consistent;
  w.reward.w_change = cfg.w_change;
  w.reward.w_vel_norm = cfg.w_vel_norm;
  w.reward.w_vel_angle = cfg.w_vel_angle;
  w.reward.w_vel_err = cfg.w_vel_err;
  w.reward.w_drib_near = cfg.w_drib_near;
  return w;
}

PolicyConfig make_policy_config(const RunConfig& cfg) {
  DribbleWorld probe{make_world_config(cfg)};
  PolicyConfig p;
  p.obs_dim = probe.obs_dim();
  p.state_dim = probe.state_dim();
  p.sfe_widths = cfg.sfe_widths;
  p.critic_widths = cfg.critic_widths;
  p.estimator_widths = cfg.estimator_widths;
  p.estimator_window = cfg.estimator_window;
  p.estimator_step_dim = probe.estimator_feature_dim();
  p.estimator_output_dim = DribbleWorld::kContextDim;
  p.init_std = cfg.init_std;
  return p;  // default four-skill layout matches the world's skill set
}

DsfPoConfig make_dsfpo_config(const RunConfig& cfg) {
  DsfPoConfig d;
  d.clip_epsilon = cfg.clip_epsilon;
  d.gamma = cfg.gamma;
  d.gae_lambda = cfg.gae_lambda;
  d.epochs = cfg.epochs;
  d.minibatches = cfg.minibatches;
  d.entropy_coef = cfg.entropy_coef;
  d.value_coef = cfg.value_coef;
  d.learning_rate = cfg.learning_rate;
  d.max_grad_norm = cfg.max_grad_norm;
  d.algorithm = algorithm_from_string(cfg.algo);
  return d;
}

CurriculumConfig make_curriculum_config(const RunConfig& cfg) {
  CurriculumConfig c;
  c.cmd_range = cfg.cmd_range;
  c.cmd_cell = cfg.cmd_cell;
  c.init_cmd_range = cfg.init_cmd_range;
  c.max_difficulty = cfg.max_difficulty;
  c.init_difficulty_max = cfg.init_difficulty_max;
  c.d_th1 = cfg.d_th1;
  c.d_th2 = cfg.d_th2;
  c.gate_kernel_threshold = cfg.gate_kernel_threshold;
  return c;
}

}  // namespace dsfpo
