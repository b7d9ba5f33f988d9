#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "dsfpo/curriculum.hpp"
#include "dsfpo/objective.hpp"
#include "dsfpo/policy.hpp"
#include "dsfpo/world.hpp"

namespace dsfpo {

// Every knob of a run. Serialized canonically into checkpoints and log
// headers; (config, seed) fully determines a training run.
struct RunConfig {
  // run control
  uint64_t seed = 0;
  std::string algo = "dsf_po";
  int num_envs = 64;
  int horizon = 200;
  int iterations = 300;
  int checkpoint_every = 50;
  int num_threads = 1;
  int log_every = 1;  // console progress cadence; the metrics file gets every iteration
  std::string out_dir = "out";

  // optimization
  double clip_epsilon = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int epochs = 5;
  int minibatches = 4;
  double entropy_coef = 0.005;
  double value_coef = 1.0;
  double learning_rate = 3e-4;
  double max_grad_norm = 1.0;

  // networks
  std::vector<int> sfe_widths = {512, 256, 128};
  std::vector<int> critic_widths = {128, 128};
  std::vector<int> estimator_widths = {128, 128};
  int estimator_window = 5;
  double init_std = 0.5;
  double estimator_lr = 1e-3;
  int estimator_minibatches = 4;

  // environment
  int episode_steps = 200;
  double dt = 0.02;
  int substeps = 5;
  std::string zone_order = "flat,ramp_up,ramp_down,rough,stair_descent";
  double zone_length = 10.0;
  double arena_half_width = 5.0;
  double v_scale = 1.5;
  double omega_scale = 2.0;
  double command_clip = 1.5;
  double kick_radius = 0.4;
  double control_point_offset = 0.3;
  double track_gain = 3.0;
  double turn_rate = 3.0;
  double ball_spawn_radius = 2.0;
  std::vector<double> kick_gains = {0.3, 0.7};
  std::vector<double> kick_caps = {0.3, 0.8};
  std::vector<double> dribble_speeds = {1.25, 1.25};
  std::vector<double> loco_speeds = {1.5, 0.75};
  std::vector<double> rough_sens = {1.0, 1.0, 2.0, 0.5};
  double slope_accel_per_level = 0.15;
  double stair_slope_fraction = 0.5;
  double rough_noise_per_level = 0.06;
  double ramp_noise_per_level = 0.0;
  double stair_noise_per_level = 0.03;
  double friction_base = 0.5;
  double rough_friction_per_level = 0.06;
  double stair_period = 0.5;
  double stair_drop_per_level = 0.01;
  double stair_impulse_gain = 0.5;
  double stair_riser_damping = 0.5;

  // reward kernels and weights
  double delta_p = 0.5;
  double delta_psi = 1.0;
  double delta_n = 2.0;
  double delta_v = 2.0;
  double d_max = 0.5;
  int consistency_window = 10;
  double w_distance = 4.0;
  double w_yaw = 4.0;
  double w_consistent = 0.1;
  double w_change = -0.005;
  double w_vel_norm = 8.0;
  double w_vel_angle = 8.0;
  double w_vel_err = 8.0;
  double w_drib_near = 1.0;

  // curriculum
  double cmd_range = 1.5;
  double cmd_cell = 0.1;
  double init_cmd_range = 0.5;
  int max_difficulty = 5;
  int init_difficulty_max = 1;
  double d_th1 = 3.0;
  double d_th2 = 1.0;
  double gate_kernel_threshold = 0.5;
};

// key = value text, one field per line, fixed order, doubles at full
// round-trip precision.
std::string serialize_config(const RunConfig& cfg);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
// Single assignment, e.g. from a --set key=value flag. Unknown keys throw.
void set_config_field(RunConfig& cfg, const std::string& key, const std::string& value);
uint64_t config_hash(const RunConfig& cfg);

WorldConfig make_world_config(const RunConfig& cfg);
PolicyConfig make_policy_config(const RunConfig& cfg);
DsfPoConfig make_dsfpo_config(const RunConfig& cfg);
CurriculumConfig make_curriculum_config(const RunConfig& cfg);

}  // namespace dsfpo
