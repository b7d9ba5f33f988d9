#pragma once
#include <array>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsfpo/policy.hpp"
#include "dsfpo/rng.hpp"

namespace dsfpo {

enum class ZoneKind { flat, ramp_up, ramp_down, rough, stair_descent };
constexpr int kNumZoneKinds = 5;
std::string to_string(ZoneKind k);
ZoneKind zone_kind_from_string(const std::string& s);

// Ball dynamics parameters of one terrain strip, already scaled by the
// episode's difficulty level. Difficulty 0 reduces every zone to the flat
// profile (zero slope, zero noise, base friction, zero stair drop).
struct TerrainZone {
  ZoneKind kind = ZoneKind::flat;
  double x_begin = 0.0;
  double x_end = 0.0;
  double slope_ax = 0.0;     // m/s^2 on the ball
  double slope_ay = 0.0;
  double rough_std = 0.0;    // ball velocity noise scale, m/s per sqrt(s)
  double friction = 0.0;     // 1/s
  double stair_period = 0.0; // m, stair_descent only
  double stair_drop = 0.0;   // m, stair_descent only
};

enum class SkillKind { dribble, locomotion };

struct SkillSpec {
  SkillKind kind = SkillKind::dribble;
  double kick_gain = 0.0;   // fraction of velocity error corrected per substep
  double kick_cap = 0.0;    // m/s per substep
  double max_speed = 0.0;   // robot m/s
  double rough_sens = 1.0;  // multiplier on terrain ball noise
};

struct RewardConfig {
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
};

struct RewardBreakdown {
  double robot_ball_distance = 0.0;
  double yaw_alignment = 0.0;
  double consistent_skill_index = 0.0;
  double change_skill_index = 0.0;
  double ball_velocity_norm = 0.0;
  double ball_velocity_angle = 0.0;
  double ball_velocity_error = 0.0;
  double dribbling_near_ball = 0.0;
  double total = 0.0;
};

struct WorldConfig {
  double dt = 0.02;
  int substeps = 5;
  int episode_steps = 200;
  double zone_length = 10.0;
  double arena_half_width = 5.0;
  std::vector<ZoneKind> zone_order = {ZoneKind::flat, ZoneKind::ramp_up, ZoneKind::ramp_down,
                                      ZoneKind::rough, ZoneKind::stair_descent};
  double v_scale = 1.5;
  double omega_scale = 2.0;
  double command_clip = 1.5;
  double kick_radius = 0.4;
  double control_point_offset = 0.3;
  double track_gain = 3.0;
  double turn_rate = 3.0;
  double ball_spawn_radius = 2.0;
  // Skill 1 is the stronger kicker; skill 2 is the fast but noise-prone
  // runner, skill 3 the slow robust one (0-based: 0,1 dribble; 2,3 locomote).
  std::vector<SkillSpec> skills = {
      {SkillKind::dribble, 0.3, 0.3, 1.25, 1.0},
      {SkillKind::dribble, 0.7, 0.8, 1.25, 1.0},
      {SkillKind::locomotion, 0.0, 0.0, 1.5, 2.0},
      {SkillKind::locomotion, 0.0, 0.0, 0.75, 0.5},
  };
  // Per-difficulty-level scaling of the zones.
  double slope_accel_per_level = 0.15;   // m/s^2 on ramps
  double stair_slope_fraction = 0.5;     // stair descent pull, fraction of ramp accel
  double rough_noise_per_level = 0.06;
  double ramp_noise_per_level = 0.0;
  double stair_noise_per_level = 0.03;
  double friction_base = 0.5;            // 1/s
  double rough_friction_per_level = 0.06;
  double stair_period = 0.5;             // m
  double stair_drop_per_level = 0.01;    // m
  double stair_impulse_gain = 0.5;       // impulse = gain * sqrt(g * drop)
  double stair_riser_damping = 0.5;      // backward edge crossing
  int feature_history = 5;               // estimator window retained per env
  RewardConfig reward;

  double arena_length() const { return zone_length * double(zone_order.size()); }
  void validate() const;
};

struct WorldState {
  double px = 0, py = 0;      // robot position, m
  double heading = 0;         // wrapped to (-pi, pi]
  double vx = 0, vy = 0;      // robot velocity, m/s
  double bx = 0, by = 0;      // ball position
  double bvx = 0, bvy = 0;    // ball velocity
  int step = 0;               // high-level steps since reset
  double cmd_x = 0, cmd_y = 0;  // user command, target ball velocity (global, m/s)
  int difficulty = 0;
  int cmd_cell_x = 0, cmd_cell_y = 0;  // curriculum source cell
  int last_skill = -1;                 // -1 before the first step of an episode
  std::vector<int> skill_history;      // recent executed skills, newest last
  std::vector<double> last_command;    // clipped normalized command fed to the sim
};

double wrap_angle(double a);

// Point robot plus ball on a strip of terrain zones. 50 Hz physics under
// 10 Hz decisions with the default dt/substeps. Owns no rng: every stochastic
// call takes the caller's stream, so (seed, action sequence) fixes the
// trajectory bit-exactly.
class DribbleWorld {
 public:
  explicit DribbleWorld(WorldConfig cfg);

  void reset(double cmd_x, double cmd_y, int difficulty, int cell_x, int cell_y, Rng& rng);

  // One physics substep with the held skill and normalized command
  // (clipped internally to +-command_clip before use).
  void low_level_step(int skill, std::span<const double> command, Rng& rng);

  struct StepResult {
    double reward = 0.0;
    RewardBreakdown breakdown;
    bool done = false;
  };
  StepResult high_level_step(const HierAction& action, Rng& rng);

  RewardBreakdown compute_reward(const WorldState& now, int skill, int prev_skill) const;

  const WorldState& state() const { return state_; }
  WorldState& mutable_state() { return state_; }
  const WorldConfig& config() const { return cfg_; }

  const TerrainZone& zone_at(double x) const;
  ZoneKind zone_kind_at(double x) const { return zone_at(x).kind; }
  const std::vector<TerrainZone>& zones() const { return zones_; }
  bool robot_in_bounds() const;

  // Per-step estimator features: heading encoding, robot velocity, relative
  // ball position, previous action summary.
  std::vector<double> estimator_features() const;
  int estimator_feature_dim() const;
  // True ball velocity plus the terrain parameters at the ball's zone.
  std::vector<double> privileged_context() const;
  static constexpr int kContextDim = 6;

  // Actor observation (no privileged fields) and full critic state given the
  // estimated context z.
  std::vector<double> actor_obs(std::span<const double> z) const;
  std::vector<double> full_state(std::span<const double> z) const;
  int obs_dim() const;
  int state_dim() const { return obs_dim() + kContextDim; }

  using EstimatorFn =
      std::function<std::vector<double>(std::span<const std::vector<double>>)>;
  struct ObservationPair {
    std::vector<double> actor;
    std::vector<double> full;
    std::vector<double> context;  // z as produced by the estimator
  };
  ObservationPair observe(const EstimatorFn& estimator) const;

  const std::deque<std::vector<double>>& feature_history() const { return history_; }
  void restore_feature_history(std::deque<std::vector<double>> h) { history_ = std::move(h); }

  // Rebuilds difficulty-scaled zones; used when restoring a checkpointed state.
  void rebuild_zones(int difficulty);

 private:
  void push_history();
  TerrainZone make_zone(ZoneKind kind, double x0, int difficulty) const;

  WorldConfig cfg_;
  WorldState state_;
  std::vector<TerrainZone> zones_;
  std::deque<std::vector<double>> history_;
};

// Per-terrain skill usage frequencies from (zone, skill) step annotations.
struct SkillUsage {
  std::array<std::array<double, 4>, kNumZoneKinds> freq{};  // rows sum to 1 where present
  std::array<bool, kNumZoneKinds> present{};
  std::array<long, kNumZoneKinds> steps{};
};
SkillUsage skill_usage_report(std::span<const std::pair<ZoneKind, int>> annotated_steps);

}  // namespace dsfpo
