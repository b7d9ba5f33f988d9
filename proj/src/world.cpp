#include "dsfpo/world.hpp"

#include <algorithm>
#include <cmath>

#include "dsfpo/errors.hpp"

namespace dsfpo {

namespace {
constexpr double kGravity = 9.81;
constexpr double kEps = 1e-9;
constexpr double kBallObsRange = 10.0;  // relative ball position saturates here
}  // namespace

std::string to_string(ZoneKind k) {
  switch (k) {
    case ZoneKind::flat: return "flat";
    case ZoneKind::ramp_up: return "ramp_up";
    case ZoneKind::ramp_down: return "ramp_down";
    case ZoneKind::rough: return "rough";
    case ZoneKind::stair_descent: return "stair_descent";
  }
  return "?";
}

ZoneKind zone_kind_from_string(const std::string& s) {
  if (s == "flat") return ZoneKind::flat;
  if (s == "ramp_up") return ZoneKind::ramp_up;
  if (s == "ramp_down") return ZoneKind::ramp_down;
  if (s == "rough") return ZoneKind::rough;
  if (s == "stair_descent") return ZoneKind::stair_descent;
  throw ConfigError("unknown zone kind '" + s + "'");
}

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0) a += 2.0 * M_PI;
  return a - M_PI;
}

void WorldConfig::validate() const {
  if (dt <= 0 || substeps <= 0 || episode_steps <= 0)
    throw ConfigError("world: dt, substeps, episode_steps must be positive");
  if (zone_order.empty()) throw ConfigError("world: zone_order is empty");
  if (skills.empty()) throw ConfigError("world: no skills configured");
  bool has_dribble = false;
  for (const auto& s : skills) has_dribble |= s.kind == SkillKind::dribble;
  if (!has_dribble) throw ConfigError("world: at least one dribbling skill required");
}

DribbleWorld::DribbleWorld(WorldConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  rebuild_zones(0);
}

TerrainZone DribbleWorld::make_zone(ZoneKind kind, double x0, int difficulty) const {
  const double t = double(difficulty);
  TerrainZone z;
  z.kind = kind;
  z.x_begin = x0;
  z.x_end = x0 + cfg_.zone_length;
  z.friction = cfg_.friction_base;
  switch (kind) {
    case ZoneKind::flat:
      break;
    case ZoneKind::ramp_up:
      z.slope_ax = -cfg_.slope_accel_per_level * t;
      z.rough_std = cfg_.ramp_noise_per_level * t;
      break;
    case ZoneKind::ramp_down:
      z.slope_ax = cfg_.slope_accel_per_level * t;
      z.rough_std = cfg_.ramp_noise_per_level * t;
      break;
    case ZoneKind::rough:
      z.rough_std = cfg_.rough_noise_per_level * t;
      z.friction += cfg_.rough_friction_per_level * t;
      break;
    case ZoneKind::stair_descent:
      z.slope_ax = cfg_.stair_slope_fraction * cfg_.slope_accel_per_level * t;
      z.rough_std = cfg_.stair_noise_per_level * t;
      z.stair_period = cfg_.stair_period;
      z.stair_drop = cfg_.stair_drop_per_level * t;
      break;
  }
  return z;
}

void DribbleWorld::rebuild_zones(int difficulty) {
  zones_.clear();
  double x0 = 0.0;
  for (ZoneKind kind : cfg_.zone_order) {
    zones_.push_back(make_zone(kind, x0, difficulty));
    x0 += cfg_.zone_length;
  }
}

const TerrainZone& DribbleWorld::zone_at(double x) const {
  const double clamped = std::clamp(x, 0.0, cfg_.arena_length() - kEps);
  const auto i = std::size_t(clamped / cfg_.zone_length);
  return zones_[std::min(i, zones_.size() - 1)];
}

bool DribbleWorld::robot_in_bounds() const {
  return state_.px >= 0.0 && state_.px <= cfg_.arena_length() &&
         std::fabs(state_.py) <= cfg_.arena_half_width;
}

void DribbleWorld::reset(double cmd_x, double cmd_y, int difficulty, int cell_x, int cell_y,
                         Rng& rng) {
  rebuild_zones(difficulty);
  state_ = WorldState{};
  state_.cmd_x = cmd_x;
  state_.cmd_y = cmd_y;
  state_.difficulty = difficulty;
  state_.cmd_cell_x = cell_x;
  state_.cmd_cell_y = cell_y;
  state_.last_command.assign(5, 0.0);

  const auto zi = rng.uniform_index(uint64_t(zones_.size()));
  const TerrainZone& z = zones_[zi];
  const double margin = 0.5;
  state_.px = rng.uniform(z.x_begin + margin, z.x_end - margin);
  state_.py = rng.uniform(-cfg_.arena_half_width + margin, cfg_.arena_half_width - margin);
  state_.heading = rng.uniform(-M_PI, M_PI);

  // Ball uniform in the spawn disc, rejected until inside the arena.
  const double r = cfg_.ball_spawn_radius;
  for (;;) {
    const double dx = rng.uniform(-r, r);
    const double dy = rng.uniform(-r, r);
    if (dx * dx + dy * dy > r * r) continue;
    const double bx = state_.px + dx, by = state_.py + dy;
    if (bx < 0.0 || bx > cfg_.arena_length() || std::fabs(by) > cfg_.arena_half_width) continue;
    state_.bx = bx;
    state_.by = by;
    break;
  }

  history_.clear();
  const auto feat = estimator_features();
  for (int i = 0; i < cfg_.feature_history; ++i) history_.push_back(feat);
}

void DribbleWorld::low_level_step(int skill, std::span<const double> command, Rng& rng) {
  if (skill < 0 || skill >= int(cfg_.skills.size()))
    throw ConfigError("low_level_step: skill index " + std::to_string(skill) + " out of range");
  const SkillSpec& sk = cfg_.skills[std::size_t(skill)];
  const double dt = cfg_.dt;
  std::array<double, 5> cmd{};
  for (std::size_t j = 0; j < cmd.size() && j < command.size(); ++j)
    cmd[j] = std::clamp(command[j], -cfg_.command_clip, cfg_.command_clip);

  const double rel_x = state_.bx - state_.px;
  const double rel_y = state_.by - state_.py;
  const double dist = std::hypot(rel_x, rel_y);

  if (sk.kind == SkillKind::dribble) {
    const double tvx = cfg_.v_scale * cmd[0];
    const double tvy = cfg_.v_scale * cmd[1];
    const double tnorm = std::hypot(tvx, tvy);
    // Control point sits behind the ball, opposite the commanded direction.
    double dirx, diry;
    if (tnorm > kEps) {
      dirx = tvx / tnorm;
      diry = tvy / tnorm;
    } else if (dist > kEps) {
      dirx = rel_x / dist;
      diry = rel_y / dist;
    } else {
      dirx = std::cos(state_.heading);
      diry = std::sin(state_.heading);
    }
    const double cx = state_.bx - cfg_.control_point_offset * dirx;
    const double cy = state_.by - cfg_.control_point_offset * diry;
    double vx = cfg_.track_gain * (cx - state_.px);
    double vy = cfg_.track_gain * (cy - state_.py);
    const double vnorm = std::hypot(vx, vy);
    if (vnorm > sk.max_speed) {
      vx *= sk.max_speed / vnorm;
      vy *= sk.max_speed / vnorm;
    }
    state_.vx = vx;
    state_.vy = vy;
    if (dist > kEps) {
      const double target = std::atan2(rel_y, rel_x);
      const double diff = wrap_angle(target - state_.heading);
      state_.heading =
          wrap_angle(state_.heading + std::clamp(diff, -cfg_.turn_rate * dt, cfg_.turn_rate * dt));
    }
    // Kick: applied every substep the ball is in reach.
    if (dist < cfg_.kick_radius) {
      double dvx = sk.kick_gain * (tvx - state_.bvx);
      double dvy = sk.kick_gain * (tvy - state_.bvy);
      const double dnorm = std::hypot(dvx, dvy);
      if (dnorm > sk.kick_cap) {
        dvx *= sk.kick_cap / dnorm;
        dvy *= sk.kick_cap / dnorm;
      }
      state_.bvx += dvx;
      state_.bvy += dvy;
    }
  } else {
    // Locomotion: body-frame velocity command plus yaw rate.
    const double c = std::cos(state_.heading), s = std::sin(state_.heading);
    double vx = cfg_.v_scale * (c * cmd[2] - s * cmd[3]);
    double vy = cfg_.v_scale * (s * cmd[2] + c * cmd[3]);
    const double vnorm = std::hypot(vx, vy);
    if (vnorm > sk.max_speed) {
      vx *= sk.max_speed / vnorm;
      vy *= sk.max_speed / vnorm;
    }
    state_.vx = vx;
    state_.vy = vy;
    state_.heading = wrap_angle(state_.heading + cfg_.omega_scale * cmd[4] * dt);
  }

  // Ball: slope and friction, then terrain noise scaled by the active
  // skill's sensitivity.
  const TerrainZone& zone = zone_at(state_.bx);
  state_.bvx += (zone.slope_ax - zone.friction * state_.bvx) * dt;
  state_.bvy += (zone.slope_ay - zone.friction * state_.bvy) * dt;
  if (zone.rough_std > 0.0) {
    const double sigma = zone.rough_std * sk.rough_sens * std::sqrt(dt);
    state_.bvx += sigma * rng.normal();
    state_.bvy += sigma * rng.normal();
  }

  state_.px += state_.vx * dt;
  state_.py += state_.vy * dt;
  const double prev_bx = state_.bx;
  state_.bx += state_.bvx * dt;
  state_.by += state_.bvy * dt;

  // Stair edges: dropping off a step kicks the ball forward; rolling into a
  // riser damps it.
  if (zone.kind == ZoneKind::stair_descent && zone.stair_drop > 0.0) {
    const auto step_of = [&](double x) {
      return std::floor((x - zone.x_begin) / zone.stair_period);
    };
    const double before = step_of(prev_bx), after = step_of(state_.bx);
    if (after > before) {
      state_.bvx += (after - before) * cfg_.stair_impulse_gain *
                    std::sqrt(kGravity * zone.stair_drop);
    } else if (after < before) {
      state_.bvx *= cfg_.stair_riser_damping;
    }
  }
}

DribbleWorld::StepResult DribbleWorld::high_level_step(const HierAction& action, Rng& rng) {
  const int prev_skill = state_.last_skill;
  for (int s = 0; s < cfg_.substeps; ++s) low_level_step(action.skill, action.command, rng);

  state_.step += 1;
  state_.skill_history.push_back(action.skill);
  const std::size_t keep = std::size_t(cfg_.reward.consistency_window) + 1;
  if (state_.skill_history.size() > keep)
    state_.skill_history.erase(state_.skill_history.begin(),
                               state_.skill_history.end() - long(keep));
  state_.last_skill = action.skill;
  for (std::size_t j = 0; j < state_.last_command.size() && j < action.command.size(); ++j)
    state_.last_command[j] =
        std::clamp(action.command[j], -cfg_.command_clip, cfg_.command_clip);

  StepResult out;
  out.breakdown = compute_reward(state_, action.skill, prev_skill);
  out.reward = out.breakdown.total;
  out.done = state_.step >= cfg_.episode_steps || !robot_in_bounds();
  push_history();
  return out;
}

RewardBreakdown DribbleWorld::compute_reward(const WorldState& now, int skill,
                                             int prev_skill) const {
  const RewardConfig& rc = cfg_.reward;
  RewardBreakdown b;

  // exp arguments are floored so kernels stay strictly positive even at
  // extreme errors (exp underflows to 0 below about -745).
  const auto kernel = [](double arg) { return std::exp(std::max(arg, -700.0)); };

  const double rel_x = now.bx - now.px, rel_y = now.by - now.py;
  const double dist = std::hypot(rel_x, rel_y);
  b.robot_ball_distance = kernel(-rc.delta_p * dist * dist);

  const double cmd_norm = std::hypot(now.cmd_x, now.cmd_y);
  double e_rbcmd = 0.0, e_rbbase = 0.0;
  if (dist > kEps) {
    const double a_rb = std::atan2(rel_y, rel_x);
    if (cmd_norm > kEps) e_rbcmd = wrap_angle(a_rb - std::atan2(now.cmd_y, now.cmd_x));
    e_rbbase = wrap_angle(a_rb - now.heading);
  }
  b.yaw_alignment = kernel(-rc.delta_psi * (e_rbcmd * e_rbcmd + e_rbbase * e_rbbase));

  int consistent = 0;
  for (std::size_t i = 1; i < now.skill_history.size(); ++i)
    if (now.skill_history[i] == now.skill_history[i - 1]) ++consistent;
  b.consistent_skill_index = double(consistent);
  b.change_skill_index = (prev_skill >= 0 && skill != prev_skill) ? 1.0 : 0.0;

  const double ball_norm = std::hypot(now.bvx, now.bvy);
  const double norm_err = cmd_norm - ball_norm;
  b.ball_velocity_norm = kernel(-rc.delta_n * norm_err * norm_err);

  double angle_err = M_PI / 2.0;  // neutral when either direction is undefined
  if (ball_norm > kEps && cmd_norm > kEps)
    angle_err = wrap_angle(std::atan2(now.bvy, now.bvx) - std::atan2(now.cmd_y, now.cmd_x));
  b.ball_velocity_angle = 1.0 - (angle_err * angle_err) / (M_PI * M_PI);

  const double ex = now.bvx - now.cmd_x, ey = now.bvy - now.cmd_y;
  b.ball_velocity_error = kernel(-rc.delta_v * (ex * ex + ey * ey));

  const bool dribbling = cfg_.skills[std::size_t(skill)].kind == SkillKind::dribble;
  b.dribbling_near_ball = (dribbling && dist < rc.d_max) ? 1.0 : 0.0;

  b.total = rc.w_distance * b.robot_ball_distance + rc.w_yaw * b.yaw_alignment +
            rc.w_consistent * b.consistent_skill_index + rc.w_change * b.change_skill_index +
            rc.w_vel_norm * b.ball_velocity_norm + rc.w_vel_angle * b.ball_velocity_angle +
            rc.w_vel_err * b.ball_velocity_error + rc.w_drib_near * b.dribbling_near_ball;
  return b;
}

std::vector<double> DribbleWorld::estimator_features() const {
  std::vector<double> f;
  f.reserve(std::size_t(estimator_feature_dim()));
  f.push_back(std::sin(state_.heading));
  f.push_back(std::cos(state_.heading));
  f.push_back(state_.vx);
  f.push_back(state_.vy);
  f.push_back(std::clamp(state_.bx - state_.px, -kBallObsRange, kBallObsRange));
  f.push_back(std::clamp(state_.by - state_.py, -kBallObsRange, kBallObsRange));
  for (std::size_t k = 0; k < cfg_.skills.size(); ++k)
    f.push_back(state_.last_skill == int(k) ? 1.0 : 0.0);
  for (std::size_t j = 0; j < 5; ++j)
    f.push_back(j < state_.last_command.size() ? state_.last_command[j] : 0.0);
  return f;
}

int DribbleWorld::estimator_feature_dim() const { return 6 + int(cfg_.skills.size()) + 5; }

std::vector<double> DribbleWorld::privileged_context() const {
  const TerrainZone& z = zone_at(state_.bx);
  return {state_.bvx, state_.bvy, z.slope_ax, z.slope_ay, z.rough_std, z.friction};
}

std::vector<double> DribbleWorld::actor_obs(std::span<const double> z) const {
  if (int(z.size()) != kContextDim)
    throw ShapeError("actor_obs: context size " + std::to_string(z.size()));
  std::vector<double> o = estimator_features();
  o.push_back(state_.cmd_x);
  o.push_back(state_.cmd_y);
  o.insert(o.end(), z.begin(), z.end());
  return o;
}

std::vector<double> DribbleWorld::full_state(std::span<const double> z) const {
  std::vector<double> s = actor_obs(z);
  const auto priv = privileged_context();
  s.insert(s.end(), priv.begin(), priv.end());
  return s;
}

int DribbleWorld::obs_dim() const { return estimator_feature_dim() + 2 + kContextDim; }

DribbleWorld::ObservationPair DribbleWorld::observe(const EstimatorFn& estimator) const {
  std::vector<std::vector<double>> hist(history_.begin(), history_.end());
  ObservationPair out;
  out.context = estimator(hist);
  if (int(out.context.size()) != kContextDim)
    throw ShapeError("observe: estimator returned " + std::to_string(out.context.size()) +
                     " values, expected " + std::to_string(kContextDim));
  out.actor = actor_obs(out.context);
  out.full = full_state(out.context);
  return out;
}

void DribbleWorld::push_history() {
  history_.push_back(estimator_features());
  while (int(history_.size()) > cfg_.feature_history) history_.pop_front();
}

SkillUsage skill_usage_report(std::span<const std::pair<ZoneKind, int>> annotated_steps) {
  SkillUsage u;
  for (const auto& [zone, skill] : annotated_steps) {
    const auto zi = std::size_t(zone);
    if (skill < 0 || skill >= 4) continue;
    u.freq[zi][std::size_t(skill)] += 1.0;
    u.steps[zi] += 1;
  }
  for (std::size_t zi = 0; zi < std::size_t(kNumZoneKinds); ++zi) {
    u.present[zi] = u.steps[zi] > 0;
    if (u.present[zi])
      for (auto& f : u.freq[zi]) f /= double(u.steps[zi]);
  }
  return u;
}

}  // namespace dsfpo
