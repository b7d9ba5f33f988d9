#include "dsfpo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <thread>

#include "dsfpo/errors.hpp"
#include "dsfpo/rollout.hpp"

namespace dsfpo {

namespace {

using ordered_json = nlohmann::ordered_json;

// Chunked fan-out over [0, n). Each body call touches only its own index's
// state, so the result is identical for any thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::vector<std::pair<std::string, Tensor>> copy_named(std::vector<ParamRef> refs) {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.emplace_back(r.name, *r.value);
  return out;
}

Checkpoint::AdamBlob adam_blob(const Adam& opt, const std::vector<ParamRef>& group) {
  Checkpoint::AdamBlob blob;
  blob.step = opt.step_count();
  const auto& m = opt.first_moments();
  const auto& v = opt.second_moments();
  for (std::size_t i = 0; i < group.size(); ++i) {
    blob.m.emplace_back(group[i].name, m[i]);
    blob.v.emplace_back(group[i].name, v[i]);
  }
  return blob;
}

void restore_adam(Adam& opt, const Checkpoint::AdamBlob& blob,
                  const std::vector<ParamRef>& group) {
  std::vector<Tensor> m, v;
  for (const auto& ref : group) {
    auto find = [&](const std::vector<std::pair<std::string, Tensor>>& from) -> const Tensor* {
      for (const auto& [name, t] : from)
        if (name == ref.name) return &t;
      return nullptr;
    };
    const Tensor* tm = find(blob.m);
    const Tensor* tv = find(blob.v);
    if (!tm || !tv)
      throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                            "checkpoint: optimizer state missing for " + ref.name);
    m.push_back(*tm);
    v.push_back(*tv);
  }
  opt.restore(blob.step, std::move(m), std::move(v));
}

}  // namespace

void apply_named_params(PolicyParams& params,
                        const std::vector<std::pair<std::string, Tensor>>& named) {
  auto refs = params.all_params();
  if (named.size() != refs.size())
    throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                          "checkpoint: has " + std::to_string(named.size()) +
                              " tensors, config needs " + std::to_string(refs.size()));
  for (const auto& ref : refs) {
    const Tensor* found = nullptr;
    for (const auto& [name, t] : named)
      if (name == ref.name) found = &t;
    if (!found)
      throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                            "checkpoint: missing tensor " + ref.name);
    if (!found->same_shape(*ref.value))
      throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                            "checkpoint: tensor " + ref.name + " has shape " +
                                found->shape_str() + ", config needs " + ref.value->shape_str());
    *ref.value = *found;
  }
}

void Trainer::build(const RunConfig& cfg) {
  cfg_ = cfg;
  algo_cfg_ = make_dsfpo_config(cfg);
  algo_cfg_.validate();
  cur_cfg_ = make_curriculum_config(cfg);
  cur_cfg_.validate();
  const auto world_cfg = make_world_config(cfg);
  const auto policy_cfg = make_policy_config(cfg);

  Rng init_rng = Rng::stream(cfg.seed, "init");
  params_ = PolicyParams::init(policy_cfg, init_rng);
  rl_opt_ = Adam({.lr = cfg.learning_rate}, params_.rl_params());
  est_opt_ = Adam({.lr = cfg.estimator_lr}, params_.estimator_params());
  grid_ = init_grid(cur_cfg_);
  update_rng_ = Rng::stream(cfg.seed, "update");

  envs_.clear();
  env_rngs_.clear();
  sampler_rngs_.clear();
  accums_.assign(std::size_t(cfg.num_envs), {});
  for (int e = 0; e < cfg.num_envs; ++e) {
    envs_.emplace_back(world_cfg);
    env_rngs_.push_back(Rng::stream(cfg.seed, "env", e));
    sampler_rngs_.push_back(Rng::stream(cfg.seed, "sampler", e));
  }
}

Trainer Trainer::make(const RunConfig& cfg) {
  Trainer t;
  t.build(cfg);
  for (int e = 0; e < cfg.num_envs; ++e) t.reset_env(e);
  return t;
}

void Trainer::reset_env(int e) {
  const auto cs = curriculum_sample(grid_, env_rngs_[std::size_t(e)]);
  envs_[std::size_t(e)].reset(cs.cmd_x, cs.cmd_y, cs.difficulty, cs.cell_x, cs.cell_y,
                              env_rngs_[std::size_t(e)]);
  auto& a = accums_[std::size_t(e)];
  a = {};
  a.ball_sx = envs_[std::size_t(e)].state().bx;
  a.ball_sy = envs_[std::size_t(e)].state().by;
}

MetricsRecord Trainer::run_iteration() {
  const int E = cfg_.num_envs, H = cfg_.horizon;
  const PolicyConfig& pc = params_.cfg;
  const int obs_dim = pc.obs_dim, state_dim = pc.state_dim;
  const int est_dim = pc.estimator_input_dim();
  const int K = pc.skills.num_skills, C = pc.skills.command_dim;
  RolloutBuffer buf(E, H, obs_dim, state_dim, est_dim, K, C);

  struct Completion {
    int step = 0;
    double reward = 0;
    int length = 0;
    EpisodeOutcome outcome;
  };
  std::vector<std::vector<Completion>> completions(static_cast<std::size_t>(E));

  const auto estimator_fn = [this](std::span<const std::vector<double>> hist) {
    return estimator_forward(params_, hist);
  };

  Tensor obs_batch({std::size_t(E), std::size_t(obs_dim)});
  Tensor state_batch({std::size_t(E), std::size_t(state_dim)});
  std::vector<HierAction> actions;

  for (int h = 0; h < H; ++h) {
    parallel_for(E, cfg_.num_threads, [&](int e) {
      const auto op = envs_[std::size_t(e)].observe(estimator_fn);
      std::copy(op.actor.begin(), op.actor.end(), obs_batch.data() + std::size_t(e) * std::size_t(obs_dim));
      std::copy(op.full.begin(), op.full.end(),
                state_batch.data() + std::size_t(e) * std::size_t(state_dim));
      const int i = buf.index(e, h);
      std::copy(op.actor.begin(), op.actor.end(),
                buf.obs.begin() + std::size_t(i) * std::size_t(obs_dim));
      std::copy(op.full.begin(), op.full.end(),
                buf.state.begin() + std::size_t(i) * std::size_t(state_dim));
      const auto& hist = envs_[std::size_t(e)].feature_history();
      auto dst = buf.est_input.begin() + std::size_t(i) * std::size_t(est_dim);
      for (const auto& feat : hist) dst = std::copy(feat.begin(), feat.end(), dst);
    });

    actions = sample_actions(params_, obs_batch, sampler_rngs_);
    const Tensor values = critic_values(params_, state_batch);

    parallel_for(E, cfg_.num_threads, [&](int e) {
      const int i = buf.index(e, h);
      const HierAction& a = actions[std::size_t(e)];
      buf.skill[std::size_t(i)] = a.skill;
      std::copy(a.command.begin(), a.command.end(),
                buf.command.begin() + std::size_t(i) * std::size_t(C));
      buf.old_logp_skill[std::size_t(i)] = a.log_prob_skill;
      std::copy(a.log_prob_command.begin(), a.log_prob_command.end(),
                buf.old_logp_cmd.begin() + std::size_t(i) * std::size_t(K));
      std::copy(a.focus_weights.begin(), a.focus_weights.end(),
                buf.old_weights.begin() + std::size_t(i) * std::size_t(K));
      buf.value[std::size_t(i)] = values[std::size_t(e)];

      const auto res = envs_[std::size_t(e)].high_level_step(a, env_rngs_[std::size_t(e)]);
      buf.reward[std::size_t(i)] = res.reward;
      buf.done[std::size_t(i)] = res.done ? 1 : 0;
      auto& acc = accums_[std::size_t(e)];
      acc.reward_sum += res.reward;
      acc.kernel_sum += res.breakdown.ball_velocity_error;
      acc.steps += 1;
      if (res.done) {
        const WorldState& s = envs_[std::size_t(e)].state();
        EpisodeStats stats;
        stats.kernel_mean = acc.kernel_sum / double(acc.steps);
        const double cn = std::hypot(s.cmd_x, s.cmd_y);
        stats.ball_disp_along_cmd =
            cn > 1e-9 ? ((s.bx - acc.ball_sx) * s.cmd_x + (s.by - acc.ball_sy) * s.cmd_y) / cn
                      : 0.0;
        stats.final_robot_ball_dist = std::hypot(s.bx - s.px, s.by - s.py);
        stats.cell_x = s.cmd_cell_x;
        stats.cell_y = s.cmd_cell_y;
        stats.difficulty = s.difficulty;
        completions[std::size_t(e)].push_back(
            {h, acc.reward_sum, acc.steps, evaluate_gates(stats, cur_cfg_)});
        reset_env(e);
      }
    });
  }

  parallel_for(E, cfg_.num_threads, [&](int e) {
    const auto op = envs_[std::size_t(e)].observe(estimator_fn);
    std::copy(op.full.begin(), op.full.end(),
              state_batch.data() + std::size_t(e) * std::size_t(state_dim));
  });
  const Tensor boot = critic_values(params_, state_batch);
  for (int e = 0; e < E; ++e) buf.bootstrap[std::size_t(e)] = boot[std::size_t(e)];

  compute_advantages(buf, algo_cfg_.gamma, algo_cfg_.gae_lambda);
  const UpdateStats stats = update(params_, rl_opt_, buf, algo_cfg_, update_rng_);
  const double est_loss = train_estimator(buf);

  // Curriculum updates in completion order (step, then env index).
  std::vector<std::size_t> next(std::size_t(E), 0);
  for (int h = 0; h < H; ++h)
    for (int e = 0; e < E; ++e) {
      auto& list = completions[std::size_t(e)];
      auto& n = next[std::size_t(e)];
      while (n < list.size() && list[n].step == h) {
        curriculum_update(grid_, list[n].outcome);
        ++n;
      }
    }

  MetricsRecord rec;
  rec.iteration = iteration_;
  long episodes = 0;
  double reward_sum = 0, length_sum = 0;
  for (const auto& list : completions)
    for (const auto& c : list) {
      ++episodes;
      reward_sum += c.reward;
      length_sum += c.length;
    }
  rec.episodes_completed = episodes;
  rec.mean_reward = episodes > 0 ? reward_sum / double(episodes) : 0.0;
  rec.mean_episode_length = episodes > 0 ? length_sum / double(episodes) : 0.0;
  rec.surrogate_loss = stats.surrogate_loss;
  rec.value_loss = stats.value_loss;
  rec.entropy = stats.entropy;
  rec.clip_fraction = stats.clip_fraction;
  rec.mean_ratio = stats.mean_ratio;
  rec.grad_norm = stats.grad_norm;
  rec.estimator_loss = est_loss;
  std::array<long, 4> counts{};
  for (int sk : buf.skill) counts[std::size_t(sk)] += 1;
  for (std::size_t k = 0; k < 4; ++k)
    rec.skill_usage[k] = double(counts[k]) / double(buf.size());
  rec.curriculum_command_unlocked = grid_.command_unlocked_fraction();
  rec.curriculum_difficulty_unlocked = grid_.difficulty_unlocked_fraction();

  ++iteration_;
  return rec;
}

double Trainer::train_estimator(const RolloutBuffer& buf) {
  const int N = buf.size();
  const int est_dim = params_.cfg.estimator_input_dim();
  const int out_dim = params_.cfg.estimator_output_dim;
  const int obs_dim = params_.cfg.obs_dim;
  std::vector<int> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = N - 1; i > 0; --i) {
    const int j = int(update_rng_.uniform_index(uint64_t(i + 1)));
    std::swap(perm[std::size_t(i)], perm[std::size_t(j)]);
  }
  const int M = std::max(1, cfg_.estimator_minibatches);
  double loss_acc = 0;
  int count = 0;
  for (int m = 0; m < M; ++m) {
    const int lo = int(std::size_t(m) * std::size_t(N) / std::size_t(M));
    const int hi = int(std::size_t(m + 1) * std::size_t(N) / std::size_t(M));
    if (hi <= lo) continue;
    Tensor in({std::size_t(hi - lo), std::size_t(est_dim)});
    Tensor tgt({std::size_t(hi - lo), std::size_t(out_dim)});
    for (int r = lo; r < hi; ++r) {
      const std::size_t t = std::size_t(perm[std::size_t(r)]);
      std::copy_n(buf.est_input.data() + t * std::size_t(est_dim), std::size_t(est_dim),
                  in.data() + std::size_t(r - lo) * std::size_t(est_dim));
      // Privileged block sits at the tail of the full state.
      std::copy_n(buf.state.data() + t * std::size_t(buf.state_dim) + std::size_t(obs_dim),
                  std::size_t(out_dim), tgt.data() + std::size_t(r - lo) * std::size_t(out_dim));
    }
    loss_acc += estimator_update(params_, in, tgt, est_opt_);
    ++count;
  }
  return count > 0 ? loss_acc / double(count) : 0.0;
}

Checkpoint Trainer::snapshot() const {
  Checkpoint c;
  c.config_text = serialize_config(cfg_);
  c.config_hash = config_hash(cfg_);
  c.iteration = uint64_t(iteration_);
  auto& self = const_cast<Trainer&>(*this);
  c.params = copy_named(self.params_.all_params());
  c.rl_opt = adam_blob(rl_opt_, self.params_.rl_params());
  c.est_opt = adam_blob(est_opt_, self.params_.estimator_params());
  c.grid_cells_per_axis = grid_.cells_per_axis;
  c.grid_cmd_weight = grid_.cmd_weight;
  c.grid_level_weight = grid_.level_weight;
  for (int e = 0; e < cfg_.num_envs; ++e) {
    c.rng_streams.emplace_back("env/" + std::to_string(e), env_rngs_[std::size_t(e)].state());
    c.rng_streams.emplace_back("sampler/" + std::to_string(e),
                               sampler_rngs_[std::size_t(e)].state());
  }
  c.rng_streams.emplace_back("update", update_rng_.state());

  for (int e = 0; e < cfg_.num_envs; ++e) {
    const WorldState& s = envs_[std::size_t(e)].state();
    const auto& acc = accums_[std::size_t(e)];
    std::vector<double> b = {s.px, s.py, s.heading, s.vx, s.vy, s.bx, s.by, s.bvx, s.bvy,
                             double(s.step), s.cmd_x, s.cmd_y, double(s.difficulty),
                             double(s.cmd_cell_x), double(s.cmd_cell_y), double(s.last_skill)};
    b.push_back(double(s.skill_history.size()));
    for (int sk : s.skill_history) b.push_back(double(sk));
    b.push_back(double(s.last_command.size()));
    b.insert(b.end(), s.last_command.begin(), s.last_command.end());
    b.push_back(acc.reward_sum);
    b.push_back(acc.kernel_sum);
    b.push_back(double(acc.steps));
    b.push_back(acc.ball_sx);
    b.push_back(acc.ball_sy);
    const auto& hist = envs_[std::size_t(e)].feature_history();
    b.push_back(double(hist.size()));
    b.push_back(hist.empty() ? 0.0 : double(hist.front().size()));
    for (const auto& feat : hist) b.insert(b.end(), feat.begin(), feat.end());
    c.env_blobs.push_back(std::move(b));
  }
  return c;
}

void Trainer::save(const std::string& path) const { save_checkpoint(snapshot(), path); }

Trainer Trainer::restore(const Checkpoint& ckpt, const RunConfig& cfg) {
  RunConfig stored = parse_config_text(ckpt.config_text);
  stored.iterations = cfg.iterations;
  stored.out_dir = cfg.out_dir;
  stored.checkpoint_every = cfg.checkpoint_every;
  stored.num_threads = cfg.num_threads;
  stored.log_every = cfg.log_every;

  Trainer t;
  t.build(stored);
  t.iteration_ = long(ckpt.iteration);
  apply_named_params(t.params_, ckpt.params);
  restore_adam(t.rl_opt_, ckpt.rl_opt, t.params_.rl_params());
  restore_adam(t.est_opt_, ckpt.est_opt, t.params_.estimator_params());
  if (ckpt.grid_cells_per_axis != t.grid_.cells_per_axis ||
      ckpt.grid_cmd_weight.size() != t.grid_.cmd_weight.size() ||
      ckpt.grid_level_weight.size() != t.grid_.level_weight.size())
    throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                          "checkpoint: curriculum grid dimensions do not match the config");
  t.grid_.cmd_weight = ckpt.grid_cmd_weight;
  t.grid_.level_weight = ckpt.grid_level_weight;

  std::map<std::string, std::array<uint64_t, 4>> streams(ckpt.rng_streams.begin(),
                                                         ckpt.rng_streams.end());
  const auto want = [&](const std::string& name) {
    const auto it = streams.find(name);
    if (it == streams.end())
      throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint: missing rng stream " + name);
    return it->second;
  };
  for (int e = 0; e < stored.num_envs; ++e) {
    t.env_rngs_[std::size_t(e)].set_state(want("env/" + std::to_string(e)));
    t.sampler_rngs_[std::size_t(e)].set_state(want("sampler/" + std::to_string(e)));
  }
  t.update_rng_.set_state(want("update"));

  if (int(ckpt.env_blobs.size()) != stored.num_envs)
    throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint: env state count mismatch");
  for (int e = 0; e < stored.num_envs; ++e) {
    const auto& b = ckpt.env_blobs[std::size_t(e)];
    std::size_t i = 0;
    const auto take = [&]() {
      if (i >= b.size())
        throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint: short env blob");
      return b[i++];
    };
    WorldState s;
    s.px = take();
    s.py = take();
    s.heading = take();
    s.vx = take();
    s.vy = take();
    s.bx = take();
    s.by = take();
    s.bvx = take();
    s.bvy = take();
    s.step = int(take());
    s.cmd_x = take();
    s.cmd_y = take();
    s.difficulty = int(take());
    s.cmd_cell_x = int(take());
    s.cmd_cell_y = int(take());
    s.last_skill = int(take());
    const int nhist = int(take());
    for (int k = 0; k < nhist; ++k) s.skill_history.push_back(int(take()));
    const int ncmd = int(take());
    for (int k = 0; k < ncmd; ++k) s.last_command.push_back(take());
    auto& acc = t.accums_[std::size_t(e)];
    acc.reward_sum = take();
    acc.kernel_sum = take();
    acc.steps = int(take());
    acc.ball_sx = take();
    acc.ball_sy = take();
    const int nfeat = int(take());
    const int featdim = int(take());
    std::deque<std::vector<double>> hist;
    for (int k = 0; k < nfeat; ++k) {
      std::vector<double> feat(static_cast<std::size_t>(featdim));
      for (auto& v : feat) v = take();
      hist.push_back(std::move(feat));
    }
    auto& env = t.envs_[std::size_t(e)];
    env.rebuild_zones(s.difficulty);
    env.mutable_state() = std::move(s);
    env.restore_feature_history(std::move(hist));
  }
  return t;
}

void train(const RunConfig& cfg, const std::optional<std::string>& resume_from) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  if (!fs::is_directory(cfg.out_dir))
    throw ConfigError("train: output directory '" + cfg.out_dir + "' is not writable");

  Trainer trainer =
      resume_from ? Trainer::restore(load_checkpoint(*resume_from), cfg) : Trainer::make(cfg);
  MetricsWriter metrics(cfg.out_dir + "/metrics.jsonl", trainer.config());

  const auto t0 = std::chrono::steady_clock::now();
  while (trainer.iteration() < cfg.iterations) {
    MetricsRecord rec;
    try {
      rec = trainer.run_iteration();
    } catch (const NonFiniteError&) {
      trainer.save(cfg.out_dir + "/abort.ckpt");
      throw;
    }
    metrics.append(rec);
    if (cfg.log_every > 0 &&
        (rec.iteration % cfg.log_every == 0 || trainer.iteration() == cfg.iterations)) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("iter %ld reward %.3f eplen %.1f episodes %ld entropy %.3f clip %.3f wall %.1fs\n",
                  rec.iteration, rec.mean_reward, rec.mean_episode_length, rec.episodes_completed,
                  rec.entropy, rec.clip_fraction, wall);
      std::fflush(stdout);
    }
    if (cfg.checkpoint_every > 0 && trainer.iteration() % cfg.checkpoint_every == 0 &&
        trainer.iteration() < cfg.iterations)
      trainer.save(cfg.out_dir + "/iter_" + std::to_string(trainer.iteration()) + ".ckpt");
  }
  trainer.save(cfg.out_dir + "/final.ckpt");
}

namespace {

ordered_json breakdown_json(const RewardBreakdown& b) {
  ordered_json j;
  j["robot_ball_distance"] = b.robot_ball_distance;
  j["yaw_alignment"] = b.yaw_alignment;
  j["consistent_skill_index"] = b.consistent_skill_index;
  j["change_skill_index"] = b.change_skill_index;
  j["ball_velocity_norm"] = b.ball_velocity_norm;
  j["ball_velocity_angle"] = b.ball_velocity_angle;
  j["ball_velocity_error"] = b.ball_velocity_error;
  j["dribbling_near_ball"] = b.dribbling_near_ball;
  return j;
}

}  // namespace

std::string eval_summary_to_json(const EvalSummary& s) {
  ordered_json j;
  j["episodes"] = s.episodes;
  j["deterministic"] = s.deterministic;
  if (s.episodes > 0) {
    j["mean_reward"] = s.mean_reward;
    j["mean_episode_length"] = s.mean_episode_length;
  } else {
    j["mean_reward"] = nullptr;  // no data
    j["mean_episode_length"] = nullptr;
  }
  ordered_json usage;
  for (int z = 0; z < kNumZoneKinds; ++z) {
    const auto name = to_string(ZoneKind(z));
    if (s.usage.present[std::size_t(z)]) {
      usage[name] = s.usage.freq[std::size_t(z)];
    } else {
      usage[name] = nullptr;
    }
  }
  j["skill_usage"] = usage;
  ordered_json completion;
  for (int z = 0; z < kNumZoneKinds; ++z) {
    const auto name = to_string(ZoneKind(z));
    if (s.episodes_by_start_zone[std::size_t(z)] > 0)
      completion[name] = s.completion_by_start_zone[std::size_t(z)];
    else
      completion[name] = nullptr;
  }
  j["completion_by_start_zone"] = completion;
  return j.dump(2);
}

EvalSummary evaluate(const std::string& checkpoint_path, int n_episodes, bool deterministic,
                     uint64_t seed, const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const RunConfig cfg = parse_config_text(ckpt.config_text);
  const auto policy_cfg = make_policy_config(cfg);
  Rng dummy(0);
  PolicyParams params = PolicyParams::init(policy_cfg, dummy);
  apply_named_params(params, ckpt.params);
  CurriculumGrid grid = init_grid(make_curriculum_config(cfg));
  if (ckpt.grid_cmd_weight.size() == grid.cmd_weight.size() &&
      ckpt.grid_level_weight.size() == grid.level_weight.size()) {
    grid.cmd_weight = ckpt.grid_cmd_weight;
    grid.level_weight = ckpt.grid_level_weight;
  }

  DribbleWorld env{make_world_config(cfg)};
  Rng env_rng = Rng::stream(seed, "eval/env");
  Rng sampler = Rng::stream(seed, "eval/sampler");
  const auto estimator_fn = [&](std::span<const std::vector<double>> hist) {
    return estimator_forward(params, hist);
  };

  std::ofstream traj;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    traj.open(out_dir + "/trajectories.jsonl", std::ios::trunc);
  }

  EvalSummary summary;
  summary.deterministic = deterministic;
  std::vector<std::pair<ZoneKind, int>> annotated;
  double reward_sum = 0, length_sum = 0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    const auto cs = curriculum_sample(grid, env_rng);
    env.reset(cs.cmd_x, cs.cmd_y, cs.difficulty, cs.cell_x, cs.cell_y, env_rng);
    const ZoneKind start_zone = env.zone_kind_at(env.state().px);
    summary.episodes_by_start_zone[std::size_t(start_zone)] += 1;
    double ep_reward = 0;
    int steps = 0;
    bool done = false;
    bool timed_out = false;
    while (!done) {
      const auto op = env.observe(estimator_fn);
      const HierAction a =
          deterministic ? greedy_action(params, op.actor) : sample_action(params, op.actor, sampler);
      const ZoneKind zone = env.zone_kind_at(env.state().px);
      const auto res = env.high_level_step(a, env_rng);
      annotated.push_back({zone, a.skill});
      ep_reward += res.reward;
      ++steps;
      done = res.done;
      timed_out = env.state().step >= cfg.episode_steps;
      if (traj.is_open()) {
        const WorldState& s = env.state();
        ordered_json j;
        j["episode"] = ep;
        j["t"] = s.step;
        j["zone"] = to_string(zone);
        j["px"] = s.px;
        j["py"] = s.py;
        j["heading"] = s.heading;
        j["bx"] = s.bx;
        j["by"] = s.by;
        j["bvx"] = s.bvx;
        j["bvy"] = s.bvy;
        j["skill"] = a.skill;
        j["command"] = a.command;
        j["reward"] = res.reward;
        j["terms"] = breakdown_json(res.breakdown);
        traj << j.dump() << "\n";
      }
    }
    if (timed_out) summary.completion_by_start_zone[std::size_t(start_zone)] += 1.0;
    reward_sum += ep_reward;
    length_sum += steps;
  }
  summary.episodes = n_episodes;
  if (n_episodes > 0) {
    summary.mean_reward = reward_sum / n_episodes;
    summary.mean_episode_length = length_sum / n_episodes;
  }
  for (int z = 0; z < kNumZoneKinds; ++z)
    if (summary.episodes_by_start_zone[std::size_t(z)] > 0)
      summary.completion_by_start_zone[std::size_t(z)] /=
          double(summary.episodes_by_start_zone[std::size_t(z)]);
  summary.usage = skill_usage_report(annotated);

  if (!out_dir.empty()) {
    std::ofstream sum(out_dir + "/eval_summary.json", std::ios::trunc);
    sum << eval_summary_to_json(summary) << "\n";
  }
  return summary;
}

}  // namespace dsfpo
