#pragma once
// Shared helpers for the unit and acceptance suites: synthetic policies and
// rollout buffers with collection-time records produced by the real sampling
// path.

#include <vector>

#include "dsfpo/policy.hpp"
#include "dsfpo/rng.hpp"
#include "dsfpo/rollout.hpp"

namespace dsfpo::testutil {

inline PolicyConfig tiny_config(int obs_dim = 8, int state_dim = 11,
                                std::vector<int> sfe = {16, 16}) {
  PolicyConfig cfg;
  cfg.obs_dim = obs_dim;
  cfg.state_dim = state_dim;
  cfg.sfe_widths = std::move(sfe);
  cfg.critic_widths = {16, 16};
  cfg.estimator_widths = {8, 8};
  cfg.estimator_window = 2;
  cfg.estimator_step_dim = 3;
  return cfg;
}

inline PolicyConfig single_skill_config(int obs_dim = 8, int state_dim = 11) {
  PolicyConfig cfg = tiny_config(obs_dim, state_dim);
  cfg.skills.num_skills = 1;
  cfg.skills.command_dim = 5;
  cfg.skills.command_range = {{0, 5}};
  return cfg;
}

// Buffer with random observations whose actions, log-probs, weights and
// values come from sampling `params` -- i.e. old records are genuinely the
// collection-time policy.
inline RolloutBuffer synth_buffer(PolicyParams& params, int num_envs, int horizon, Rng& rng,
                                  bool dribble_only = false) {
  const auto& cfg = params.cfg;
  RolloutBuffer b(num_envs, horizon, cfg.obs_dim, cfg.state_dim, cfg.estimator_input_dim(),
                  cfg.skills.num_skills, cfg.skills.command_dim);
  const int K = cfg.skills.num_skills;
  for (int e = 0; e < num_envs; ++e) {
    for (int t = 0; t < horizon; ++t) {
      const int i = b.index(e, t);
      std::vector<double> obs(std::size_t(cfg.obs_dim));
      for (auto& x : obs) x = rng.uniform(-1.5, 1.5);
      std::vector<double> state(std::size_t(cfg.state_dim));
      for (auto& x : state) x = rng.uniform(-1.5, 1.5);
      HierAction a = sample_action(params, obs, rng);
      if (dribble_only && K == 4) {
        // Re-draw until a dribbling skill comes up, keeping the record honest.
        while (a.skill > 1) a = sample_action(params, obs, rng);
      }
      std::copy(obs.begin(), obs.end(), b.obs.begin() + std::size_t(i) * obs.size());
      std::copy(state.begin(), state.end(), b.state.begin() + std::size_t(i) * state.size());
      b.skill[std::size_t(i)] = a.skill;
      std::copy(a.command.begin(), a.command.end(),
                b.command.begin() + std::size_t(i) * std::size_t(cfg.skills.command_dim));
      b.old_logp_skill[std::size_t(i)] = a.log_prob_skill;
      std::copy(a.log_prob_command.begin(), a.log_prob_command.end(),
                b.old_logp_cmd.begin() + std::size_t(i) * std::size_t(K));
      std::copy(a.focus_weights.begin(), a.focus_weights.end(),
                b.old_weights.begin() + std::size_t(i) * std::size_t(K));
      b.reward[std::size_t(i)] = rng.uniform(-1.0, 1.0);
      b.done[std::size_t(i)] = (t + 1 == horizon) ? 0 : (rng.uniform() < 0.05 ? 1 : 0);
      b.value[std::size_t(i)] = rng.uniform(-1.0, 1.0);
    }
    b.bootstrap[std::size_t(e)] = rng.uniform(-1.0, 1.0);
  }
  return b;
}

inline OldRecord record_at(const RolloutBuffer& b, int i) {
  OldRecord r;
  r.skill = b.skill[std::size_t(i)];
  r.command = {b.command.data() + std::size_t(i) * std::size_t(b.command_dim),
               std::size_t(b.command_dim)};
  r.logp_skill = b.old_logp_skill[std::size_t(i)];
  r.logp_cmd = {b.old_logp_cmd.data() + std::size_t(i) * std::size_t(b.num_skills),
                std::size_t(b.num_skills)};
  r.weights = {b.old_weights.data() + std::size_t(i) * std::size_t(b.num_skills),
               std::size_t(b.num_skills)};
  return r;
}

inline std::span<const double> obs_at(const RolloutBuffer& b, int i) {
  return {b.obs.data() + std::size_t(i) * std::size_t(b.obs_dim), std::size_t(b.obs_dim)};
}

// Small random parameter jitter, e.g. to stand in for a few update steps.
inline void perturb(PolicyParams& p, double scale, Rng& rng) {
  for (auto ref : p.rl_params())
    for (std::size_t i = 0; i < ref.value->size(); ++i)
      (*ref.value)[i] += scale * rng.normal();
}

}  // namespace dsfpo::testutil
