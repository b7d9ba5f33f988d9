#include "dsfpo/rollout.hpp"

#include <cmath>

#include "dsfpo/errors.hpp"

namespace dsfpo {

RolloutBuffer::RolloutBuffer(int envs, int steps, int obs_d, int state_d, int est_d, int skills,
                             int cmd)
    : num_envs(envs),
      horizon(steps),
      obs_dim(obs_d),
      state_dim(state_d),
      est_dim(est_d),
      num_skills(skills),
      command_dim(cmd) {
  const std::size_t n = std::size_t(envs) * std::size_t(steps);
  obs.assign(n * std::size_t(obs_d), 0.0);
  state.assign(n * std::size_t(state_d), 0.0);
  est_input.assign(n * std::size_t(est_d), 0.0);
  skill.assign(n, 0);
  command.assign(n * std::size_t(cmd), 0.0);
  old_logp_skill.assign(n, 0.0);
  old_logp_cmd.assign(n * std::size_t(skills), 0.0);
  old_weights.assign(n * std::size_t(skills), 0.0);
  reward.assign(n, 0.0);
  done.assign(n, 0);
  value.assign(n, 0.0);
  bootstrap.assign(std::size_t(envs), 0.0);
  advantage.assign(n, 0.0);
  ret.assign(n, 0.0);
}

void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const uint8_t> dones, double bootstrap, double gamma, double lambda,
                 std::span<double> advantages, std::span<double> returns) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n || advantages.size() != n || returns.size() != n)
    throw ShapeError("compute_gae: array length mismatch");
  double gae = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_nonterminal = dones[i] ? 0.0 : 1.0;
    const double next_value = (i + 1 < n) ? values[i + 1] : bootstrap;
    const double delta = rewards[i] + gamma * next_value * next_nonterminal - values[i];
    gae = delta + gamma * lambda * next_nonterminal * gae;
    advantages[i] = gae;
    returns[i] = gae + values[i];
  }
}

void compute_advantages(RolloutBuffer& b, double gamma, double lambda) {
  const std::size_t h = std::size_t(b.horizon);
  for (int e = 0; e < b.num_envs; ++e) {
    const std::size_t off = std::size_t(e) * h;
    compute_gae({b.reward.data() + off, h}, {b.value.data() + off, h}, {b.done.data() + off, h},
                b.bootstrap[std::size_t(e)], gamma, lambda, {b.advantage.data() + off, h},
                {b.ret.data() + off, h});
  }
  // Whole-batch normalization; the returns stay raw for the value target.
  const std::size_t n = b.advantage.size();
  double mean = 0;
  for (double a : b.advantage) mean += a;
  mean /= double(n);
  double var = 0;
  for (double a : b.advantage) var += (a - mean) * (a - mean);
  const double std = std::sqrt(var / double(n));
  for (double& a : b.advantage) a = (a - mean) / (std + 1e-8);
  b.advantages_ready = true;
}

}  // namespace dsfpo
