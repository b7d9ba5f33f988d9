#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "dsfpo/policy.hpp"
#include "dsfpo/tensor.hpp"

namespace dsfpo {

// Fixed-horizon batch of transitions from num_envs environments, stored as
// flat arrays indexed by env * horizon + step. Old log-probabilities and
// focus weights are recorded at collection time and never recomputed.
struct RolloutBuffer {
  int num_envs = 0;
  int horizon = 0;
  int obs_dim = 0;
  int state_dim = 0;
  int est_dim = 0;
  int num_skills = 0;
  int command_dim = 0;

  std::vector<double> obs;             // [N, obs_dim]
  std::vector<double> state;           // [N, state_dim]
  std::vector<double> est_input;       // [N, est_dim]
  std::vector<int> skill;              // [N]
  std::vector<double> command;         // [N, command_dim]
  std::vector<double> old_logp_skill;  // [N]
  std::vector<double> old_logp_cmd;    // [N, num_skills]
  std::vector<double> old_weights;     // [N, num_skills]
  std::vector<double> reward;          // [N]
  std::vector<uint8_t> done;           // [N], 1 when the episode ended at this step
  std::vector<double> value;           // [N], V(s_t) at collection time
  std::vector<double> bootstrap;       // [num_envs], V of the state after the last step
  std::vector<double> advantage;       // [N]
  std::vector<double> ret;             // [N]
  bool advantages_ready = false;

  RolloutBuffer() = default;
  RolloutBuffer(int envs, int steps, int obs, int state, int est, int skills, int cmd);

  int size() const { return num_envs * horizon; }
  int index(int env, int step) const { return env * horizon + step; }
};

// GAE over one trajectory: adv[t] = sum_l (gamma*lambda)^l * delta_{t+l}
// with delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t and
// V_horizon = bootstrap. returns[t] = adv[t] + values[t].
// Throws ShapeError on length mismatch.
void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const uint8_t> dones, double bootstrap, double gamma, double lambda,
                 std::span<double> advantages, std::span<double> returns);

// Fills buffer.advantage / buffer.ret for every env and then normalizes the
// advantages to zero mean, unit std over the whole batch.
void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda);

}  // namespace dsfpo
