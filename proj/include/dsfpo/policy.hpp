#pragma once
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dsfpo/optimizer.hpp"
#include "dsfpo/rng.hpp"
#include "dsfpo/tape.hpp"
#include "dsfpo/tensor.hpp"

namespace dsfpo {

// Which contiguous slice of the command vector each skill consumes. Skills
// sharing a slice form a category (dribbling = dims {0,1}, locomotion =
// dims {2,3,4} in the default four-skill setup).
struct SkillLayout {
  int num_skills = 4;
  int command_dim = 5;
  std::vector<std::pair<int, int>> command_range = {{0, 2}, {0, 2}, {2, 3}, {2, 3}};

  // Distinct (start,len) slices in first-appearance order.
  std::vector<std::pair<int, int>> categories() const;
  // Index into categories() for each skill.
  std::vector<int> skill_category() const;
  void validate() const;
};

struct PolicyConfig {
  int obs_dim = 0;
  int state_dim = 0;
  std::vector<int> sfe_widths = {512, 256, 128};
  std::vector<int> critic_widths = {128, 128};
  std::vector<int> estimator_widths = {128, 128};
  int estimator_window = 5;
  int estimator_step_dim = 0;   // per-step feature size
  int estimator_output_dim = 6;
  SkillLayout skills;
  double init_std = 0.5;

  int estimator_input_dim() const { return estimator_window * estimator_step_dim; }
};

// One high-level action with everything the update later needs recorded at
// collection time: per-head log-probabilities and the skill focus weights.
struct HierAction {
  int skill = 0;                             // 0-based
  std::vector<double> command;               // unclipped sample, command_dim
  double log_prob_skill = 0.0;
  std::vector<double> log_prob_command;      // per skill, num_skills
  std::vector<double> focus_weights;         // softmax simplex, num_skills
};

// All learnable tensors. A PolicyParams value is an immutable snapshot during
// rollout collection; updates mutate it between collections.
struct PolicyParams {
  PolicyConfig cfg;
  std::vector<Tensor> sfe_w, sfe_b;
  Tensor index_w, index_b;
  Tensor cmd_w, cmd_b;
  Tensor log_std;
  std::vector<Tensor> critic_w, critic_b;
  std::vector<Tensor> est_w, est_b;

  static PolicyParams init(const PolicyConfig& cfg, Rng& rng);

  // Fixed-order named views. rl_params() = actor + critic (what the RL update
  // touches); the estimator group is trained only by its supervised step.
  std::vector<ParamRef> rl_params();
  std::vector<ParamRef> actor_params();
  std::vector<ParamRef> estimator_params();
  std::vector<ParamRef> all_params();
};

// Tape handles for the actor parameters, plus the forward outputs.
struct ActorGraphRefs {
  std::vector<Var> sfe_w, sfe_b;
  Var index_w, index_b, cmd_w, cmd_b, log_std;
};
struct ActorGraphOut {
  Var features;    // SFE output
  Var logits;      // index head, pre-softmax
  Var log_probs;   // log_softmax(logits), [n,K]
  Var weights;     // exp(log_probs), [n,K]
  Var mean;        // tanh(cmd head), [n,command_dim]
};
struct CriticGraphRefs {
  std::vector<Var> w, b;
};

ActorGraphRefs register_actor(Tape& tape, const PolicyParams& p);
ActorGraphOut actor_graph(Tape& tape, const ActorGraphRefs& refs, Var obs);
CriticGraphRefs register_critic(Tape& tape, const PolicyParams& p);
Var critic_graph(Tape& tape, const CriticGraphRefs& refs, Var state);

// Forward outputs as plain tensors (one row per observation).
struct ActorForward {
  Tensor logits;      // [n,K] (pre-softmax)
  Tensor log_probs;   // [n,K]
  Tensor weights;     // [n,K]
  Tensor mean;        // [n,command_dim]
};

// Throws NonFiniteError on a non-finite observation.
ActorForward actor_forward(const PolicyParams& p, const Tensor& obs_batch);

// Samples the discrete head and all command dims; fills the per-skill command
// log-probabilities over each skill's own slice.
HierAction sample_action(const PolicyParams& p, std::span<const double> obs, Rng& rng);
std::vector<HierAction> sample_actions(const PolicyParams& p, const Tensor& obs_batch,
                                       std::span<Rng> rngs);
// Greedy variant: argmax skill, mean command, no rng consumption.
HierAction greedy_action(const PolicyParams& p, std::span<const double> obs);

struct ActionLogProbs {
  double log_prob_skill = 0.0;
  std::vector<double> log_prob_command;  // per skill
};
ActionLogProbs log_prob(const PolicyParams& p, std::span<const double> obs,
                        const HierAction& action);

// Per-skill command log-density given forward outputs; shared by sampling and
// log_prob so stored and recomputed values are bit-identical.
std::vector<double> command_log_probs(const PolicyConfig& cfg, const double* mean_row,
                                      const Tensor& log_std, std::span<const double> command);

double critic_value(const PolicyParams& p, std::span<const double> state);
Tensor critic_values(const PolicyParams& p, const Tensor& state_batch);

// Supervised context estimator. history holds per-step feature vectors,
// oldest first; fewer than cfg.estimator_window entries is an error.
std::vector<double> estimator_forward(const PolicyParams& p,
                                      std::span<const std::vector<double>> history);
std::vector<double> estimator_forward_flat(const PolicyParams& p,
                                           std::span<const double> flat_window);
// One gradient step on the MSE; touches only estimator weights. Returns the
// pre-step loss.
double estimator_update(PolicyParams& p, const Tensor& inputs, const Tensor& targets,
                        Adam& optimizer);

}  // namespace dsfpo
