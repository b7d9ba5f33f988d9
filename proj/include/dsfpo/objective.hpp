#pragma once
#include <span>
#include <string>
#include <vector>

#include "dsfpo/optimizer.hpp"
#include "dsfpo/policy.hpp"
#include "dsfpo/rollout.hpp"
#include "dsfpo/rng.hpp"

namespace dsfpo {

enum class Algorithm { dsf_po, standard_ppo };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct DsfPoConfig {
  double clip_epsilon = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int epochs = 5;
  int minibatches = 4;
  double entropy_coef = 0.005;
  double value_coef = 1.0;
  double learning_rate = 3e-4;
  double max_grad_norm = 1.0;
  Algorithm algorithm = Algorithm::dsf_po;

  void validate() const;
};

// Collection-time record of the behavior policy at one transition.
struct OldRecord {
  int skill = 0;
  std::span<const double> command;        // command_dim
  double logp_skill = 0.0;
  std::span<const double> logp_cmd;       // per skill
  std::span<const double> weights;        // per skill
};

// log r^DSF': skill log-ratio plus, for every skill whose command slice is the
// one the executed skill consumed, that skill's focus weight (under the new
// parameters) times its command log-ratio.
double dsf_log_ratio(const PolicyParams& new_params, const OldRecord& old,
                     std::span<const double> obs);

// Joint log-ratio of the plain hybrid density: skill term plus the Gaussian
// log-ratio over every command dim with unit exponents.
double standard_ppo_log_ratio(const PolicyParams& new_params, const OldRecord& old,
                              std::span<const double> obs);

// Mean clipped-minimum objective over the batch, negated for minimization.
double surrogate_loss(std::span<const double> log_ratios, std::span<const double> advantages,
                      double clip_epsilon);

// Entropy of the hybrid action distribution at one observation:
// H(Categorical(w)) + sum_k w_k * H(N over skill k's command slice).
double entropy_bonus(const PolicyParams& params, std::span<const double> obs);

struct UpdateStats {
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double surrogate_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;  // pre-clip, averaged over minibatch updates
  int minibatch_updates = 0;
};

// Multi-epoch clipped-surrogate update over shuffled minibatches. Touches
// actor and critic weights only; the estimator group is left untouched.
// Throws NonFiniteError with diagnostics if the loss goes non-finite.
UpdateStats update(PolicyParams& params, Adam& optimizer, const RolloutBuffer& buffer,
                   const DsfPoConfig& cfg, Rng& rng);

// Gradient of the mean unclipped surrogate -E[r * adv] at the current
// parameters, in rl_params() order. Used by the gradient-correctness checks.
std::vector<Tensor> unclipped_surrogate_gradient(PolicyParams& params, const RolloutBuffer& buffer,
                                                 std::span<const int> sample_indices,
                                                 Algorithm algorithm);
// The matching loss value for finite differencing.
double unclipped_surrogate_value(const PolicyParams& params, const RolloutBuffer& buffer,
                                 std::span<const int> sample_indices, Algorithm algorithm);

}  // namespace dsfpo
