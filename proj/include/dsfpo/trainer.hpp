#pragma once
#include <optional>
#include <string>
#include <vector>

#include "dsfpo/checkpoint.hpp"
#include "dsfpo/config.hpp"
#include "dsfpo/curriculum.hpp"
#include "dsfpo/metrics.hpp"
#include "dsfpo/objective.hpp"
#include "dsfpo/policy.hpp"
#include "dsfpo/world.hpp"

namespace dsfpo {

// Seeded end-to-end training state: policy, optimizers, curriculum and the
// parallel environment bank. (config, seed) fully determines the run; worker
// threads never share mutable state, so results do not depend on num_threads.
class Trainer {
 public:
  static Trainer make(const RunConfig& cfg);
  // Rebuilds a trainer mid-run from a checkpoint. iterations and out_dir are
  // taken from `cfg`; everything else must match the checkpoint's config.
  static Trainer restore(const Checkpoint& ckpt, const RunConfig& cfg);

  // Collect -> GAE -> update -> estimator step -> curriculum updates.
  MetricsRecord run_iteration();

  Checkpoint snapshot() const;
  void save(const std::string& path) const;

  long iteration() const { return iteration_; }
  const RunConfig& config() const { return cfg_; }
  PolicyParams& params() { return params_; }
  const CurriculumGrid& grid() const { return grid_; }

 private:
  Trainer() = default;
  void build(const RunConfig& cfg);
  void reset_env(int e);
  double train_estimator(const RolloutBuffer& buf);

  struct EpisodeAccum {
    double reward_sum = 0;
    double kernel_sum = 0;
    int steps = 0;
    double ball_sx = 0, ball_sy = 0;
  };

  RunConfig cfg_;
  DsfPoConfig algo_cfg_;
  CurriculumConfig cur_cfg_;
  PolicyParams params_;
  Adam rl_opt_, est_opt_;
  CurriculumGrid grid_;
  std::vector<DribbleWorld> envs_;
  std::vector<Rng> env_rngs_, sampler_rngs_;
  Rng update_rng_;
  std::vector<EpisodeAccum> accums_;
  long iteration_ = 0;
};

// Full training loop: metrics log, periodic checkpoints, final checkpoint.
// On a non-finite loss the current state is checkpointed before rethrowing.
void train(const RunConfig& cfg, const std::optional<std::string>& resume_from = {});

// Loads a checkpoint's parameter tensors into freshly shaped params; throws
// CheckpointError{shape_mismatch} naming the offending tensor.
void apply_named_params(PolicyParams& params,
                        const std::vector<std::pair<std::string, Tensor>>& named);

struct EvalSummary {
  int episodes = 0;
  bool deterministic = false;
  double mean_reward = 0.0;
  double mean_episode_length = 0.0;
  SkillUsage usage;
  std::array<long, kNumZoneKinds> episodes_by_start_zone{};
  std::array<double, kNumZoneKinds> completion_by_start_zone{};  // reached timeout
};

// Runs n_episodes under a loaded checkpoint. Deterministic mode takes the
// argmax skill and the mean command. Writes trajectories.jsonl and
// eval_summary.json into out_dir when it is non-empty.
EvalSummary evaluate(const std::string& checkpoint_path, int n_episodes, bool deterministic,
                     uint64_t seed, const std::string& out_dir);

std::string eval_summary_to_json(const EvalSummary& s);

}  // namespace dsfpo
