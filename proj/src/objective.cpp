#include "dsfpo/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dsfpo/errors.hpp"

namespace dsfpo {

namespace {
constexpr double kHalfLog2PiE = 1.4189385332046727418;  // 0.5 * ln(2*pi*e)
}

std::string to_string(Algorithm a) {
  return a == Algorithm::dsf_po ? "dsf_po" : "standard_ppo";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "dsf_po") return Algorithm::dsf_po;
  if (s == "standard_ppo") return Algorithm::standard_ppo;
  throw ConfigError("unknown algorithm '" + s + "' (expected dsf_po or standard_ppo)");
}

void DsfPoConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0))
    throw ConfigError("clip_epsilon must be in (0,1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must be in [0,1]");
  if (epochs <= 0 || minibatches <= 0) throw ConfigError("epochs and minibatches must be positive");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (max_grad_norm <= 0.0) throw ConfigError("max_grad_norm must be positive");
}

namespace {

void check_old_record(const OldRecord& old, const SkillLayout& sk, const char* who) {
  if (int(old.logp_cmd.size()) != sk.num_skills || int(old.weights.size()) != sk.num_skills ||
      int(old.command.size()) != sk.command_dim)
    throw ShapeError(std::string(who) + ": old record is missing fields (command " +
                     std::to_string(old.command.size()) + ", logp_cmd " +
                     std::to_string(old.logp_cmd.size()) + ", weights " +
                     std::to_string(old.weights.size()) + ")");
  if (old.skill < 0 || old.skill >= sk.num_skills)
    throw ShapeError(std::string(who) + ": skill index out of range");
}

}  // namespace

double dsf_log_ratio(const PolicyParams& new_params, const OldRecord& old,
                     std::span<const double> obs) {
  const SkillLayout& sk = new_params.cfg.skills;
  check_old_record(old, sk, "dsf_log_ratio");
  Tensor batch({1, obs.size()}, std::vector<double>(obs.begin(), obs.end()));
  const auto fwd = actor_forward(new_params, batch);
  const auto lp_new = command_log_probs(new_params.cfg, fwd.mean.data(), new_params.log_std,
                                        old.command);
  double log_r = fwd.log_probs[std::size_t(old.skill)] - old.logp_skill;
  const auto cat = sk.skill_category();
  for (int k = 0; k < sk.num_skills; ++k) {
    if (cat[std::size_t(k)] != cat[std::size_t(old.skill)]) continue;
    log_r += fwd.weights[std::size_t(k)] *
             (lp_new[std::size_t(k)] - old.logp_cmd[std::size_t(k)]);
  }
  return log_r;
}

double standard_ppo_log_ratio(const PolicyParams& new_params, const OldRecord& old,
                              std::span<const double> obs) {
  const SkillLayout& sk = new_params.cfg.skills;
  check_old_record(old, sk, "standard_ppo_log_ratio");
  Tensor batch({1, obs.size()}, std::vector<double>(obs.begin(), obs.end()));
  const auto fwd = actor_forward(new_params, batch);
  const auto lp_new = command_log_probs(new_params.cfg, fwd.mean.data(), new_params.log_std,
                                        old.command);
  double log_r = fwd.log_probs[std::size_t(old.skill)] - old.logp_skill;
  // One skill per distinct slice; the slices partition the command vector.
  const auto cats = sk.categories();
  const auto cat = sk.skill_category();
  for (std::size_t c = 0; c < cats.size(); ++c) {
    for (int k = 0; k < sk.num_skills; ++k) {
      if (cat[std::size_t(k)] == int(c)) {
        log_r += lp_new[std::size_t(k)] - old.logp_cmd[std::size_t(k)];
        break;
      }
    }
  }
  return log_r;
}

double surrogate_loss(std::span<const double> log_ratios, std::span<const double> advantages,
                      double clip_epsilon) {
  if (log_ratios.size() != advantages.size())
    throw ShapeError("surrogate_loss: array length mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < log_ratios.size(); ++i) {
    const double r = std::exp(log_ratios[i]);
    const double clipped = std::clamp(r, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    acc += std::min(r * advantages[i], clipped * advantages[i]);
  }
  return -acc / double(log_ratios.size());
}

double entropy_bonus(const PolicyParams& params, std::span<const double> obs) {
  const SkillLayout& sk = params.cfg.skills;
  Tensor batch({1, obs.size()}, std::vector<double>(obs.begin(), obs.end()));
  const auto fwd = actor_forward(params, batch);
  double h_cat = 0;
  for (int k = 0; k < sk.num_skills; ++k)
    h_cat -= fwd.weights[std::size_t(k)] * fwd.log_probs[std::size_t(k)];
  double h_gauss = 0;
  for (int k = 0; k < sk.num_skills; ++k) {
    const auto [start, len] = sk.command_range[std::size_t(k)];
    double hk = 0;
    for (int j = start; j < start + len; ++j) hk += kHalfLog2PiE + params.log_std[std::size_t(j)];
    h_gauss += fwd.weights[std::size_t(k)] * hk;
  }
  return h_cat + h_gauss;
}

namespace {

// Minibatch rows gathered into dense tensors, plus the per-category masks the
// ratio graph needs.
struct MinibatchData {
  std::size_t n = 0;
  Tensor obs, state;
  std::vector<int> skills;
  Tensor old_logp_skill;            // [n]
  Tensor advantages;                // [n]
  Tensor returns;                   // [n,1]
  std::vector<Tensor> cmd_cat;      // per category: [n, len]
  std::vector<Tensor> old_lp_cat;   // per category: [n]
  std::vector<Tensor> cat_mask;     // per category: [n], 1 if executed skill used it
  Tensor active_weight_mask;        // [n,K], 1 where cat(k) == cat(d_i)
};

MinibatchData gather_minibatch(const RolloutBuffer& b, const SkillLayout& sk,
                               std::span<const int> idx) {
  const auto cats = sk.categories();
  const auto skill_cat = sk.skill_category();
  const std::size_t n = idx.size();
  const std::size_t K = std::size_t(sk.num_skills);
  MinibatchData mb;
  mb.n = n;
  mb.obs = Tensor({n, std::size_t(b.obs_dim)});
  mb.state = Tensor({n, std::size_t(b.state_dim)});
  mb.skills.resize(n);
  mb.old_logp_skill = Tensor({n});
  mb.advantages = Tensor({n});
  mb.returns = Tensor({n, 1});
  mb.active_weight_mask = Tensor({n, K});
  for (std::size_t c = 0; c < cats.size(); ++c) {
    mb.cmd_cat.emplace_back(Tensor({n, std::size_t(cats[c].second)}));
    mb.old_lp_cat.emplace_back(Tensor({n}));
    mb.cat_mask.emplace_back(Tensor({n}));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = std::size_t(idx[i]);
    std::copy_n(b.obs.data() + t * std::size_t(b.obs_dim), std::size_t(b.obs_dim),
                mb.obs.data() + i * std::size_t(b.obs_dim));
    std::copy_n(b.state.data() + t * std::size_t(b.state_dim), std::size_t(b.state_dim),
                mb.state.data() + i * std::size_t(b.state_dim));
    const int d = b.skill[t];
    mb.skills[i] = d;
    mb.old_logp_skill[i] = b.old_logp_skill[t];
    mb.advantages[i] = b.advantage[t];
    mb.returns[i] = b.ret[t];
    const int dcat = skill_cat[std::size_t(d)];
    for (std::size_t k = 0; k < K; ++k)
      mb.active_weight_mask.at(i, k) = skill_cat[k] == dcat ? 1.0 : 0.0;
    for (std::size_t c = 0; c < cats.size(); ++c) {
      const auto [start, len] = cats[c];
      for (int j = 0; j < len; ++j)
        mb.cmd_cat[c].at(i, std::size_t(j)) =
            b.command[t * std::size_t(b.command_dim) + std::size_t(start + j)];
      // Per-skill stored values within a category are identical; take the
      // first member's.
      for (std::size_t k = 0; k < K; ++k)
        if (skill_cat[k] == int(c)) {
          mb.old_lp_cat[c][i] = b.old_logp_cmd[t * K + k];
          break;
        }
      mb.cat_mask[c][i] = (int(c) == dcat) ? 1.0 : 0.0;
    }
  }
  return mb;
}

struct RatioGraph {
  Var log_ratio;
  Var ratio;
};

RatioGraph ratio_graph(Tape& t, const ActorGraphRefs& refs, const ActorGraphOut& out,
                       const MinibatchData& mb, const SkillLayout& sk, Algorithm algo) {
  const auto cats = sk.categories();
  Var logp_d_new = t.gather(out.log_probs, mb.skills);
  Var base = t.sub(logp_d_new, t.constant(mb.old_logp_skill));

  std::vector<Var> dlp_cat;
  for (std::size_t c = 0; c < cats.size(); ++c) {
    const auto [start, len] = cats[c];
    Var mean_c = t.slice_cols(out.mean, start, len);
    Var lstd_c = t.slice_cols(refs.log_std, start, len);
    Var lp_new = t.gaussian_log_prob(mean_c, lstd_c, t.constant(mb.cmd_cat[c]));
    dlp_cat.push_back(t.sub(lp_new, t.constant(mb.old_lp_cat[c])));
  }

  Var delta;
  if (algo == Algorithm::dsf_po) {
    // Focus weights enter the exponent as values only (gradient stopped).
    Var w_stop = t.stop_gradient(out.weights);
    Var active_w = t.row_sum(t.mul(w_stop, t.constant(mb.active_weight_mask)));
    for (std::size_t c = 0; c < cats.size(); ++c) {
      Var masked = t.mul(t.constant(mb.cat_mask[c]), dlp_cat[c]);
      delta = c == 0 ? masked : t.add(delta, masked);
    }
    delta = t.mul(active_w, delta);
  } else {
    for (std::size_t c = 0; c < cats.size(); ++c)
      delta = c == 0 ? dlp_cat[c] : t.add(delta, dlp_cat[c]);
  }
  RatioGraph rg;
  rg.log_ratio = t.add(base, delta);
  rg.ratio = t.exp(rg.log_ratio);
  return rg;
}

Var entropy_graph(Tape& t, const ActorGraphRefs& refs, const ActorGraphOut& out,
                  const SkillLayout& sk) {
  Var ent_cat = t.neg(t.row_sum(t.mul(out.weights, out.log_probs)));
  // Membership matrix: entropy of skill k's Gaussian is the sum of per-dim
  // entropies over its slice.
  Tensor member({std::size_t(sk.num_skills), std::size_t(sk.command_dim)});
  for (int k = 0; k < sk.num_skills; ++k) {
    const auto [start, len] = sk.command_range[std::size_t(k)];
    for (int j = start; j < start + len; ++j) member.at(std::size_t(k), std::size_t(j)) = 1.0;
  }
  Var per_dim = t.add_scalar(refs.log_std, kHalfLog2PiE);
  Var per_skill = t.matmul(t.constant(member), per_dim);
  Var ent_gauss = t.matmul(out.weights, per_skill);
  return t.mean(t.add(ent_cat, ent_gauss));
}

std::vector<Tensor> collect_rl_grads(const Tape& t, const ActorGraphRefs& a,
                                     const CriticGraphRefs& c) {
  std::vector<Tensor> grads;
  for (std::size_t i = 0; i < a.sfe_w.size(); ++i) {
    grads.push_back(t.grad(a.sfe_w[i]));
    grads.push_back(t.grad(a.sfe_b[i]));
  }
  grads.push_back(t.grad(a.index_w));
  grads.push_back(t.grad(a.index_b));
  grads.push_back(t.grad(a.cmd_w));
  grads.push_back(t.grad(a.cmd_b));
  grads.push_back(t.grad(a.log_std));
  for (std::size_t i = 0; i < c.w.size(); ++i) {
    grads.push_back(t.grad(c.w[i]));
    grads.push_back(t.grad(c.b[i]));
  }
  return grads;
}

std::vector<Tensor> collect_actor_grads(const Tape& t, const ActorGraphRefs& a) {
  std::vector<Tensor> grads;
  for (std::size_t i = 0; i < a.sfe_w.size(); ++i) {
    grads.push_back(t.grad(a.sfe_w[i]));
    grads.push_back(t.grad(a.sfe_b[i]));
  }
  grads.push_back(t.grad(a.index_w));
  grads.push_back(t.grad(a.index_b));
  grads.push_back(t.grad(a.cmd_w));
  grads.push_back(t.grad(a.cmd_b));
  grads.push_back(t.grad(a.log_std));
  return grads;
}

}  // namespace

UpdateStats update(PolicyParams& params, Adam& optimizer, const RolloutBuffer& buffer,
                   const DsfPoConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!buffer.advantages_ready) throw ConfigError("update: buffer advantages not computed");
  const SkillLayout& sk = params.cfg.skills;
  if (buffer.num_skills != sk.num_skills || buffer.command_dim != sk.command_dim ||
      buffer.obs_dim != params.cfg.obs_dim || buffer.state_dim != params.cfg.state_dim)
    throw ShapeError("update: buffer layout does not match policy config");

  const int n_total = buffer.size();
  std::vector<int> indices(static_cast<std::size_t>(n_total));
  std::iota(indices.begin(), indices.end(), 0);

  UpdateStats stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the caller's stream.
    for (int i = n_total - 1; i > 0; --i) {
      const int j = int(rng.uniform_index(uint64_t(i + 1)));
      std::swap(indices[std::size_t(i)], indices[std::size_t(j)]);
    }
    for (int m = 0; m < cfg.minibatches; ++m) {
      const int lo = int(std::size_t(m) * std::size_t(n_total) / std::size_t(cfg.minibatches));
      const int hi = int(std::size_t(m + 1) * std::size_t(n_total) / std::size_t(cfg.minibatches));
      if (hi <= lo) continue;
      const auto mb =
          gather_minibatch(buffer, sk, {indices.data() + lo, std::size_t(hi - lo)});

      Tape tape;
      auto actor_refs = register_actor(tape, params);
      auto critic_refs = register_critic(tape, params);
      auto out = actor_graph(tape, actor_refs, tape.constant(mb.obs));
      auto rg = ratio_graph(tape, actor_refs, out, mb, sk, cfg.algorithm);

      Var adv = tape.constant(mb.advantages);
      Var clipped = tape.clip(rg.ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
      Var objective = tape.minimum(tape.mul(rg.ratio, adv), tape.mul(clipped, adv));
      Var surr = tape.neg(tape.mean(objective));

      Var v = critic_graph(tape, critic_refs, tape.constant(mb.state));
      Var vdiff = tape.sub(v, tape.constant(mb.returns));
      Var vloss = tape.mean(tape.mul(vdiff, vdiff));

      Var ent = entropy_graph(tape, actor_refs, out, sk);

      Var loss = tape.add(tape.add(surr, tape.scale(vloss, cfg.value_coef)),
                          tape.scale(ent, -cfg.entropy_coef));

      const double surr_v = tape.value(surr)[0];
      const double vloss_v = tape.value(vloss)[0];
      const double ent_v = tape.value(ent)[0];
      const double loss_v = tape.value(loss)[0];
      if (!std::isfinite(loss_v)) {
        std::ostringstream diag;
        diag << "non-finite loss at epoch " << epoch << " minibatch " << m << ": surrogate="
             << surr_v << " value=" << vloss_v << " entropy=" << ent_v << " after "
             << stats.minibatch_updates << " updates";
        throw NonFiniteError("update", diag.str());
      }

      tape.backward(loss);
      auto grads = collect_rl_grads(tape, actor_refs, critic_refs);
      const double pre_norm = clip_grad_norm(grads, cfg.max_grad_norm);
      auto group = params.rl_params();
      optimizer.step(group, grads);

      const Tensor& ratios = tape.value(rg.ratio);
      double ratio_sum = 0, clip_count = 0;
      for (std::size_t i = 0; i < ratios.size(); ++i) {
        ratio_sum += ratios[i];
        if (std::fabs(ratios[i] - 1.0) > cfg.clip_epsilon) clip_count += 1.0;
      }
      stats.mean_ratio += ratio_sum / double(ratios.size());
      stats.clip_fraction += clip_count / double(ratios.size());
      stats.surrogate_loss += surr_v;
      stats.value_loss += vloss_v;
      stats.entropy += ent_v;
      stats.grad_norm += pre_norm;
      stats.minibatch_updates += 1;
    }
  }
  if (stats.minibatch_updates > 0) {
    const double inv = 1.0 / double(stats.minibatch_updates);
    stats.mean_ratio *= inv;
    stats.clip_fraction *= inv;
    stats.surrogate_loss *= inv;
    stats.value_loss *= inv;
    stats.entropy *= inv;
    stats.grad_norm *= inv;
  }
  return stats;
}

std::vector<Tensor> unclipped_surrogate_gradient(PolicyParams& params, const RolloutBuffer& buffer,
                                                 std::span<const int> sample_indices,
                                                 Algorithm algorithm) {
  const SkillLayout& sk = params.cfg.skills;
  const auto mb = gather_minibatch(buffer, sk, sample_indices);
  Tape tape;
  auto actor_refs = register_actor(tape, params);
  auto out = actor_graph(tape, actor_refs, tape.constant(mb.obs));
  auto rg = ratio_graph(tape, actor_refs, out, mb, sk, algorithm);
  Var objective = tape.mean(tape.mul(rg.ratio, tape.constant(mb.advantages)));
  tape.backward(objective);
  return collect_actor_grads(tape, actor_refs);
}

double unclipped_surrogate_value(const PolicyParams& params, const RolloutBuffer& buffer,
                                 std::span<const int> sample_indices, Algorithm algorithm) {
  const SkillLayout& sk = params.cfg.skills;
  const auto mb = gather_minibatch(buffer, sk, sample_indices);
  Tape tape;
  auto actor_refs = register_actor(tape, params);
  auto out = actor_graph(tape, actor_refs, tape.constant(mb.obs));
  auto rg = ratio_graph(tape, actor_refs, out, mb, sk, algorithm);
  Var objective = tape.mean(tape.mul(rg.ratio, tape.constant(mb.advantages)));
  return tape.value(objective)[0];
}

}  // namespace dsfpo
