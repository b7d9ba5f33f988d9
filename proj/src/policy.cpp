#include "dsfpo/policy.hpp"

#include <algorithm>
#include <cmath>

#include "dsfpo/errors.hpp"

namespace dsfpo {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

// Columns of an orthogonal-ish matrix via modified Gram-Schmidt on a Gaussian
// draw, scaled by `gain`. Rows are orthonormalized instead when out > in.
Tensor orthogonal_init(std::size_t in, std::size_t out, double gain, Rng& rng) {
  const bool by_cols = in >= out;
  const std::size_t nvec = by_cols ? out : in;
  const std::size_t dim = by_cols ? in : out;
  std::vector<std::vector<double>> vecs(nvec, std::vector<double>(dim));
  for (auto& v : vecs)
    for (auto& x : v) x = rng.normal();
  for (std::size_t i = 0; i < nvec; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < dim; ++k) dot += vecs[i][k] * vecs[j][k];
      for (std::size_t k = 0; k < dim; ++k) vecs[i][k] -= dot * vecs[j][k];
    }
    double norm = 0;
    for (double x : vecs[i]) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;  // degenerate draw; leave direction as-is
    for (auto& x : vecs[i]) x /= norm;
  }
  Tensor w({in, out});
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t j = 0; j < out; ++j)
      w.at(i, j) = gain * (by_cols ? vecs[j][i] : vecs[i][j]);
  return w;
}

void init_mlp(std::vector<Tensor>& ws, std::vector<Tensor>& bs, std::size_t in,
              const std::vector<int>& widths, std::size_t out, double out_gain, Rng& rng) {
  ws.clear();
  bs.clear();
  std::size_t prev = in;
  for (int w : widths) {
    ws.push_back(orthogonal_init(prev, std::size_t(w), std::sqrt(2.0), rng));
    bs.push_back(Tensor({std::size_t(w)}));
    prev = std::size_t(w);
  }
  ws.push_back(orthogonal_init(prev, out, out_gain, rng));
  bs.push_back(Tensor({out}));
}

void push_refs(std::vector<ParamRef>& out, const std::string& prefix, std::vector<Tensor>& ws,
               std::vector<Tensor>& bs) {
  for (std::size_t i = 0; i < ws.size(); ++i) {
    out.push_back({prefix + "." + std::to_string(i) + ".w", &ws[i]});
    out.push_back({prefix + "." + std::to_string(i) + ".b", &bs[i]});
  }
}

}  // namespace

std::vector<std::pair<int, int>> SkillLayout::categories() const {
  std::vector<std::pair<int, int>> cats;
  for (const auto& r : command_range)
    if (std::find(cats.begin(), cats.end(), r) == cats.end()) cats.push_back(r);
  return cats;
}

std::vector<int> SkillLayout::skill_category() const {
  const auto cats = categories();
  std::vector<int> out(command_range.size());
  for (std::size_t k = 0; k < command_range.size(); ++k)
    out[k] = int(std::find(cats.begin(), cats.end(), command_range[k]) - cats.begin());
  return out;
}

void SkillLayout::validate() const {
  if (num_skills <= 0 || command_dim <= 0)
    throw ConfigError("skill layout: num_skills and command_dim must be positive");
  if (int(command_range.size()) != num_skills)
    throw ConfigError("skill layout: command_range entries != num_skills");
  for (const auto& [start, len] : command_range)
    if (start < 0 || len <= 0 || start + len > command_dim)
      throw ConfigError("skill layout: command slice [" + std::to_string(start) + "," +
                        std::to_string(start + len) + ") outside command vector");
  // Distinct slices must partition the command vector so the joint command
  // density factorizes over categories.
  std::vector<int> cover(std::size_t(command_dim), 0);
  for (const auto& [start, len] : categories())
    for (int j = start; j < start + len; ++j) cover[std::size_t(j)] += 1;
  for (int j = 0; j < command_dim; ++j)
    if (cover[std::size_t(j)] != 1)
      throw ConfigError("skill layout: command dim " + std::to_string(j) +
                        " must be covered by exactly one category");
}

PolicyParams PolicyParams::init(const PolicyConfig& cfg, Rng& rng) {
  cfg.skills.validate();
  if (cfg.obs_dim <= 0 || cfg.state_dim <= 0)
    throw ConfigError("policy config: obs_dim/state_dim unset");
  PolicyParams p;
  p.cfg = cfg;

  // SFE trunk; output heads at 0.01 gain so the initial skill distribution is
  // near-uniform and commands near zero.
  std::size_t prev = std::size_t(cfg.obs_dim);
  for (int w : cfg.sfe_widths) {
    p.sfe_w.push_back(orthogonal_init(prev, std::size_t(w), std::sqrt(2.0), rng));
    p.sfe_b.push_back(Tensor({std::size_t(w)}));
    prev = std::size_t(w);
  }
  p.index_w = orthogonal_init(prev, std::size_t(cfg.skills.num_skills), 0.01, rng);
  p.index_b = Tensor({std::size_t(cfg.skills.num_skills)});
  p.cmd_w = orthogonal_init(prev, std::size_t(cfg.skills.command_dim), 0.01, rng);
  p.cmd_b = Tensor({std::size_t(cfg.skills.command_dim)});
  p.log_std = Tensor({std::size_t(cfg.skills.command_dim)});
  p.log_std.fill(std::log(cfg.init_std));

  init_mlp(p.critic_w, p.critic_b, std::size_t(cfg.state_dim), cfg.critic_widths, 1, 1.0, rng);
  init_mlp(p.est_w, p.est_b, std::size_t(cfg.estimator_input_dim()), cfg.estimator_widths,
           std::size_t(cfg.estimator_output_dim), 1.0, rng);
  return p;
}

std::vector<ParamRef> PolicyParams::actor_params() {
  std::vector<ParamRef> out;
  push_refs(out, "sfe", sfe_w, sfe_b);
  out.push_back({"index.w", &index_w});
  out.push_back({"index.b", &index_b});
  out.push_back({"cmd.w", &cmd_w});
  out.push_back({"cmd.b", &cmd_b});
  out.push_back({"log_std", &log_std});
  return out;
}

std::vector<ParamRef> PolicyParams::rl_params() {
  auto out = actor_params();
  push_refs(out, "critic", critic_w, critic_b);
  return out;
}

std::vector<ParamRef> PolicyParams::estimator_params() {
  std::vector<ParamRef> out;
  push_refs(out, "est", est_w, est_b);
  return out;
}

std::vector<ParamRef> PolicyParams::all_params() {
  auto out = rl_params();
  auto est = estimator_params();
  out.insert(out.end(), est.begin(), est.end());
  return out;
}

ActorGraphRefs register_actor(Tape& tape, const PolicyParams& p) {
  ActorGraphRefs r;
  for (std::size_t i = 0; i < p.sfe_w.size(); ++i) {
    r.sfe_w.push_back(tape.leaf(p.sfe_w[i]));
    r.sfe_b.push_back(tape.leaf(p.sfe_b[i]));
  }
  r.index_w = tape.leaf(p.index_w);
  r.index_b = tape.leaf(p.index_b);
  r.cmd_w = tape.leaf(p.cmd_w);
  r.cmd_b = tape.leaf(p.cmd_b);
  r.log_std = tape.leaf(p.log_std);
  return r;
}

ActorGraphOut actor_graph(Tape& tape, const ActorGraphRefs& refs, Var obs) {
  Var h = obs;
  for (std::size_t i = 0; i < refs.sfe_w.size(); ++i)
    h = tape.elu(tape.add(tape.matmul(h, refs.sfe_w[i]), refs.sfe_b[i]));
  ActorGraphOut out;
  out.features = h;
  out.logits = tape.add(tape.matmul(h, refs.index_w), refs.index_b);
  out.log_probs = tape.log_softmax(out.logits);
  out.weights = tape.exp(out.log_probs);
  out.mean = tape.tanh(tape.add(tape.matmul(h, refs.cmd_w), refs.cmd_b));
  return out;
}

CriticGraphRefs register_critic(Tape& tape, const PolicyParams& p) {
  CriticGraphRefs r;
  for (std::size_t i = 0; i < p.critic_w.size(); ++i) {
    r.w.push_back(tape.leaf(p.critic_w[i]));
    r.b.push_back(tape.leaf(p.critic_b[i]));
  }
  return r;
}

Var critic_graph(Tape& tape, const CriticGraphRefs& refs, Var state) {
  Var h = state;
  for (std::size_t i = 0; i + 1 < refs.w.size(); ++i)
    h = tape.elu(tape.add(tape.matmul(h, refs.w[i]), refs.b[i]));
  return tape.add(tape.matmul(h, refs.w.back()), refs.b.back());
}

ActorForward actor_forward(const PolicyParams& p, const Tensor& obs_batch) {
  if (!obs_batch.all_finite()) throw NonFiniteError("observation", "non-finite entries");
  if (obs_batch.cols() != std::size_t(p.cfg.obs_dim))
    throw ShapeError("actor_forward: observation width " + std::to_string(obs_batch.cols()) +
                     " != obs_dim " + std::to_string(p.cfg.obs_dim));
  Tape tape;
  auto refs = register_actor(tape, p);
  auto g = actor_graph(tape, refs, tape.constant(obs_batch));
  ActorForward out;
  out.logits = tape.value(g.logits);
  out.log_probs = tape.value(g.log_probs);
  out.weights = tape.value(g.weights);
  out.mean = tape.value(g.mean);
  return out;
}

std::vector<double> command_log_probs(const PolicyConfig& cfg, const double* mean_row,
                                      const Tensor& log_std, std::span<const double> command) {
  std::vector<double> out(std::size_t(cfg.skills.num_skills));
  for (int k = 0; k < cfg.skills.num_skills; ++k) {
    const auto [start, len] = cfg.skills.command_range[std::size_t(k)];
    double lp = 0;
    for (int j = start; j < start + len; ++j) {
      const double z = (command[std::size_t(j)] - mean_row[j]) * std::exp(-log_std[std::size_t(j)]);
      lp += -0.5 * kLog2Pi - log_std[std::size_t(j)] - 0.5 * z * z;
    }
    out[std::size_t(k)] = lp;
  }
  return out;
}

namespace {

HierAction action_from_row(const PolicyParams& p, const ActorForward& fwd, std::size_t row,
                           Rng* rng) {
  const int K = p.cfg.skills.num_skills;
  const int C = p.cfg.skills.command_dim;
  HierAction a;
  a.focus_weights.assign(fwd.weights.data() + row * std::size_t(K),
                         fwd.weights.data() + (row + 1) * std::size_t(K));
  if (rng) {
    const double u = rng->uniform();
    double cum = 0;
    a.skill = K - 1;
    for (int k = 0; k < K; ++k) {
      cum += a.focus_weights[std::size_t(k)];
      if (u < cum) {
        a.skill = k;
        break;
      }
    }
  } else {
    a.skill = int(std::max_element(a.focus_weights.begin(), a.focus_weights.end()) -
                  a.focus_weights.begin());
  }
  a.log_prob_skill = fwd.log_probs[row * std::size_t(K) + std::size_t(a.skill)];
  const double* mu = fwd.mean.data() + row * std::size_t(C);
  a.command.resize(std::size_t(C));
  for (int j = 0; j < C; ++j) {
    const double sigma = std::exp(p.log_std[std::size_t(j)]);
    a.command[std::size_t(j)] = rng ? mu[j] + sigma * rng->normal() : mu[j];
  }
  a.log_prob_command = command_log_probs(p.cfg, mu, p.log_std, a.command);
  return a;
}

}  // namespace

HierAction sample_action(const PolicyParams& p, std::span<const double> obs, Rng& rng) {
  Tensor batch({1, obs.size()}, std::vector<double>(obs.begin(), obs.end()));
  const auto fwd = actor_forward(p, batch);
  return action_from_row(p, fwd, 0, &rng);
}

std::vector<HierAction> sample_actions(const PolicyParams& p, const Tensor& obs_batch,
                                       std::span<Rng> rngs) {
  const auto fwd = actor_forward(p, obs_batch);
  if (rngs.size() != obs_batch.rows())
    throw ShapeError("sample_actions: rng count != batch rows");
  std::vector<HierAction> out;
  out.reserve(obs_batch.rows());
  for (std::size_t i = 0; i < obs_batch.rows(); ++i)
    out.push_back(action_from_row(p, fwd, i, &rngs[i]));
  return out;
}

HierAction greedy_action(const PolicyParams& p, std::span<const double> obs) {
  Tensor batch({1, obs.size()}, std::vector<double>(obs.begin(), obs.end()));
  const auto fwd = actor_forward(p, batch);
  return action_from_row(p, fwd, 0, nullptr);
}

ActionLogProbs log_prob(const PolicyParams& p, std::span<const double> obs,
                        const HierAction& action) {
  for (double c : action.command)
    if (!std::isfinite(c)) throw NonFiniteError("action.command", "non-finite entries");
  Tensor batch({1, obs.size()}, std::vector<double>(obs.begin(), obs.end()));
  const auto fwd = actor_forward(p, batch);
  ActionLogProbs out;
  out.log_prob_skill = fwd.log_probs[std::size_t(action.skill)];
  out.log_prob_command = command_log_probs(p.cfg, fwd.mean.data(), p.log_std, action.command);
  return out;
}

Tensor critic_values(const PolicyParams& p, const Tensor& state_batch) {
  if (state_batch.cols() != std::size_t(p.cfg.state_dim))
    throw ShapeError("critic: input width " + std::to_string(state_batch.cols()) +
                     " != state_dim " + std::to_string(p.cfg.state_dim) +
                     " (actor-only observation?)");
  if (!state_batch.all_finite()) throw NonFiniteError("state", "non-finite entries");
  Tape tape;
  auto refs = register_critic(tape, p);
  Var out = critic_graph(tape, refs, tape.constant(state_batch));
  const Tensor& v = tape.value(out);  // [n,1]
  Tensor values({v.rows()});
  for (std::size_t i = 0; i < v.rows(); ++i) values[i] = v[i];
  return values;
}

double critic_value(const PolicyParams& p, std::span<const double> state) {
  Tensor batch({1, state.size()}, std::vector<double>(state.begin(), state.end()));
  return critic_values(p, batch)[0];
}

namespace {

std::vector<double> mlp_eval(const std::vector<Tensor>& ws, const std::vector<Tensor>& bs,
                             std::span<const double> input) {
  std::vector<double> h(input.begin(), input.end());
  for (std::size_t layer = 0; layer < ws.size(); ++layer) {
    const Tensor& w = ws[layer];
    const Tensor& b = bs[layer];
    std::vector<double> next(w.shape()[1]);
    for (std::size_t j = 0; j < next.size(); ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < h.size(); ++i) acc += h[i] * w.at(i, j);
      next[j] = layer + 1 < ws.size() ? (acc > 0 ? acc : std::expm1(acc)) : acc;
    }
    h = std::move(next);
  }
  return h;
}

}  // namespace

std::vector<double> estimator_forward(const PolicyParams& p,
                                      std::span<const std::vector<double>> history) {
  if (int(history.size()) < p.cfg.estimator_window)
    throw ShapeError("estimator: history has " + std::to_string(history.size()) +
                     " steps, window needs " + std::to_string(p.cfg.estimator_window));
  std::vector<double> flat;
  flat.reserve(std::size_t(p.cfg.estimator_input_dim()));
  for (std::size_t i = history.size() - std::size_t(p.cfg.estimator_window); i < history.size();
       ++i) {
    if (int(history[i].size()) != p.cfg.estimator_step_dim)
      throw ShapeError("estimator: step feature size " + std::to_string(history[i].size()) +
                       " != " + std::to_string(p.cfg.estimator_step_dim));
    flat.insert(flat.end(), history[i].begin(), history[i].end());
  }
  return mlp_eval(p.est_w, p.est_b, flat);
}

std::vector<double> estimator_forward_flat(const PolicyParams& p,
                                           std::span<const double> flat_window) {
  if (int(flat_window.size()) != p.cfg.estimator_input_dim())
    throw ShapeError("estimator: flattened window size " + std::to_string(flat_window.size()) +
                     " != " + std::to_string(p.cfg.estimator_input_dim()));
  return mlp_eval(p.est_w, p.est_b, flat_window);
}

double estimator_update(PolicyParams& p, const Tensor& inputs, const Tensor& targets,
                        Adam& optimizer) {
  if (inputs.cols() != std::size_t(p.cfg.estimator_input_dim()) ||
      targets.cols() != std::size_t(p.cfg.estimator_output_dim) ||
      inputs.rows() != targets.rows())
    throw ShapeError("estimator_update: inputs " + inputs.shape_str() + " targets " +
                     targets.shape_str());
  Tape tape;
  std::vector<Var> wv, bv;
  for (std::size_t i = 0; i < p.est_w.size(); ++i) {
    wv.push_back(tape.leaf(p.est_w[i]));
    bv.push_back(tape.leaf(p.est_b[i]));
  }
  Var h = tape.constant(inputs);
  for (std::size_t i = 0; i < wv.size(); ++i) {
    h = tape.add(tape.matmul(h, wv[i]), bv[i]);
    if (i + 1 < wv.size()) h = tape.elu(h);
  }
  Var diff = tape.sub(h, tape.constant(targets));
  Var loss = tape.mean(tape.mul(diff, diff));
  const double mse = tape.value(loss)[0];
  tape.backward(loss);

  auto group = p.estimator_params();
  std::vector<Tensor> grads;
  grads.reserve(group.size());
  for (std::size_t i = 0; i < wv.size(); ++i) {
    grads.push_back(tape.grad(wv[i]));
    grads.push_back(tape.grad(bv[i]));
  }
  optimizer.step(group, grads);
  return mse;
}

}  // namespace dsfpo
