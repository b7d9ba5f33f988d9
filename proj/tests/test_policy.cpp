#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsfpo/errors.hpp"
#include "dsfpo/policy.hpp"
#include "dsfpo/rng.hpp"

using namespace dsfpo;

namespace {

PolicyConfig small_config(int obs_dim = 10, int state_dim = 14) {
  PolicyConfig cfg;
  cfg.obs_dim = obs_dim;
  cfg.state_dim = state_dim;
  cfg.sfe_widths = {16, 16};
  cfg.critic_widths = {16, 16};
  cfg.estimator_widths = {16, 16};
  cfg.estimator_window = 3;
  cfg.estimator_step_dim = 4;
  return cfg;
}

void zero_params(PolicyParams& p) {
  for (auto ref : p.all_params()) ref.value->fill(0.0);
}

Tensor random_obs(int n, int dim, Rng& rng) {
  Tensor t({std::size_t(n), std::size_t(dim)});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-2.0, 2.0);
  return t;
}

}  // namespace

TEST_CASE("zero network gives uniform skills and zero command mean") {
  Rng rng(1);
  auto p = PolicyParams::init(small_config(), rng);
  zero_params(p);
  Tensor obs = random_obs(3, 10, rng);
  const auto fwd = actor_forward(p, obs);
  for (std::size_t i = 0; i < obs.rows(); ++i) {
    for (int k = 0; k < 4; ++k) {
      CHECK(fwd.logits.at(i, std::size_t(k)) == 0.0);
      CHECK(fwd.weights.at(i, std::size_t(k)) == doctest::Approx(0.25).epsilon(1e-15));
    }
    for (int j = 0; j < 5; ++j) CHECK(fwd.mean.at(i, std::size_t(j)) == 0.0);
  }
}

TEST_CASE("simplex and tanh ranges hold for random networks") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = PolicyParams::init(small_config(), rng);
    Tensor obs = random_obs(8, 10, rng);
    const auto fwd = actor_forward(p, obs);
    for (std::size_t i = 0; i < obs.rows(); ++i) {
      double sum = 0;
      for (int k = 0; k < 4; ++k) {
        const double w = fwd.weights.at(i, std::size_t(k));
        CHECK(w >= 0.0);
        sum += w;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-12);
      for (int j = 0; j < 5; ++j) {
        CHECK(fwd.mean.at(i, std::size_t(j)) >= -1.0);
        CHECK(fwd.mean.at(i, std::size_t(j)) <= 1.0);
      }
    }
  }
}

TEST_CASE("forward is bit-identical across calls") {
  Rng rng(3);
  auto p = PolicyParams::init(small_config(), rng);
  Tensor obs = random_obs(4, 10, rng);
  const auto a = actor_forward(p, obs);
  const auto b = actor_forward(p, obs);
  for (std::size_t i = 0; i < a.weights.size(); ++i) CHECK(a.weights[i] == b.weights[i]);
  for (std::size_t i = 0; i < a.mean.size(); ++i) CHECK(a.mean[i] == b.mean[i]);
}

TEST_CASE("non-finite observation raises") {
  Rng rng(4);
  auto p = PolicyParams::init(small_config(), rng);
  Tensor obs = random_obs(1, 10, rng);
  obs[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(actor_forward(p, obs), NonFiniteError);
}

TEST_CASE("degenerate categorical always picks the dominant skill") {
  Rng rng(5);
  auto p = PolicyParams::init(small_config(), rng);
  zero_params(p);
  p.index_b[0] = 50.0;  // logit margin >= 50
  std::vector<double> obs(10, 0.3);
  Rng sampler(99);
  for (int i = 0; i < 200; ++i) {
    const auto a = sample_action(p, obs, sampler);
    CHECK(a.skill == 0);
  }
}

TEST_CASE("per-dim gaussian log density at the mean with unit std") {
  // Layout with a one-dimensional command slice to expose the per-dim value.
  PolicyConfig cfg = small_config();
  cfg.skills.num_skills = 5;
  cfg.skills.command_dim = 5;
  cfg.skills.command_range = {{0, 1}, {1, 1}, {2, 1}, {3, 1}, {4, 1}};
  Rng rng(6);
  auto p = PolicyParams::init(cfg, rng);
  p.log_std.fill(0.0);  // std = 1
  std::vector<double> obs(10, 0.1);
  Tensor batch({1, 10}, std::vector<double>(obs.begin(), obs.end()));
  const auto fwd = actor_forward(p, batch);
  HierAction a;
  a.skill = 0;
  a.command.assign(fwd.mean.data(), fwd.mean.data() + 5);  // sampled exactly at the mean
  const auto lp = log_prob(p, obs, a);
  for (int k = 0; k < 5; ++k)
    CHECK(lp.log_prob_command[std::size_t(k)] == doctest::Approx(-0.9189385332).epsilon(1e-10));
}

TEST_CASE("categorical sampling frequencies match the weights") {
  Rng rng(7);
  auto p = PolicyParams::init(small_config(), rng);
  zero_params(p);
  p.index_b[0] = std::log(0.7);
  p.index_b[1] = std::log(0.1);
  p.index_b[2] = std::log(0.1);
  p.index_b[3] = std::log(0.1);
  std::vector<double> obs(10, 0.0);
  Tensor batch({1, 10}, std::vector<double>(obs.begin(), obs.end()));
  const auto fwd = actor_forward(p, batch);
  CHECK(fwd.weights[0] == doctest::Approx(0.7).epsilon(1e-12));

  Rng sampler(1234);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const auto a = sample_action(p, obs, sampler);
    if (a.skill == 0) ++hits;
  }
  CHECK(std::fabs(double(hits) / n - 0.7) < 0.01);
}

TEST_CASE("log_prob agrees with an independent softmax computation") {
  Rng rng(8);
  auto p = PolicyParams::init(small_config(), rng);
  std::vector<double> obs(10);
  for (auto& x : obs) x = rng.uniform(-1.5, 1.5);
  Tensor batch({1, 10}, std::vector<double>(obs.begin(), obs.end()));
  const auto fwd = actor_forward(p, batch);

  // Direct softmax from the raw logits.
  double denom = 0;
  for (int k = 0; k < 4; ++k) denom += std::exp(fwd.logits[std::size_t(k)]);
  for (int k = 0; k < 4; ++k) {
    HierAction a;
    a.skill = k;
    a.command.assign(5, 0.0);
    const auto lp = log_prob(p, obs, a);
    const double direct = std::exp(fwd.logits[std::size_t(k)]) / denom;
    CHECK(std::fabs(std::exp(lp.log_prob_skill) - direct) < 1e-12);
    // Same softmax as the focus weights, exactly.
    CHECK(std::fabs(std::exp(lp.log_prob_skill) - fwd.weights[std::size_t(k)]) < 1e-12);
  }
}

TEST_CASE("uniform weights give log 1/4 and shared slices share log probs") {
  Rng rng(9);
  auto p = PolicyParams::init(small_config(), rng);
  zero_params(p);
  std::vector<double> obs(10, 0.2);
  HierAction a;
  a.skill = 2;
  a.command = {0.1, -0.3, 0.8, 0.2, -0.5};
  const auto lp = log_prob(p, obs, a);
  CHECK(lp.log_prob_skill == doctest::Approx(std::log(0.25)).epsilon(1e-12));
  // Dribbling skills share dims {0,1}; locomotion skills share {2,3,4}.
  CHECK(lp.log_prob_command[0] == lp.log_prob_command[1]);
  CHECK(lp.log_prob_command[2] == lp.log_prob_command[3]);
}

TEST_CASE("command means are squashed but samples are unbounded") {
  Rng rng(30);
  auto p = PolicyParams::init(small_config(), rng);
  std::vector<double> obs(10, 0.5);
  Rng sampler(31);
  int outside = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto a = sample_action(p, obs, sampler);
    for (double c : a.command)
      if (c < -1.0 || c > 1.0) ++outside;
  }
  CHECK(outside > 0);  // noise is added after the squash
}

TEST_CASE("sampling is deterministic given the rng seed") {
  Rng rng(10);
  auto p = PolicyParams::init(small_config(), rng);
  std::vector<double> obs(10, -0.4);
  Rng s1(77), s2(77);
  const auto a1 = sample_action(p, obs, s1);
  const auto a2 = sample_action(p, obs, s2);
  CHECK(a1.skill == a2.skill);
  for (int j = 0; j < 5; ++j) CHECK(a1.command[std::size_t(j)] == a2.command[std::size_t(j)]);
  CHECK(a1.log_prob_skill == a2.log_prob_skill);
}

TEST_CASE("critic") {
  Rng rng(11);
  auto p = PolicyParams::init(small_config(), rng);
  SUBCASE("zero network gives value zero") {
    zero_params(p);
    std::vector<double> s(14, 0.7);
    CHECK(critic_value(p, s) == 0.0);
  }
  SUBCASE("rejects actor-sized input") {
    Tensor obs({2, 10});
    CHECK_THROWS_WITH_AS(critic_values(p, obs), doctest::Contains("state_dim"), ShapeError);
  }
  SUBCASE("fits a constant return") {
    Tensor states = random_obs(32, 14, rng);
    Tensor target({32, 1});
    target.fill(1.0);
    auto group = [&]() {
      std::vector<ParamRef> g;
      for (std::size_t i = 0; i < p.critic_w.size(); ++i) {
        g.push_back({"critic." + std::to_string(i) + ".w", &p.critic_w[i]});
        g.push_back({"critic." + std::to_string(i) + ".b", &p.critic_b[i]});
      }
      return g;
    }();
    Adam opt({.lr = 1e-2}, group);
    for (int step = 0; step < 500; ++step) {
      Tape tape;
      auto refs = register_critic(tape, p);
      Var v = critic_graph(tape, refs, tape.constant(states));
      Var diff = tape.sub(v, tape.constant(target));
      Var loss = tape.mean(tape.mul(diff, diff));
      tape.backward(loss);
      std::vector<Tensor> grads;
      for (std::size_t i = 0; i < refs.w.size(); ++i) {
        grads.push_back(tape.grad(refs.w[i]));
        grads.push_back(tape.grad(refs.b[i]));
      }
      opt.step(group, grads);
    }
    const Tensor v = critic_values(p, states);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::fabs(v[i] - 1.0) < 0.05);
  }
}

TEST_CASE("estimator") {
  Rng rng(12);
  auto cfg = small_config();
  auto p = PolicyParams::init(cfg, rng);
  SUBCASE("short history raises") {
    std::vector<std::vector<double>> hist(2, std::vector<double>(4, 0.0));
    CHECK_THROWS_AS(estimator_forward(p, hist), ShapeError);
  }
  SUBCASE("zero loss when prediction equals target") {
    Tensor in({4, std::size_t(cfg.estimator_input_dim())});
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = rng.uniform(-1, 1);
    Tensor target({4, 6});
    for (std::size_t r = 0; r < 4; ++r) {
      const auto pred = estimator_forward_flat(
          p, {in.data() + r * in.cols(), in.cols()});
      for (std::size_t j = 0; j < 6; ++j) target.at(r, j) = pred[j];
    }
    auto group = p.estimator_params();
    Adam opt({}, group);
    const double mse = estimator_update(p, in, target, opt);
    CHECK(mse == 0.0);
  }
  SUBCASE("loss decreases on a constant target") {
    Tensor in({16, std::size_t(cfg.estimator_input_dim())});
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = rng.uniform(-1, 1);
    Tensor target({16, 6});
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = 0.5;
    auto group = p.estimator_params();
    Adam opt({.lr = 1e-3}, group);
    std::vector<double> losses;
    for (int step = 0; step < 300; ++step) losses.push_back(estimator_update(p, in, target, opt));
    // 100-step moving average must decrease monotonically.
    auto avg = [&](int s) {
      double acc = 0;
      for (int i = s; i < s + 100; ++i) acc += losses[std::size_t(i)];
      return acc / 100.0;
    };
    for (int s = 1; s + 100 <= int(losses.size()); ++s) CHECK(avg(s) <= avg(s - 1));
  }
}
