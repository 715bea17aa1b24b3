/**
 * Copyright (c) edgesplit contributors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "edgesplit/control.hpp"
#include "edgesplit/error.hpp"
#include "support.hpp"

using namespace edgesplit;
using edgesplit::testing::max_fd_error;

namespace {

PolicyParams random_policy(Rng& rng, int actions = 9, int hidden = 32) {
  PolicyParams p = make_policy(actions, hidden, rng);
  for (double& w : p.policy_head.weights.values()) w = rng.normal(0.0, 0.5);
  for (double& b : p.policy_head.bias) b = rng.normal(0.0, 0.5);
  for (double& w : p.value_head.weights.values()) w = rng.normal(0.0, 0.5);
  return p;
}

SystemState random_state(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

// Two-armed bandit: arm 1 pays 1, arm 0 pays 0. Returns the greedy arm's
// probability after `steps` interactions.
double bandit_run(std::uint64_t seed, int steps) {
  Rng rng(seed);
  PolicyParams policy = make_policy(2, 16, rng);
  PpoOptimizer opt;
  PpoConfig cfg;
  const SystemState s{0.5, 0.5, 0.5};
  std::vector<Transition> batch;
  for (int step = 0; step < steps; ++step) {
    const auto choice = select_action(policy, s, SelectMode::kSample, rng, 1000, 50);
    const double reward = choice.action.k == 1 ? 1.0 : 0.0;
    batch.push_back({s, choice.action.k, choice.log_prob, reward, choice.value, true});
    if (batch.size() == 64) {
      ppo_update(policy, opt, batch, cfg);
      batch.clear();
    }
  }
  return policy_forward(policy, s).probs[1];
}

}  // namespace

TEST_CASE("observe normalises into the unit cube") {
  const double lnC = std::log(64.0);
  const auto full = observe(lnC, lnC, 100.0, 50.0, 50.0);
  CHECK(full.uncertainty_norm == doctest::Approx(1.0));
  CHECK(full.cpu_util == doctest::Approx(1.0));
  CHECK(full.bandwidth_norm == doctest::Approx(1.0));
  const auto zero = observe(0.0, lnC, 0.0, 0.0, 50.0);
  CHECK(zero.as_vector() == Vector{0.0, 0.0, 0.0});
  CHECK(observe(0.5 * lnC, lnC, 10, 10, 50).uncertainty_norm == doctest::Approx(0.5));
}

TEST_CASE("compute_reward") {
  RewardWeights w;
  CHECK(compute_reward(1.0, 500.0, 150.0, w) == doctest::Approx(2.0));
  CHECK(compute_reward(0.0, 0.0, 0.0, w) == 0.0);
  CHECK(compute_reward(0.7, 250.0, 75.0, w) == doctest::Approx(3.0));
}

TEST_CASE("policy_forward") {
  Rng rng(1);
  const PolicyParams fresh = make_policy(9, 32, rng);
  const auto out = policy_forward(fresh, SystemState{0.3, 0.2, 0.9});
  for (double p : out.probs) CHECK(p == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
  CHECK(out.value == 0.0);
  for (int t = 0; t < 50; ++t) {
    const auto o = policy_forward(random_policy(rng), random_state(rng));
    double total = 0.0;
    for (std::size_t a = 0; a < o.probs.size(); ++a) {
      total += o.probs[a];
      CHECK(std::abs(std::log(o.probs[a]) - o.log_probs[a]) < 1e-9);
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK(std::isfinite(o.value));
  }
}

TEST_CASE("log-prob gradient matches finite differences") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const PolicyParams p = random_policy(rng, 9, 8);
    const SystemState s = random_state(rng);
    const int a = static_cast<int>(rng.uniform_int(0, 8));
    auto f = [&](const Vector& flat) {
      PolicyParams q = p;
      q.assign(flat);
      return policy_forward(q, s).log_probs[static_cast<std::size_t>(a)];
    };
    CHECK(max_fd_error(f, p.flatten(), log_prob_gradient(p, s, a)) < 1e-4);
  }
}

TEST_CASE("select_action") {
  Rng rng(3);
  PolicyParams p = make_policy(3, 4, rng);
  p.policy_head.bias = {std::log(0.1), std::log(0.9), std::log(1e-9)};
  const SystemState s{0.1, 0.1, 0.1};
  CHECK(select_action(p, s, SelectMode::kGreedy, rng, 100).action.k == 1);
  for (int f = 0; f < 50; ++f) {
    const auto c = select_action(p, s, SelectMode::kSample, rng, f);
    CHECK(c.action.k == 2);
    CHECK(c.cold_start);
  }
  const PolicyParams r = random_policy(rng, 5, 8);
  const auto probs = policy_forward(r, s).probs;
  std::vector<double> counts(5, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[static_cast<std::size_t>(select_action(r, s, SelectMode::kSample, rng, 60).action.k)] += 1;
  for (std::size_t a = 0; a < 5; ++a) CHECK(std::abs(counts[a] / draws - probs[a]) < 0.01);
}

TEST_CASE("compute_gae") {
  std::vector<Transition> traj{{{}, 0, 0, 1.0, 0.5, false}, {{}, 0, 0, 2.0, 0.25, true}};
  Vector adv, ret;
  compute_gae(traj, 0.9, 0.8, 100.0, adv, ret);
  const double d1 = 2.0 - 0.25;
  const double d0 = 1.0 + 0.9 * 0.25 - 0.5;
  CHECK(adv[1] == doctest::Approx(d1));
  CHECK(adv[0] == doctest::Approx(d0 + 0.9 * 0.8 * d1));
  CHECK(ret[0] == doctest::Approx(adv[0] + 0.5));
}

TEST_CASE("ppo_update: zero advantages leave the policy head untouched") {
  Rng rng(4);
  PolicyParams p = random_policy(rng, 4, 8);
  const SystemState s{0.2, 0.4, 0.6};
  const double v = policy_forward(p, s).value;
  const auto lp = policy_forward(p, s).log_probs;
  // reward equals the value estimate, so every advantage is zero
  std::vector<Transition> traj{{s, 1, lp[1], v, v, true}, {s, 2, lp[2], v, v, true}};
  PpoOptimizer opt;
  PpoConfig cfg;
  const DenseLayer head_before = p.policy_head;
  const auto diag = ppo_update(p, opt, traj, cfg);
  for (double a : diag.advantages) CHECK(a == 0.0);
  CHECK(p.policy_head.weights.values() == head_before.weights.values());
  CHECK(p.policy_head.bias == head_before.bias);
}

TEST_CASE("ppo_update: positive advantage raises the taken action's probability") {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    PolicyParams p = random_policy(rng, 5, 8);
    const SystemState s = random_state(rng);
    const int a = static_cast<int>(rng.uniform_int(0, 4));
    const auto before = policy_forward(p, s);
    std::vector<Transition> traj{{s, a, before.log_probs[static_cast<std::size_t>(a)], before.value + 1.0, before.value, true}};
    PpoOptimizer opt;
    PpoConfig cfg;
    cfg.value_coef = 0.0;
    ppo_update(p, opt, traj, cfg);
    CHECK(policy_forward(p, s).probs[static_cast<std::size_t>(a)] >= before.probs[static_cast<std::size_t>(a)]);
  }
}

TEST_CASE("ppo_update: ratios stay near the clip range") {
  Rng rng(6);
  PolicyParams p = random_policy(rng, 9, 32);
  std::vector<Transition> traj;
  for (int i = 0; i < 200; ++i) {
    const SystemState s = random_state(rng);
    const auto c = select_action(p, s, SelectMode::kSample, rng, 100);
    traj.push_back({s, c.action.k, c.log_prob, rng.normal(), c.value, i % 20 == 19});
  }
  PpoOptimizer opt;
  PpoConfig cfg;
  const auto diag = ppo_update(p, opt, traj, cfg);
  int inside = 0;
  for (double r : diag.final_ratios) inside += r >= 1 - 2 * cfg.clip && r <= 1 + 2 * cfg.clip;
  CHECK(inside >= 0.99 * static_cast<double>(traj.size()));
  CHECK_THROWS_AS(ppo_update(p, opt, {}, cfg), ConfigurationError);
  traj[0].reward = std::nan("");
  CHECK_THROWS_AS(ppo_update(p, opt, traj, cfg), TrainingDivergenceError);
}

TEST_CASE("ppo solves a two-armed bandit") {
  int successes = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) successes += bandit_run(seed, 5000) > 0.95;
  CHECK(successes >= 9);
}

TEST_CASE("baselines") {
  const RuleThresholds th{0.4, 0.6};
  CHECK(rule_based_action({0, 0.5, 0.5}, th, 8).k == 0);
  CHECK(rule_based_action({0, 0.5, 0.3}, th, 8).k == 8);
  CHECK(rule_based_action({0, 0.5, 0.4}, th, 8).k == 8);
  CHECK(rule_based_action({0, 0.6, 0.9}, th, 8).k == 8);
  CHECK(static_action(3, 8).k == 3);
  CHECK(static_action(0, 8).k == 0);
  CHECK(static_action(8, 8).k == 8);
  CHECK_THROWS_AS(static_action(9, 8), ConfigurationError);
}

TEST_CASE("quantization coupling") {
  CHECK(couple_quantization({3, false}, 8, 300.0, 500.0).quantize);
  CHECK_FALSE(couple_quantization({3, false}, 8, 200.0, 500.0).quantize);
  CHECK_FALSE(couple_quantization({8, false}, 8, 900.0, 500.0).quantize);
}

TEST_CASE("atomic switching") {
  AtomicSwitch sw(10, {8, false});
  sw.commit(10, {3, false});
  CHECK(sw.active().k == 3);
  sw.commit(13, {3, false});
  CHECK_THROWS_AS(sw.commit(14, {0, false}), InvalidStateError);
  CHECK(sw.active().k == 3);
}

TEST_CASE("policy checkpoint round trip") {
  Rng rng(7);
  const PolicyParams p = random_policy(rng);
  const auto path = std::filesystem::temp_directory_path() / "edgesplit_policy_test.bin";
  save_policy(p, path);
  const PolicyParams q = load_policy(path);
  CHECK(q.flatten() == p.flatten());
  CHECK(q.num_actions() == 9);
  CHECK(std::filesystem::file_size(path) == 20 + 8 * p.parameter_count());
  std::filesystem::remove(path);
  auto bytes = serialize_policy(p);
  bytes.pop_back();
  CHECK_THROWS_AS(deserialize_policy(bytes), ConfigurationError);
}
