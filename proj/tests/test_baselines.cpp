#include <doctest.h>

#include <random>

#include "epipomdp/ape_v.hpp"
#include "epipomdp/baselines.hpp"
#include "epipomdp/environments.hpp"
#include "epipomdp/simulate.hpp"

using namespace epipomdp;

namespace {

EnsembleCritic members_at_one_state(const std::vector<std::vector<double>>& rows) {
  EnsembleCritic c(static_cast<int>(rows.size()), 1, static_cast<int>(rows[0].size()), 0.9, std::nullopt);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t a = 0; a < rows[k].size(); ++a) c.q(static_cast<int>(k), 0, 0, static_cast<int>(a)) = rows[k][a];
  }
  return c;
}

// Exact optimal Q tables of the chosen hypotheses as a grid-less ensemble.
EnsembleCritic exact_members(const MdpPosterior& post, const std::vector<int>& which, int horizon) {
  EnsembleCritic c(static_cast<int>(which.size()), post.num_states(), post.num_actions(), post.discount(), std::nullopt);
  for (std::size_t k = 0; k < which.size(); ++k) {
    const auto q = q_value_iteration(post.hypotheses[static_cast<std::size_t>(which[k])], horizon);
    for (int s = 0; s < post.num_states(); ++s) {
      for (int a = 0; a < post.num_actions(); ++a) {
        c.q(static_cast<int>(k), s, 0, a) = q[static_cast<std::size_t>(s * post.num_actions() + a)];
      }
    }
  }
  return c;
}

bool succeeds(const TabularMdp& m, const Policy& pi, int horizon) {
  Rng rng(0);
  const auto traj = sample_trajectory(m, pi, horizon, rng);
  return !traj.empty() && traj.back().done;
}

EnvShape shape_of(const MdpPosterior& post) {
  return {post.num_states(), post.num_actions(), post.discount(), static_cast<int>(post.size())};
}

}  // namespace

TEST_CASE("lcb penalizes disagreement") {
  const auto c = members_at_one_state({{1, 0}, {-1, 0}});
  CHECK(lcb_action(c, 0, 1.0) == 1);
  CHECK(lcb_action(c, 0, 0.0) == mean_ensemble_action(c, 0));
}

TEST_CASE("lcb with beta 0 is the mean rule") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const auto c = members_at_one_state({{u(gen), u(gen), u(gen)}, {u(gen), u(gen), u(gen)}, {u(gen), u(gen), u(gen)}});
    CHECK(lcb_action(c, 0, 0.0) == mean_ensemble_action(c, 0));
  }
}

TEST_CASE("identical members act like one") {
  const auto c = members_at_one_state({{0.3, 0.9, 0.1}, {0.3, 0.9, 0.1}});
  CHECK(lcb_action(c, 0, 2.0) == 1);
  CHECK(mean_ensemble_action(c, 0) == 1);
  CHECK(mean_ensemble_action(members_at_one_state({{0.3, 0.9, 0.1}}), 0) == 1);
}

TEST_CASE("mean rule breaks symmetric ties low") {
  CHECK(mean_ensemble_action(members_at_one_state({{1, 0}, {0, 1}}), 0) == 0);
}

TEST_CASE("markov q-learning") {
  LockedDoorsSpec spec = LockedDoorsSpec::corridor();
  spec.doors.resize(1);
  const auto one = make_locked_doors(spec);
  const auto data = generate_offline_dataset(one, MarkovPolicy::uniform(one.num_states(), 4), 300, 30, 1);
  QLearningConfig cfg;
  const auto pi = train_markov_q(data, cfg, shape_of(one));
  const auto q = q_value_iteration(one.hypotheses[0], 500);
  for (int s = 0; s < one.num_states(); ++s) {
    if (one.hypotheses[0].is_terminal(s)) continue;
    const double best = *std::max_element(q.begin() + s * 4, q.begin() + s * 4 + 4);
    for (int a = 0; a < 4; ++a) {
      if (pi.prob(s, a) == 1.0) CHECK(q[static_cast<std::size_t>(s * 4 + a)] == doctest::Approx(best));
    }
  }

  cfg.learning_rate = 0.0;
  const auto frozen = train_markov_q(data, cfg, shape_of(one));
  for (int s = 0; s < one.num_states(); ++s) CHECK(frozen.prob(s, 0) == 1.0);
}

TEST_CASE("pooled q-learning commits to one door") {
  const auto spec = LockedDoorsSpec::room();
  const auto post = make_locked_doors(spec);
  const auto data = generate_offline_dataset(post, MarkovPolicy::uniform(post.num_states(), 4), 1000, 50, 2);
  const MarkovPolicyAdapter pi(train_markov_q(data, {}, shape_of(post)));
  int wins = 0;
  for (const auto& m : post.hypotheses) wins += succeeds(m, pi, spec.horizon);
  CHECK(wins == 1);
}

TEST_CASE("mean ensemble follows the majority") {
  const auto spec = LockedDoorsSpec::room();
  const auto post = make_locked_doors(spec);
  const auto members = exact_members(post, {0, 0, 0, 1}, spec.horizon);
  const MarkovPolicyAdapter pi(mean_ensemble_policy(members));
  CHECK(succeeds(post.hypotheses[0], pi, spec.horizon));
  for (std::size_t k = 1; k < 4; ++k) CHECK_FALSE(succeeds(post.hypotheses[k], pi, spec.horizon));
}

TEST_CASE("eval-only adaptation") {
  const auto spec = LockedDoorsSpec::room();
  const auto post = make_locked_doors(spec);
  const auto members = exact_members(post, {0, 1, 2, 3}, spec.horizon);

  // no reweighting: identical to the mean rule
  const AdaptiveAgent still = make_eval_only_adaptive(members, 0.0);
  const AdaptivePolicy still_pi(still);
  const auto mean = mean_ensemble_policy(members);
  std::vector<double> probs(4);
  for (std::size_t k = 0; k < 4; ++k) {
    Rng rng(0);
    PolicyMemory mem = still_pi.initial_memory();
    for (const auto& t : sample_trajectory(post.hypotheses[k], still_pi, spec.horizon, rng)) {
      still_pi.action_probs(t.state, mem, probs);
      CHECK(probs[static_cast<std::size_t>(mean_ensemble_action(members, t.state))] == 1.0);
      CHECK(mean.prob(t.state, t.action) == 1.0);
      mem = still_pi.observe(mem, t);
    }
  }

  // frozen vertex belief: member-k greedy
  const AdaptiveAgent agent = make_eval_only_adaptive(members, 1.0);
  for (int k = 0; k < 4; ++k) {
    const AdaptivePolicy frozen(agent, nullptr, Belief::vertex(4, static_cast<std::size_t>(k)));
    const auto greedy = static_belief_policy(members, k);
    for (int s = 0; s < post.num_states(); ++s) {
      frozen.action_probs(s, frozen.initial_memory(), probs);
      for (int a = 0; a < 4; ++a) CHECK(probs[static_cast<std::size_t>(a)] == greedy.prob(s, a));
    }
  }
}
